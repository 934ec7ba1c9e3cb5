#include "threedpm/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "threedpm/geom.hpp"
#include "threedpm/random.hpp"

namespace threedpm::estimate {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kPowerFloor = 1e-12;
}  // namespace

ConventionalResult conventional_estimate(const std::vector<double>& profile, const PatternTemplate& templ) {
    if (templ.angles.empty() || templ.angles.size() != templ.profiles.size())
        throw DomainError("conventional_estimate: template angles and profiles disagree");
    ConventionalResult best;
    best.score = -1.0;
    best.multiplicity = 0;
    for (std::size_t i = 0; i < templ.angles.size(); ++i) {
        const auto& t = templ.profiles[i];
        if (t.size() != profile.size()) throw DomainError("conventional_estimate: profile length mismatch");
        double d2 = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j) d2 += (t[j] - profile[j]) * (t[j] - profile[j]);
        const double c = d2 > 0.0 ? 1.0 / d2 : std::numeric_limits<double>::infinity();
        const double a = templ.angles[i];
        if (c > best.score) {
            best = {a, i, c, 1};
        } else if (c == best.score) {
            ++best.multiplicity;
            if (std::abs(a) < std::abs(best.angle)) {
                best.angle = a;
                best.index = i;
            }
        }
    }
    return best;
}

std::vector<double> difference(const std::vector<double>& p) {
    std::vector<double> d;
    for (std::size_t i = 1; i < p.size(); ++i) d.push_back(p[i] - p[i - 1]);
    return d;
}

std::vector<double> dipole_profile(double elevation, const std::vector<double>& rotations) {
    std::vector<double> db;
    db.reserve(rotations.size());
    for (double r : rotations) {
        const double c = std::cos(elevation + r);
        db.push_back(10.0 * std::log10(std::max(c * c, kPowerFloor)));
    }
    return difference(db);
}

PatternTemplate dipole_template(const std::vector<double>& candidates, const std::vector<double>& rotations) {
    PatternTemplate t;
    t.angles = candidates;
    for (double a : candidates) t.profiles.push_back(dipole_profile(a, rotations));
    return t;
}

std::string SweepResult::to_csv() const {
    std::string out = "l,angle_rad,p_r_dbm\n";
    char buf[96];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g\n", s.l, s.angle_rad, s.p_r_dbm);
        out += buf;
    }
    return out;
}

SweepResult sweep_azimuth(const SweepScenario& sim, const BeamSweepConfig& config) {
    if (config.steps < 2) throw DomainError("sweep_azimuth: need at least 2 steps");
    if (!std::isfinite(config.theta_est)) throw DomainError("sweep_azimuth: theta_est must be finite");
    sim.channel.validate();

    const geom::Vec3 u{std::cos(sim.true_elevation) * std::cos(sim.true_azimuth),
                       std::cos(sim.true_elevation) * std::sin(sim.true_azimuth), std::sin(sim.true_elevation)};
    const double tilt = 0.5 * kPi - config.theta_est;
    const geom::RotationMatrix steer =
        config.steering == SteeringAxis::pitch ? geom::rot_y(tilt) : geom::rot_x(-tilt);

    const double p_t = channel::dbm_to_watts(sim.channel.p_t_dbm);
    const double c = channel::large_scale_gain(sim.channel, sim.distance);
    const double g_t = antenna::kDipoleDirectivity;
    const double budget = p_t * c * g_t;
    const bool noisy = std::isfinite(sim.snr_db);
    const double noise = noisy ? budget * antenna::kDipoleDirectivity / std::pow(10.0, sim.snr_db / 10.0) : 0.0;

    Rng rng(sim.seed);
    auto fade = [&] {
        return sim.fading ? channel::draw_rician_tap_parts(sim.channel, sim.true_elevation, rng).total()
                          : channel::cplx(1.0, 0.0);
    };
    channel::cplx g = fade();

    SweepResult res;
    res.degenerate = config.steps == 2;
    const geom::Vec3 sweep_axis = config.axis == SweepAxis::z   ? geom::Vec3{0, 0, 1}
                                  : config.axis == SweepAxis::y ? geom::Vec3{0, 1, 0}
                                                                : geom::Vec3{1, 0, 0};
    res.modulo_pi = std::abs(geom::dot(steer.axis(2), sweep_axis)) < 1e-12;
    std::vector<double> watts(config.steps);
    std::vector<geom::Vec3> axes(config.steps);
    for (int l = 0; l < config.steps; ++l) {
        const double angle = 2.0 * kPi * l / config.steps;
        const geom::RotationMatrix sweep = config.axis == SweepAxis::z   ? geom::rot_z(angle)
                                           : config.axis == SweepAxis::y ? geom::rot_y(angle)
                                                                         : geom::rot_x(angle);
        const geom::RotationMatrix orient = sweep * steer;
        axes[l] = orient.axis(2);
        if (!config.frozen_fading && l > 0) g = fade();
        const auto a = geom::body_angles(orient, u);
        const double amp2 = budget * antenna::power_gain(sim.rx_antenna, a.azimuth, a.polar);
        channel::cplx y = std::sqrt(amp2) * g;
        if (noisy) y += rng.complex_normal(noise);
        watts[l] = std::norm(y);
        res.samples.push_back({l, angle, channel::watts_to_dbm(watts[l])});
    }
    const auto [lo, hi] = std::minmax_element(watts.begin(), watts.end());
    if (*hi - *lo <= 1e-9 * *hi) throw AmbiguityError("sweep_azimuth: flat sweep, no distinguishable null");
    res.index = static_cast<std::size_t>(lo - watts.begin());
    const geom::Vec3& ax = axes[res.index];
    res.estimate = geom::wrap_pi(std::atan2(ax.y, ax.x));
    return res;
}

int elevation_bin(double angle, int n_way) {
    if (n_way < 1) throw DomainError("elevation_bin: n_way must be >= 1");
    const int b = static_cast<int>(std::floor((angle + 0.5 * kPi) / (kPi / n_way)));
    return std::clamp(b, 0, n_way - 1);
}

AngleErrorReport angle_error_report(const std::vector<double>& predictions, const std::vector<double>& truths,
                                    int n_way) {
    if (predictions.size() != truths.size()) throw DomainError("angle_error_report: length mismatch");
    AngleErrorReport r;
    r.resolution = kPi / n_way;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = std::abs(predictions[i] - truths[i]);
        (elevation_bin(predictions[i], n_way) == elevation_bin(truths[i], n_way) ? r.eps1_samples : r.eps0_samples)
            .push_back(e);
    }
    return r;
}

}  // namespace threedpm::estimate
