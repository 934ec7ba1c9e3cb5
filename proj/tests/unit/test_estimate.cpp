#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "threedpm/errors.hpp"
#include "threedpm/estimate.hpp"
#include "threedpm/geom.hpp"
#include "threedpm/random.hpp"

using namespace threedpm;
using namespace threedpm::estimate;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> rotations() {
    std::vector<double> r;
    for (double d : {0.0, 10.0, 20.0, 30.0, 40.0}) r.push_back(geom::deg_to_rad(d));
    return r;
}

std::vector<double> grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (double a = lo; a <= hi + 1e-12; a += step) g.push_back(a);
    return g;
}

// Elevation of the default (100, 10, 5) m link.
double link_elevation() { return geom::link_geometry({{0, 0, 0}, {}}, {{100, 10, 5}, {}}).phi_theta; }

// Distance between two axial directions, i.e. modulo pi.
double axial_distance(double a, double b) {
    const double d = std::fmod(std::abs(a - b), kPi);
    return std::min(d, kPi - d);
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_SUITE("estimate") {
    TEST_CASE("conventional estimator recovers its own profiles") {
        const auto rot = rotations();
        const double step = 0.01;
        const auto templ = dipole_template(grid(-1.2, 1.2, step), rot);
        for (double truth : {0.3, -0.45, 0.0, 0.777, -1.05}) {
            const auto r = conventional_estimate(dipole_profile(truth, rot), templ);
            CHECK(std::abs(r.angle - truth) <= step);
        }
    }

    TEST_CASE("exact template match and ties") {
        const auto rot = rotations();
        const auto templ = dipole_template({-0.2, 0.1, 0.3, 0.5}, rot);
        const auto r = conventional_estimate(dipole_profile(0.3, rot), templ);
        CHECK(std::isinf(r.score));
        CHECK(r.angle == 0.3);
        CHECK(r.index == 2);
        CHECK(r.multiplicity == 1);

        PatternTemplate twins;
        twins.angles = {0.5, -0.2, 0.4};
        twins.profiles = {{1.0, 2.0}, {1.0, 2.0}, {0.0, 0.0}};
        const auto t = conventional_estimate({1.0, 2.0}, twins);
        CHECK(t.angle == -0.2);
        CHECK(t.multiplicity == 2);
        CHECK_THROWS_AS(conventional_estimate({1.0}, twins), DomainError);
        CHECK_THROWS_AS(conventional_estimate({1.0}, PatternTemplate{}), DomainError);
    }

    TEST_CASE("differencing removes constant offsets") {
        const auto rot = rotations();
        const auto templ = dipole_template(grid(-1.2, 1.2, 0.02), rot);
        Rng rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            const double truth = rng.uniform(-1.0, 1.0);
            std::vector<double> raw;
            for (double r : rot) raw.push_back(10.0 * std::log10(std::pow(std::cos(truth + r), 2)) + rng.normal(0, 0.3));
            const auto base = conventional_estimate(difference(raw), templ);
            for (double offset : {-40.0, -3.5, 0.25, 17.0, 90.0}) {
                auto shifted = raw;
                for (auto& x : shifted) x += offset;
                const auto r = conventional_estimate(difference(shifted), templ);
                CHECK(r.index == base.index);
            }
        }
        CHECK(difference({1.0, 4.0, 2.0}) == std::vector<double>{3.0, -2.0});
        CHECK(difference({5.0}).empty());
    }

    TEST_CASE("noiseless sweep error is bounded by the step") {
        BeamSweepConfig cfg;
        cfg.steps = 360;
        SweepScenario sim;
        sim.true_azimuth = 1.0;
        const auto r = sweep_azimuth(sim, cfg);
        CHECK(geom::angular_distance(r.estimate, 1.0) <= kPi / 360);
        CHECK(r.samples.size() == 360);
        CHECK_FALSE(r.degenerate);
        for (int i = 0; i < 100; ++i) {
            const double psi = -kPi + 2 * kPi * (i + 0.5) / 100;
            sim.true_azimuth = psi;
            for (double elev : {link_elevation(), 0.4, -0.3}) {
                sim.true_elevation = elev;
                cfg.theta_est = elev;
                const auto e = sweep_azimuth(sim, cfg);
                CHECK_FALSE(e.modulo_pi);
                CHECK(geom::angular_distance(e.estimate, psi) <= kPi / 360);
            }
        }
    }

    TEST_CASE("horizontal incidence fixes the azimuth modulo pi only") {
        SweepScenario sim;
        BeamSweepConfig cfg;
        int flipped = 0;
        for (int i = 0; i < 100; ++i) {
            sim.true_azimuth = -kPi + 2 * kPi * (i + 0.5) / 100;
            const auto r = sweep_azimuth(sim, cfg);
            CHECK(r.modulo_pi);
            CHECK(axial_distance(r.estimate, sim.true_azimuth) <= kPi / 360);
            flipped += geom::angular_distance(r.estimate, sim.true_azimuth) > kPi / 2;
        }
        // Both nulls lie on the sweep circle; which one wins is decided by the step grid.
        CHECK(flipped > 0);
    }

    TEST_CASE("sweep axis and steering choices") {
        SweepScenario sim;
        sim.true_azimuth = -2.0;
        sim.true_elevation = link_elevation();
        BeamSweepConfig cfg;
        cfg.theta_est = sim.true_elevation;
        cfg.steering = SteeringAxis::roll;
        CHECK(geom::angular_distance(sweep_azimuth(sim, cfg).estimate, -2.0) <= kPi / 360);
        cfg.steps = 720;
        CHECK(geom::angular_distance(sweep_azimuth(sim, cfg).estimate, -2.0) <= kPi / 720);
        cfg = {};
        cfg.theta_est = sim.true_elevation;
        cfg.axis = SweepAxis::y;
        CHECK_NOTHROW(sweep_azimuth(sim, cfg));
    }

    TEST_CASE("two-step sweep is degenerate") {
        SweepScenario sim;
        sim.true_azimuth = 1.0;
        sim.true_elevation = link_elevation();
        BeamSweepConfig cfg;
        cfg.theta_est = sim.true_elevation;
        cfg.steps = 2;
        const auto r = sweep_azimuth(sim, cfg);
        CHECK(r.degenerate);
        CHECK((std::abs(r.estimate) < 1e-12 || std::abs(r.estimate - kPi) < 1e-12));
        // Horizontal incidence: the two samples mirror each other and the sweep is flat.
        SweepScenario level;
        level.true_azimuth = 1.0;
        BeamSweepConfig two;
        two.steps = 2;
        CHECK_THROWS_AS(sweep_azimuth(level, two), AmbiguityError);
        cfg.steps = 1;
        CHECK_THROWS_AS(sweep_azimuth(sim, cfg), DomainError);
    }

    TEST_CASE("a vertical antenna cannot see azimuth") {
        SweepScenario sim;
        sim.true_azimuth = 0.7;
        BeamSweepConfig cfg;
        cfg.theta_est = kPi / 2;
        CHECK_THROWS_AS(sweep_azimuth(sim, cfg), AmbiguityError);
        CHECK_THROWS_AS(sweep_azimuth(sim, cfg), NumericalError);
    }

    TEST_CASE("frozen fading leaves the noiseless estimate unchanged") {
        SweepScenario sim;
        sim.true_azimuth = 0.9;
        sim.true_elevation = link_elevation();
        BeamSweepConfig cfg;
        cfg.theta_est = sim.true_elevation;
        const double clean = sweep_azimuth(sim, cfg).estimate;
        sim.fading = true;
        sim.channel.kappa = 12.0;
        std::vector<double> errs;
        for (std::uint64_t s = 0; s < 100; ++s) {
            sim.seed = s;
            const auto r = sweep_azimuth(sim, cfg);
            CHECK(r.estimate == clean);
            errs.push_back(geom::angular_distance(r.estimate, 0.9));
        }
        CHECK(median(errs) <= 3 * kPi / 360);
        // Re-drawn fading changes the observations, not the noiseless fading-free answer.
        BeamSweepConfig redraw = cfg;
        redraw.frozen_fading = false;
        sim.fading = false;
        CHECK(sweep_azimuth(sim, redraw).estimate == clean);
        sim.fading = true;
        sim.seed = 3;
        const auto a = sweep_azimuth(sim, redraw), b = sweep_azimuth(sim, cfg);
        CHECK(a.samples[10].p_r_dbm != b.samples[10].p_r_dbm);
    }

    TEST_CASE("estimate quality degrades with the elevation error") {
        SweepScenario sim;
        sim.true_azimuth = 0.5;
        sim.true_elevation = 0.2;
        sim.snr_db = 20.0;
        double prev = -1.0;
        for (double err : {0.0, kPi / 32, kPi / 16, kPi / 8}) {
            BeamSweepConfig cfg;
            cfg.theta_est = sim.true_elevation + err;
            std::vector<double> errs;
            for (std::uint64_t s = 0; s < 200; ++s) {
                sim.seed = s;
                errs.push_back(geom::angular_distance(sweep_azimuth(sim, cfg).estimate, sim.true_azimuth));
            }
            const double m = median(errs);
            CAPTURE(err);
            CHECK(m >= prev);
            prev = m;
        }
    }

    TEST_CASE("sweep csv") {
        SweepScenario sim;
        BeamSweepConfig cfg;
        cfg.steps = 4;
        sim.true_azimuth = 0.3;
        const auto csv = sweep_azimuth(sim, cfg).to_csv();
        CHECK(csv.rfind("l,angle_rad,p_r_dbm\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    }

    TEST_CASE("elevation bins") {
        CHECK(elevation_bin(-kPi / 2, 6) == 0);
        CHECK(elevation_bin(kPi / 2, 6) == 5);
        CHECK(elevation_bin(0.01, 6) == 3);
        CHECK(elevation_bin(-0.01, 6) == 2);
        CHECK_THROWS_AS(elevation_bin(0.0, 0), DomainError);
    }

    TEST_CASE("angle error report partitions the errors") {
        const int n = 10;
        std::vector<double> truths, preds;
        for (int b = 0; b < n; ++b) {
            const double c = -kPi / 2 + (b + 0.5) * kPi / n;
            truths.push_back(c);
            preds.push_back(c);
        }
        const auto exact = angle_error_report(preds, truths, n);
        CHECK(exact.eps1_samples.size() == 10);
        for (double e : exact.eps1_samples) CHECK(e <= kPi / (2 * n));
        CHECK(exact.resolution == doctest::Approx(kPi / n));

        Rng rng(4);
        truths.clear();
        preds.clear();
        for (int i = 0; i < 500; ++i) {
            truths.push_back(rng.uniform(-kPi / 2, kPi / 2));
            preds.push_back(rng.uniform(-kPi / 2, kPi / 2));
        }
        const auto r = angle_error_report(preds, truths, n);
        CHECK(r.eps1_samples.size() + r.eps0_samples.size() == 500);
        for (double e : r.eps1_samples) CHECK(e <= kPi / n);
        std::size_t correct = 0;
        for (int i = 0; i < 500; ++i) correct += elevation_bin(preds[i], n) == elevation_bin(truths[i], n);
        CHECK(r.eps1_samples.size() == correct);
        double prev = 1e9;
        for (int m : {2, 6, 10, 100, 1000}) {
            const double res = angle_error_report({}, {}, m).resolution;
            CHECK(res < prev);
            prev = res;
        }
        CHECK(prev < 0.01);
        CHECK_THROWS_AS(angle_error_report({0.1}, {}, n), DomainError);
    }
}
