#include "threedpm/channel.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "threedpm/errors.hpp"
#include "threedpm/random.hpp"

namespace threedpm::channel {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr std::uint64_t kShadowStream = 0x5ad0;
}  // namespace

void ChannelParams::validate() const {
    if (!(kappa >= 0.0)) throw ConfigError("channel: kappa must be >= 0");
    if (!(sigma_l > 0.0)) throw ConfigError("channel: sigma_l must be > 0");
    if (num_taps < 1) throw ConfigError("channel: num_taps must be >= 1");
    if (!(eta > 0.0)) throw ConfigError("channel: eta must be > 0");
    if (!(d0 > 0.0)) throw ConfigError("channel: d0 must be > 0");
    if (!(sigma_p >= 0.0)) throw ConfigError("channel: sigma_p must be >= 0");
    if (!(noise_power > 0.0)) throw ConfigError("channel: noise_power must be > 0");
    if (!std::isfinite(p_t_dbm) || !std::isfinite(pl0_db) || !std::isfinite(f_doppler))
        throw ConfigError("channel: non-finite power or Doppler setting");
}

double ChannelDraw::power() const {
    double p = 0.0;
    for (const auto& x : h) p += std::norm(x);
    return p;
}

RicianTap draw_rician_tap_parts(const ChannelParams& params, double phi_theta, Rng& rng) {
    const double varphi = 2.0 * kPi * rng.uniform();
    const cplx phase = std::polar(1.0, 2.0 * kPi * params.f_doppler * std::cos(phi_theta) + varphi);
    RicianTap tap;
    if (params.kappa >= kPureLosKappa) {
        tap.los = params.sigma_l * phase;
        tap.diffuse = 0.0;
        return tap;
    }
    const double k = params.kappa;
    tap.los = std::sqrt(k / (k + 1.0)) * params.sigma_l * phase;
    tap.diffuse = std::sqrt(1.0 / (k + 1.0)) * rng.complex_normal(params.sigma_l * params.sigma_l);
    return tap;
}

cplx draw_rician_tap(const ChannelParams& params, double phi_theta, std::uint64_t seed) {
    Rng rng(seed);
    return draw_rician_tap_parts(params, phi_theta, rng).total();
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double watts_to_dbm(double watts) {
    if (watts <= 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(watts) + 30.0;
}

double path_loss_db(const ChannelParams& params, double d, std::optional<std::uint64_t> shadowing_seed) {
    if (!(d > 0.0)) throw DomainError("path_loss_db: distance must be > 0");
    double pl = params.pl0_db + 10.0 * params.eta * std::log10(d / params.d0);
    if (shadowing_seed) {
        Rng rng(derive_seed({*shadowing_seed, kShadowStream}));
        pl += params.sigma_p * rng.normal();
    }
    return pl;
}

double large_scale_gain(const ChannelParams& params, double d, std::optional<std::uint64_t> shadowing_seed) {
    return std::pow(10.0, -path_loss_db(params, d, shadowing_seed) / 10.0);
}

ChannelDraw compose_channel(const ChannelParams& params, const geom::LinkGeometry& geometry, std::uint64_t seed) {
    params.validate();
    ChannelDraw draw;
    std::optional<std::uint64_t> shadow;
    if (params.sigma_p > 0.0) shadow = seed;
    draw.large_scale = large_scale_gain(params, geometry.d, shadow);
    Rng rng(seed);
    const double amp = std::sqrt(draw.large_scale);
    draw.taps.reserve(params.num_taps);
    draw.h.reserve(params.num_taps);
    for (int l = 0; l < params.num_taps; ++l) {
        const cplx g = draw_rician_tap_parts(params, geometry.phi_theta, rng).total();
        draw.taps.push_back(g);
        draw.h.push_back(amp * g);
    }
    return draw;
}

RssMeasurement rss_and_snr(const ChannelParams& params, const ChannelDraw& draw, double tx_gain, double rx_gain,
                           double plf) {
    if (tx_gain < 0.0 || rx_gain < 0.0) throw DomainError("rss_and_snr: gains must be >= 0");
    if (plf < 0.0 || plf > 1.0) throw DomainError("rss_and_snr: plf must lie in [0, 1]");
    const double p_r = dbm_to_watts(params.p_t_dbm) * draw.power() * tx_gain * rx_gain * plf;
    RssMeasurement m;
    m.p_r_dbm = watts_to_dbm(p_r);
    m.snr_db = p_r > 0.0 ? 10.0 * std::log10(p_r / params.noise_power) : -std::numeric_limits<double>::infinity();
    return m;
}

double misaligned_snr(const ChannelParams& params, const ChannelDraw& draw, double theta, const Misalignment& deltas,
                      const antenna::AntennaModel& tx, const antenna::AntennaModel& rx, double psi) {
    const double half_pi = 0.5 * kPi;
    const double g_t = antenna::power_gain(tx, psi + deltas.tx_azimuth, half_pi - (theta + deltas.tx_elevation));
    const double g_r = antenna::power_gain(rx, psi + deltas.rx_azimuth, half_pi - (theta + deltas.rx_elevation));
    return dbm_to_watts(params.p_t_dbm) * draw.power() * g_t * g_r / params.noise_power;
}

}  // namespace threedpm::channel
