#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "threedpm/antenna.hpp"
#include "threedpm/geom.hpp"
#include "threedpm/random.hpp"

namespace threedpm::channel {

using cplx = std::complex<double>;

/// K-factors at or above this value are treated as pure line of sight.
inline constexpr double kPureLosKappa = 1e12;

struct ChannelParams {
    double kappa = 12.0;
    double sigma_l = 1.0;
    int num_taps = 1;
    double f_doppler = 0.0;     // [Hz], enters the LoS phase only
    double pl0_db = 40.0;       // reference path loss [dB]
    double eta = 2.0;           // path-loss exponent
    double d0 = 1.0;            // reference distance [m]
    double sigma_p = 0.0;       // log-normal shadowing std [dB]
    double noise_power = 1e-12; // [W]
    double p_t_dbm = 20.0;

    /// Throws ConfigError on violated invariants.
    void validate() const;
};

/// One Rician tap split into its deterministic (LoS) and diffuse parts.
struct RicianTap {
    cplx los;
    cplx diffuse;
    cplx total() const { return los + diffuse; }
};

struct ChannelDraw {
    std::vector<cplx> taps;  // g
    double large_scale = 1.0;  // c
    std::vector<cplx> h;     // sqrt(c) * g

    double power() const;  // sum |h|^2
};

struct RssMeasurement {
    double p_r_dbm = 0.0;
    double snr_db = 0.0;
};

/// LoS term sqrt(k/(k+1)) sigma exp(j(2 pi f_D cos(phi) + varphi)) plus a CN(0, sigma^2/(k+1))
/// diffuse term, varphi ~ U[0, 2 pi).
RicianTap draw_rician_tap_parts(const ChannelParams& params, double phi_theta, Rng& rng);
cplx draw_rician_tap(const ChannelParams& params, double phi_theta, std::uint64_t seed);

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);

/// PL0 + 10 eta log10(d/d0) + X_g with X_g ~ N(0, sigma_p^2) [dB] when a seed is given.
double path_loss_db(const ChannelParams& params, double d, std::optional<std::uint64_t> shadowing_seed = std::nullopt);

/// Linear large-scale gain 10^(-PL/10).
double large_scale_gain(const ChannelParams& params, double d, std::optional<std::uint64_t> shadowing_seed = std::nullopt);

/// Per-tap h = sqrt(c) g. Shadowing is applied when sigma_p > 0, keyed by the same seed.
ChannelDraw compose_channel(const ChannelParams& params, const geom::LinkGeometry& geometry, std::uint64_t seed);

/// SNR = P_T sum|h|^2 G_T G_R plf / sigma^2. A zero received power reports -inf dB / dBm.
RssMeasurement rss_and_snr(const ChannelParams& params, const ChannelDraw& draw, double tx_gain, double rx_gain,
                           double plf);

struct Misalignment {
    double tx_elevation = 0.0;  // delta_T1
    double tx_azimuth = 0.0;    // delta_T2
    double rx_elevation = 0.0;  // delta_R1
    double rx_azimuth = 0.0;    // delta_R2
};

/// Linear SNR with both gains evaluated at the perturbed angles. `theta` is the incident
/// elevation and `psi` the azimuth; vertical dipoles have polar angle pi/2 - elevation.
double misaligned_snr(const ChannelParams& params, const ChannelDraw& draw, double theta, const Misalignment& deltas,
                      const antenna::AntennaModel& tx = antenna::AntennaModel::ideal_dipole(),
                      const antenna::AntennaModel& rx = antenna::AntennaModel::ideal_dipole(), double psi = 0.0);

}  // namespace threedpm::channel
