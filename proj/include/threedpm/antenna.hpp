#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>

#include "threedpm/geom.hpp"

namespace threedpm::antenna {

/// Principal-plane amplitude gains of a (possibly impaired) radiation pattern.
struct PatternSample {
    double e_plane = 0.0;
    double h_plane = 0.0;
};

/// Additive Gaussian fabrication defect on the (H, E) plane amplitudes.
///
/// `mean` is a fixed offset added to the nominal pattern (zero for an unbiased defect),
/// `variance` the diagonal of the defect covariance. Draws are keyed by `seed`, so one
/// model instance is one fabricated antenna.
struct ImpairmentModel {
    std::array<double, 2> mean{0.0, 0.0};      // (H, E)
    std::array<double, 2> variance{0.2, 0.2};  // (sigma_psi^2, sigma_theta^2)
    std::uint64_t seed = 0;
};

struct AntennaModel {
    bool ideal = true;
    std::optional<ImpairmentModel> impairment;
    double hpbw_e = 1.5707963267948966;  // Omega_E [rad]
    double hpbw_h = 1.5707963267948966;  // Omega_H [rad]

    static AntennaModel ideal_dipole() { return {}; }
    static AntennaModel impaired(const ImpairmentModel& m) { return {false, m}; }
};

/// Unit-norm polarization vectors of the incident wave and the receive antenna.
struct Polarization {
    geom::Vec3 wave;
    geom::Vec3 antenna;
};

/// Directivity of the ideal lossless short dipole (max U over mean U).
inline constexpr double kDipoleDirectivity = 1.5;

/// Normalized far-field radiation intensity of a short dipole: sin^2(theta), theta from the axis.
double dipole_radiation_intensity(double theta);

/// 4*pi*max(U) / integral of U over the sphere, via Gauss-Legendre in theta and the
/// trapezoid rule in psi. `intensity` takes (theta, psi) with theta the polar angle.
double directivity(const std::function<double(double, double)>& intensity, int theta_nodes = 64,
                   int psi_nodes = 64);

/// Directivity of the short dipole pattern computed by quadrature.
double dipole_directivity();

struct KrausDirectivity {
    double e_plane = 0.0;
    double h_plane = 0.0;
    double sum = 0.0;
};

/// HPBW approximation D = 16 ln2 / Omega^2 per plane, combined by the harmonic mean.
KrausDirectivity kraus_directivity(double hpbw_e, double hpbw_h);

/// Pattern amplitudes at (psi, theta) with theta the polar angle from the dipole axis.
///
/// Ideal: E-plane |sin theta|, H-plane 1. Impaired: ideal plus a Gaussian defect frozen per
/// (impairment seed, antenna_instance, 1-degree psi bin, 1-degree theta bin), clamped at zero.
PatternSample impaired_pattern(const AntennaModel& model, double psi, double theta,
                               std::uint64_t antenna_instance = 0);

/// Power gain G = D * |F_E|^2 * |F_H|^2 (lossless: gain equals directivity).
double power_gain(const AntennaModel& model, double psi, double theta, std::uint64_t antenna_instance = 0);

/// |p_wave . p_antenna|^2 for unit vectors; clamped into [0, 1].
double plf(const Polarization& pol);

/// PLF of two axis-aligned mismatch angles: cos^2(theta_hat) * cos^2(psi_hat).
double plf_from_mismatch(double theta_hat, double psi_hat);

/// P_R weakened by the per-plane polarization factors.
double apply_plf(double p_r_watts, double plf_psi, double plf_theta);

}  // namespace threedpm::antenna
