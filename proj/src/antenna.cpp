#include "threedpm/antenna.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "threedpm/errors.hpp"
#include "threedpm/random.hpp"

namespace threedpm::antenna {

namespace {

constexpr double kPi = std::numbers::pi;

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0, p1 = z;
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
}

// Defects are frozen on a 1-degree grid.
std::int64_t degree_bin(double angle) {
    return static_cast<std::int64_t>(std::floor(geom::rad_to_deg(angle) + 1e-9));
}

}  // namespace

double dipole_radiation_intensity(double theta) {
    const double s = std::sin(theta);
    return s * s;
}

double directivity(const std::function<double(double, double)>& intensity, int theta_nodes, int psi_nodes) {
    std::vector<double> x, w;
    gauss_legendre(theta_nodes, x, w);
    double total = 0.0;
    double peak = 0.0;
    const double dpsi = 2.0 * kPi / psi_nodes;
    for (int i = 0; i < theta_nodes; ++i) {
        const double theta = 0.5 * kPi * (x[i] + 1.0);
        const double jac = 0.5 * kPi * std::sin(theta);
        for (int j = 0; j < psi_nodes; ++j) {
            const double u = intensity(theta, j * dpsi);
            total += w[i] * jac * dpsi * u;
            peak = std::max(peak, u);
        }
    }
    // The maximum may fall between quadrature nodes; refine on a dense grid.
    for (int i = 0; i <= 720; ++i)
        for (int j = 0; j < 360; j += 15) peak = std::max(peak, intensity(kPi * i / 720.0, geom::deg_to_rad(j)));
    if (!(total > 0.0)) throw DomainError("directivity: radiated power is zero");
    return 4.0 * kPi * peak / total;
}

double dipole_directivity() {
    return directivity([](double theta, double) { return dipole_radiation_intensity(theta); });
}

KrausDirectivity kraus_directivity(double hpbw_e, double hpbw_h) {
    auto valid = [](double o) { return o > 0.0 && o <= kPi; };
    if (!valid(hpbw_e) || !valid(hpbw_h)) throw DomainError("kraus_directivity: HPBW must lie in (0, pi]");
    const double c = 16.0 * std::log(2.0);
    KrausDirectivity k;
    k.e_plane = c / (hpbw_e * hpbw_e);
    k.h_plane = c / (hpbw_h * hpbw_h);
    k.sum = 2.0 / (1.0 / k.e_plane + 1.0 / k.h_plane);
    return k;
}

PatternSample impaired_pattern(const AntennaModel& model, double psi, double theta, std::uint64_t antenna_instance) {
    PatternSample ideal{std::abs(std::sin(theta)), 1.0};
    if (model.ideal) return ideal;
    if (!model.impairment) throw ConfigError("impaired_pattern: non-ideal antenna without an impairment model");
    const ImpairmentModel& imp = *model.impairment;
    if (imp.variance[0] < 0.0 || imp.variance[1] < 0.0) throw ConfigError("impairment variance must be >= 0");

    Rng rng(derive_seed({imp.seed, antenna_instance, static_cast<std::uint64_t>(degree_bin(geom::wrap_pi(psi))),
                         static_cast<std::uint64_t>(degree_bin(theta))}));
    const double zh = rng.normal();
    const double ze = rng.normal();
    PatternSample out;
    out.h_plane = std::max(0.0, ideal.h_plane + imp.mean[0] + std::sqrt(imp.variance[0]) * zh);
    out.e_plane = std::max(0.0, ideal.e_plane + imp.mean[1] + std::sqrt(imp.variance[1]) * ze);
    return out;
}

double power_gain(const AntennaModel& model, double psi, double theta, std::uint64_t antenna_instance) {
    const PatternSample f = impaired_pattern(model, psi, theta, antenna_instance);
    return kDipoleDirectivity * f.e_plane * f.e_plane * f.h_plane * f.h_plane;
}

double plf(const Polarization& pol) {
    const double c = geom::dot(pol.wave, pol.antenna);
    return std::clamp(c * c, 0.0, 1.0);
}

double plf_from_mismatch(double theta_hat, double psi_hat) {
    const double ct = std::cos(theta_hat), cp = std::cos(psi_hat);
    return ct * ct * cp * cp;
}

double apply_plf(double p_r_watts, double plf_psi, double plf_theta) { return plf_psi * plf_theta * p_r_watts; }

}  // namespace threedpm::antenna
