#include <doctest.h>

#include <cmath>
#include <numbers>

#include "threedpm/antenna.hpp"
#include "threedpm/errors.hpp"
#include "threedpm/random.hpp"

using namespace threedpm;
using namespace threedpm::antenna;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE("antenna") {
    TEST_CASE("short dipole directivity by quadrature") {
        CHECK(std::abs(dipole_directivity() - 1.5) < 1e-6);
        CHECK(std::abs(dipole_directivity() - kDipoleDirectivity) < 1e-6);
    }

    TEST_CASE("directivity of closed-form patterns") {
        // Isotropic: 1. cos^2: 4 pi / (4 pi / 3) = 3. sin^4: 4 pi / (2 pi * 16/15) = 15/8.
        CHECK(std::abs(directivity([](double, double) { return 1.0; }) - 1.0) < 1e-9);
        CHECK(std::abs(directivity([](double t, double) { return std::cos(t) * std::cos(t); }) - 3.0) < 1e-6);
        CHECK(std::abs(directivity([](double t, double) { return std::pow(std::sin(t), 4); }) - 15.0 / 8.0) < 1e-6);
        // psi-dependent: sin^2(theta) cos^2(psi) integrates to 4 pi / 3 * 1/2.
        CHECK(std::abs(directivity([](double t, double p) { return std::pow(std::sin(t) * std::cos(p), 2); }) - 3.0) <
              1e-6);
        CHECK_THROWS_AS(directivity([](double, double) { return 0.0; }), DomainError);
    }

    TEST_CASE("Kraus approximation at a quarter-turn beamwidth") {
        const double expected = 16.0 * std::log(2.0) / (kPi * kPi / 4.0);
        const auto k = kraus_directivity(kPi / 2, kPi / 2);
        CHECK(std::abs(k.e_plane - expected) < 1e-12);
        CHECK(std::abs(k.h_plane - expected) < 1e-12);
        CHECK(std::abs(k.sum - 4.4948) < 1e-3);
    }

    TEST_CASE("Kraus directivity decreases in each beamwidth") {
        double prev_e = 1e300, prev_h = 1e300;
        for (int i = 1; i <= 50; ++i) {
            const double o = kPi * i / 50.0;
            const double e = kraus_directivity(o, 1.0).sum;
            const double h = kraus_directivity(1.0, o).sum;
            CHECK(e < prev_e);
            CHECK(h < prev_h);
            prev_e = e;
            prev_h = h;
        }
        CHECK_THROWS_AS(kraus_directivity(0.0, 1.0), DomainError);
        CHECK_THROWS_AS(kraus_directivity(1.0, kPi + 1e-9), DomainError);
        CHECK_NOTHROW(kraus_directivity(kPi, kPi));
    }

    TEST_CASE("ideal pattern is azimuth invariant and bounded") {
        const auto ideal = AntennaModel::ideal_dipole();
        Rng rng(17);
        for (int i = 0; i < 500; ++i) {
            const double theta = rng.uniform(0.0, kPi);
            const auto a = impaired_pattern(ideal, rng.uniform(-kPi, kPi), theta);
            const auto b = impaired_pattern(ideal, rng.uniform(-kPi, kPi), theta);
            CHECK(a.e_plane == b.e_plane);
            CHECK(a.h_plane == b.h_plane);
            CHECK(a.e_plane >= 0.0);
            CHECK(a.e_plane <= 1.0);
            CHECK(a.e_plane == doctest::Approx(std::sin(theta)));
        }
        CHECK(power_gain(ideal, 0.3, kPi / 2) == doctest::Approx(1.5));
        CHECK(power_gain(ideal, 0.3, 0.0) == doctest::Approx(0.0));
    }

    TEST_CASE("impairment is unbiased over antenna instances") {
        ImpairmentModel m;
        m.seed = 2024;
        const auto model = AntennaModel::impaired(m);
        const int n = 100000;
        for (double theta : {kPi / 2}) {
            double se = 0.0, sh = 0.0;
            for (int i = 0; i < n; ++i) {
                const auto s = impaired_pattern(model, 0.4, theta, static_cast<std::uint64_t>(i));
                se += s.e_plane;
                sh += s.h_plane;
            }
            const double tol_e = 3.0 * std::sqrt(m.variance[1]) / std::sqrt(static_cast<double>(n));
            const double tol_h = 3.0 * std::sqrt(m.variance[0]) / std::sqrt(static_cast<double>(n));
            CHECK(std::abs(se / n - std::sin(theta)) < tol_e);
            CHECK(std::abs(sh / n - 1.0) < tol_h);
            CHECK(std::abs(se / n - std::sin(theta)) < 0.01 * std::sin(theta));
        }
    }

    TEST_CASE("impaired antenna is a frozen pattern") {
        ImpairmentModel m;
        m.seed = 7;
        const auto model = AntennaModel::impaired(m);
        const auto a = impaired_pattern(model, 0.5, 1.0, 3);
        const auto b = impaired_pattern(model, 0.5, 1.0, 3);
        CHECK(a.e_plane == b.e_plane);
        CHECK(a.h_plane == b.h_plane);
        // Same one-degree cell.
        const auto c = impaired_pattern(model, 0.5 + 1e-6, 1.0 + 1e-6, 3);
        CHECK(a.e_plane == c.e_plane);
        // Another instance differs.
        const auto d = impaired_pattern(model, 0.5, 1.0, 4);
        CHECK(a.e_plane != d.e_plane);
        for (int i = 0; i < 1000; ++i) {
            const auto s = impaired_pattern(model, 0.1 * i, 0.003 * i, 11);
            CHECK(s.e_plane >= 0.0);
            CHECK(s.h_plane >= 0.0);
        }
        AntennaModel broken;
        broken.ideal = false;
        CHECK_THROWS_AS(impaired_pattern(broken, 0.0, 1.0), ConfigError);
    }

    TEST_CASE("polarization loss factor") {
        Rng rng(23);
        auto unit = [&] {
            return geom::normalized({rng.normal(), rng.normal(), rng.normal()});
        };
        for (int i = 0; i < 1000; ++i) {
            const auto a = unit(), b = unit();
            const double p = plf({a, b});
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            CHECK(p == plf({b, a}));
        }
        CHECK(plf({{0, 0, 1}, {0, 0, 1}}) == doctest::Approx(1.0));
        CHECK(plf({{0, 0, 1}, {1, 0, 0}}) == doctest::Approx(0.0));
        CHECK(plf_from_mismatch(0.0, 0.0) == doctest::Approx(1.0));
        CHECK(plf_from_mismatch(kPi / 3, 0.0) == doctest::Approx(0.25));
        CHECK(apply_plf(2.0, 0.5, 0.25) == doctest::Approx(0.25));
    }
}
