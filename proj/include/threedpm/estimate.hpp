#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "threedpm/antenna.hpp"
#include "threedpm/channel.hpp"
#include "threedpm/errors.hpp"

namespace threedpm::estimate {

/// Raised when a sweep cannot single out a null (all received powers equal).
class AmbiguityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Lambda(phi) for every candidate angle; all profiles share one length.
struct PatternTemplate {
    std::vector<double> angles;
    std::vector<std::vector<double>> profiles;
};

struct ConventionalResult {
    double angle = 0.0;
    std::size_t index = 0;
    double score = 0.0;    // C(phi) = 1 / ||Lambda(phi) - dP||^2, +inf on an exact match
    int multiplicity = 1;  // number of candidates sharing the winning score
};

/// argmax C(phi); ties go to the smaller |phi|.
ConventionalResult conventional_estimate(const std::vector<double>& profile, const PatternTemplate& templ);

/// Consecutive differences p[i+1] - p[i]; removes any constant offset.
std::vector<double> difference(const std::vector<double>& p);

/// RSS offsets [dB] of a vertical ideal dipole whose elevation is shifted by each known rotation,
/// differenced. Powers are floored at 1e-12 before the logarithm.
std::vector<double> dipole_profile(double elevation, const std::vector<double>& rotations);
PatternTemplate dipole_template(const std::vector<double>& candidates, const std::vector<double>& rotations);

enum class SweepAxis { z, y, x };
enum class SteeringAxis { pitch, roll };

struct BeamSweepConfig {
    int steps = 360;
    SweepAxis axis = SweepAxis::z;
    SteeringAxis steering = SteeringAxis::pitch;
    double theta_est = 0.0;
    bool frozen_fading = true;
};

/// Ground truth and link budget of a sweep.
struct SweepScenario {
    double true_azimuth = 0.0;
    double true_elevation = 0.0;
    double distance = 100.5;
    channel::ChannelParams channel;
    bool fading = false;  // Rician draws with channel.kappa when set
    antenna::AntennaModel rx_antenna = antenna::AntennaModel::ideal_dipole();
    double snr_db = std::numeric_limits<double>::infinity();  // boresight SNR of additive noise; inf = noiseless
    std::uint64_t seed = 0;
};

struct SweepSample {
    int l = 0;
    double angle_rad = 0.0;
    double p_r_dbm = 0.0;
};

struct SweepResult {
    double estimate = 0.0;  // azimuth of the antenna axis at the minimum P_R, in (-pi, pi]
    std::size_t index = 0;
    bool degenerate = false;  // L = 2 cannot resolve more than {0, pi}
    // The steered axis is perpendicular to the sweep axis, so the cone it traces holds both u and
    // -u and the sin^2 null only fixes the azimuth modulo pi (theta_est = 0 with the z sweep).
    bool modulo_pi = false;
    std::vector<SweepSample> samples;

    /// `l,angle_rad,p_r_dbm`
    std::string to_csv() const;
};

/// Steers the dipole by pitch (or roll) pi/2 - theta_est, then rotates it through 2 pi in L steps
/// about the configured axis and returns the step with the lowest received power. Throws
/// AmbiguityError when the sweep is flat within 1e-9 (relative).
SweepResult sweep_azimuth(const SweepScenario& sim, const BeamSweepConfig& config);

struct AngleErrorReport {
    std::vector<double> eps1_samples;  // beam (bin) prediction correct
    std::vector<double> eps0_samples;  // beam prediction wrong
    double resolution = 0.0;           // pi / N
};

/// Bin of an elevation in [-pi/2, pi/2] under n_way uniform bins.
int elevation_bin(double angle, int n_way);

AngleErrorReport angle_error_report(const std::vector<double>& predictions, const std::vector<double>& truths,
                                    int n_way);

}  // namespace threedpm::estimate
