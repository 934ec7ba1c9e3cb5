#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "threedpm/dataset.hpp"
#include "threedpm/estimate.hpp"
#include "threedpm/metalearn.hpp"

namespace threedpm {

enum class TaskSide { train, test, all };

struct EvalSettings {
    std::vector<double> snr_grid_db{10.0};
    int instances = 100;  // per (kappa, bin) of each generated evaluation set
    TaskSide tasks = TaskSide::test;
};

struct SweepSettings {
    int steps = 360;
    estimate::SweepAxis axis = estimate::SweepAxis::z;
    estimate::SteeringAxis steering = estimate::SteeringAxis::pitch;
    double theta_est_deg = 0.0;
    double true_azimuth_deg = 57.29577951308232;
    double true_elevation_deg = 0.0;
    bool fading = false;
    bool frozen_fading = true;
    std::optional<double> snr_db;
    double distance = 100.5;
};

struct BoundSettings {
    double epsilon = 0.05;
    double alpha = 0.05;
    std::vector<double> curve_epsilons{0.05, 0.1, 0.25};
    std::uint64_t curve_n_max = 200;
};

struct BaselineSettings {
    std::vector<double> rotations_deg{0.0, 10.0, 20.0, 30.0, 40.0};
    int trials = 200;
    int n_way = 10;
    double snr_db = 10.0;
};

/// Everything a command needs; reproducible from the file contents and `seed`.
struct RunConfig {
    std::uint64_t seed = 0;
    dataset::DatasetConfig dataset;
    metalearn::MetaConfig meta;
    EvalSettings eval;
    SweepSettings sweep;
    BoundSettings bound;
    BaselineSettings baseline;

    /// Propagates `seed` to the component configs and validates them.
    void finalize();
    std::string to_json() const;
    std::string hash() const;  // FNV-1a 64 of to_json()
};

/// Parses YAML text. Unknown keys and malformed values raise ConfigError.
RunConfig parse_config(const std::string& yaml_text);
RunConfig load_config(const std::string& path);

std::vector<int> tasks_for(TaskSide side, const dataset::DatasetConfig& config);

}  // namespace threedpm
