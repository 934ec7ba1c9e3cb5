#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "threedpm/config.hpp"
#include "threedpm/estimate.hpp"

namespace threedpm::cli {

struct GenRequest {
    std::string out_dir = ".";
    bool dry_run = false;
    bool csv = false;                // also write dataset.csv
    std::optional<double> eval_snr;  // write an evaluation set at this SNR instead
};

struct GenSummary {
    std::size_t records = 0;
    std::string checksum;
    std::string path;
    bool written = false;
};

GenSummary cmd_gen(const RunConfig& config, const GenRequest& req, std::ostream& out);

struct TrainRequest {
    std::string algo = "maml";  // maml | fomaml | cnn
    std::string data_path;      // dataset file; generated from the config when empty
    std::string out_dir = ".";
};

struct TrainSummary {
    std::string checkpoint_path;
    std::string log_path;
    std::string timing_path;
    std::uint64_t hvp_calls = 0;
    int epochs = 0;
};

/// Writes <out>/<algo>.ckpt, <out>/<algo>_log.csv and <out>/<algo>_timing.csv. The log is flushed after every epoch so a
/// divergence abort leaves the partial curve behind.
TrainSummary cmd_train(const RunConfig& config, const TrainRequest& req, std::ostream& out);

struct EvalRow {
    std::string method;
    int n_way = 0;
    int k_shot = 0;
    double snr_db = 0.0;
    double accuracy = 0.0;
    int episodes = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
};

struct EvalRequest {
    std::vector<std::string> checkpoints;
    std::vector<std::string> methods;  // labels; checkpoint file stems when empty
    std::string data_path;             // fixed evaluation set; generated per SNR when empty
    std::string out_dir = ".";
};

/// One row per (checkpoint, SNR); writes <out>/eval.csv.
std::vector<EvalRow> cmd_eval(const RunConfig& config, const EvalRequest& req, std::ostream& out);

/// `method,n_way,k_shot,snr_db,accuracy,episodes,seed,config_hash`
std::string eval_csv(const std::vector<EvalRow>& rows);

struct BoundRequest {
    std::optional<double> epsilon;
    std::optional<double> alpha;
    std::optional<std::uint64_t> n;  // report poc for this n instead of the sample bound
    bool sweep = false;              // write poc_curve.csv
    std::string out_dir = ".";
};

struct BoundSummary {
    std::optional<std::uint64_t> min_samples;
    std::optional<double> poc;
};

BoundSummary cmd_bound(const RunConfig& config, const BoundRequest& req, std::ostream& out);

/// Runs the configured sweep and writes <out>/sweep.csv.
estimate::SweepResult cmd_azimuth(const RunConfig& config, const std::string& out_dir, std::ostream& out);

struct BaselineSummary {
    int trials = 0;
    std::size_t correct_beams = 0;
    double median_error = 0.0;
};

/// Differential-RSS estimator on simulated rotations; writes <out>/baseline.csv.
BaselineSummary cmd_baseline(const RunConfig& config, const std::string& out_dir, std::ostream& out);

}  // namespace threedpm::cli
