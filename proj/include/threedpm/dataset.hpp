#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "threedpm/antenna.hpp"
#include "threedpm/channel.hpp"

namespace threedpm::dataset {

/// How the polarization loss factor and misalignment vary inside one record.
enum class NuisanceMode {
    per_sample,  // fresh PLF and misalignment for every RSS sample
    per_record,  // one PLF and misalignment draw shared by the whole feature vector
};

struct DatasetConfig {
    std::vector<int> kappa_list = default_kappas();
    int angle_bins = 180;
    int instances_per_bin = 20;
    int feature_len = 100;
    std::array<double, 2> snr_range_db{0.0, 30.0};
    std::array<double, 2> plf_range{0.0, 0.5};
    std::array<double, 3> geometry{100.0, 10.0, 5.0};  // rx - tx offsets (d_x, d_y, d_z) [m]
    double misalignment_deg = 0.05;                    // sigma_delta for delta_T1, delta_R1
    NuisanceMode nuisance = NuisanceMode::per_sample;
    channel::ChannelParams channel;  // kappa is overridden per task
    antenna::AntennaModel rx_antenna = antenna::AntennaModel::ideal_dipole();
    std::uint64_t base_seed = 0;

    static std::vector<int> default_kappas();
    void validate() const;
    std::size_t record_count() const;
    double bin_center(int bin) const;  // elevation [rad]
    double bin_width() const;
};

struct TaskSplit {
    std::vector<int> train_tasks;
    std::vector<int> test_tasks;
};

/// Odd kappa -> train, even kappa -> test.
TaskSplit split(const DatasetConfig& config);

/// In-memory dataset, records in (kappa-major, bin, instance) order.
struct Dataset {
    DatasetConfig config;
    std::vector<float> features;       // record_count x feature_len, dBm
    std::vector<std::uint16_t> labels;  // angle bin
    std::vector<float> snr_db;

    std::size_t size() const { return labels.size(); }
    std::size_t index(std::size_t task, int bin, int instance) const;
    const float* row(std::size_t record) const { return features.data() + record * config.feature_len; }
    /// Position of kappa in config.kappa_list; throws ConfigError if absent.
    std::size_t task_index(int kappa) const;
    int kappa_of(std::size_t record) const;

    /// FNV-1a 64 over the serialized feature, label and SNR blocks.
    std::uint64_t checksum() const;
};

/// Synthesizes one record's feature vector for (kappa, bin, instance).
void synthesize_record(const DatasetConfig& config, int kappa, int bin, int instance, float* features,
                       float& snr_db);

Dataset generate(const DatasetConfig& config);

/// Same as generate with a fixed SNR and the given instance count, restricted to kappa_list.
Dataset generate_eval(DatasetConfig config, double snr_db, int instances);

std::string serialize(const Dataset& data);
Dataset deserialize(const std::string& bytes);
void save(const Dataset& data, const std::string& path);
Dataset load(const std::string& path);

/// Header `kappa,bin,instance,snr_db,f0..f{L-1}`.
std::string to_csv(const Dataset& data);

/// JSON echo of a config (sorted keys).
std::string config_json(const DatasetConfig& config);
DatasetConfig config_from_json(const std::string& json);

struct Episode {
    int n_way = 0;
    int k_shot = 0;
    int q_query = 0;
    int kappa = 0;
    std::vector<int> classes;  // local label -> global bin
    int feature_len = 0;
    std::vector<float> support;  // (n_way * k_shot) x feature_len, class-major
    std::vector<int> support_labels;
    std::vector<float> query;  // (n_way * q_query) x feature_len
    std::vector<int> query_labels;
    std::vector<std::size_t> support_records;
    std::vector<std::size_t> query_records;
};

/// One task uniformly from `tasks`, N distinct bins in random local order, K + Q distinct
/// instances per class. Throws ConfigError when N or K + Q exceed what the dataset holds.
Episode sample_episode(const Dataset& data, const std::vector<int>& tasks, int n_way, int k_shot, int q_query,
                       std::uint64_t seed);

}  // namespace threedpm::dataset
