#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace threedpm::nnet {

struct MapShape {
    int h = 1;
    int w = 1;
    int size() const { return h * w; }
};

/// Four conv blocks (conv -> batch-norm -> ReLU -> max-pool) followed by a linear head.
///
/// With height 1 the features form a 1 x feature_len map and the blocks use 1 x kernel filters.
/// A larger height reshapes the features row-major to height x (feature_len / height) and
/// switches to kernel x kernel filters. A spatial axis is pooled only while it is at least
/// `pool` wide, so a 10 x 10 map runs 10 -> 5 -> 2 -> 1 -> 1.
struct Architecture {
    int feature_len = 100;
    int height = 1;
    int n_way = 6;
    int blocks = 4;
    int filters = 64;
    int kernel = 3;
    int pool = 2;
    double bn_eps = 1e-5;
    // Inputs are mapped to (x - input_shift) / input_scale before the first block.
    double input_shift = 0.0;
    double input_scale = 1.0;

    void validate() const;
    MapShape block_shape(int block) const;  // input map of a block
    int block_length(int block) const;      // its element count
    int final_length() const;
    int kernel_height() const { return height > 1 ? kernel : 1; }
    int flat_features() const;
    std::size_t param_count() const;
    std::string to_json() const;
    static Architecture from_json(const std::string& text);
};

struct LayerSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
};

/// conv{i}.weight, bn{i}.gamma, bn{i}.beta for each block, then linear.weight, linear.bias.
std::vector<LayerSlot> layout(const Architecture& arch);

struct ModelParams {
    Architecture arch;
    std::vector<float> values;
};

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases, unit gamma, zero beta.
template <class T>
std::vector<T> init_params(const Architecture& arch, std::uint64_t seed);

/// Per-channel statistics of every batch-norm layer, concatenated block by block.
struct BnStats {
    std::vector<double> mean;
    std::vector<double> var;
};

/// Class probabilities, batch x n_way. `frozen` switches batch-norm to fixed statistics.
template <class T>
std::vector<T> forward(const Architecture& arch, const std::vector<T>& params, const float* batch, int rows,
                       const BnStats* frozen = nullptr);

/// Mean cross-entropy of the batch.
template <class T>
T loss(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels, int rows,
       const BnStats* frozen = nullptr);

/// Loss and its exact gradient (written to `grad`, resized).
template <class T>
T loss_and_grad(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels,
                int rows, std::vector<T>& grad, const BnStats* frozen = nullptr, std::vector<T>* probs = nullptr);

/// Hessian-vector product by forward-over-reverse differentiation. Optionally also returns
/// the gradient at `params`. Increments the global hvp counter.
template <class T>
void hvp(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels, int rows,
         const std::vector<T>& v, std::vector<T>& out, std::vector<T>* grad = nullptr);

/// Batch statistics of each batch-norm layer for this batch (transductive mode).
BnStats batch_statistics(const Architecture& arch, const std::vector<double>& params, const float* batch, int rows);

/// Mean -log p[label] with log clamped at 1e-12.
double cross_entropy(const std::vector<double>& probs, const std::vector<int>& labels, int classes);

/// Fraction of rows whose argmax matches the label.
template <class T>
double accuracy(const std::vector<T>& probs, const int* labels, int rows, int classes);

std::uint64_t hvp_calls();
void reset_hvp_calls();

std::string serialize_checkpoint(const ModelParams& model);
ModelParams deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace threedpm::nnet
