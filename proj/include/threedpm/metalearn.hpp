#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "threedpm/dataset.hpp"
#include "threedpm/nnet.hpp"

namespace threedpm::metalearn {

enum class OuterOptimizer {
    adam,      // beta is the second-moment decay, first moment 0.9
    momentum,  // m <- beta m + (1 - beta) g, step -outer_lr m
};

struct MetaConfig {
    double inner_lr = 0.4;
    double outer_lr = 0.001;
    double beta = 0.999;
    int inner_steps = 1;
    int meta_batch = 10;
    int epochs = 500;
    int n_way = 6;
    int k_shot = 3;
    int q_query = 15;
    bool first_order = false;
    std::uint64_t seed = 0;
    double clip = 10.0;
    double divergence_loss = 1e6;
    int eval_episodes = 200;
    int filters = 64;
    int input_height = 1;  // > 1 reshapes the features into input_height rows and uses 2-D filters
    OuterOptimizer optimizer = OuterOptimizer::adam;

    void validate() const;
};

/// One adaptation trajectory: theta_0 .. theta_k and the (unclipped) support gradients.
template <class T>
struct Tape {
    std::vector<std::vector<T>> thetas;
    std::vector<std::vector<T>> grads;
    std::vector<T> losses;
};

/// Supervised batch view.
struct Batch {
    const float* x = nullptr;
    const int* labels = nullptr;
    int rows = 0;
};

Batch support_of(const dataset::Episode& ep);
Batch query_of(const dataset::Episode& ep);

/// Differentiable scalar objective with gradient and Hessian-vector product. The network is
/// one instance; tests also plug in analytic losses.
template <class T>
struct Objective {
    // (params, batch, grad out, optional probability rows out) -> loss
    std::function<T(const std::vector<T>&, const Batch&, std::vector<T>&, std::vector<T>*)> loss_and_grad;
    std::function<void(const std::vector<T>&, const Batch&, const std::vector<T>&, std::vector<T>&)> hvp;
};

template <class T>
Objective<T> network_objective(const nnet::Architecture& arch);

/// k steps of theta <- theta - alpha clip(grad L_support(theta)). Throws NumericalError on a
/// non-finite support loss.
template <class T>
std::vector<T> inner_adapt(const Objective<T>& obj, const std::vector<T>& params, const Batch& support,
                           double alpha, int steps, double clip, Tape<T>* tape = nullptr);

template <class T>
struct QueryStats {
    T loss{};
    std::vector<T> probs;  // query rows at the adapted parameters
};

/// Outer gradient of L_query(theta_k(params)). MAML back-propagates through every inner step
/// with Hessian-vector products (clip Jacobian included); first order returns grad L_query.
template <class T>
std::vector<T> meta_gradient(const Objective<T>& obj, const std::vector<T>& params, const Batch& support,
                             const Batch& query, double alpha, int steps, double clip, bool first_order,
                             QueryStats<T>* stats = nullptr);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::string header;  // config echo, written as comment lines

    /// `epoch,loss,accuracy,seconds` preceded by `# ` header lines.
    std::string to_csv(bool include_seconds = true) const;
};

struct TrainResult {
    nnet::ModelParams model;
    TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mean and standard deviation of every feature of the given tasks.
void fit_input_normalization(const dataset::Dataset& data, const std::vector<int>& tasks, nnet::Architecture& arch);

nnet::Architecture architecture_for(const dataset::Dataset& data, const MetaConfig& config);

/// Algorithm 1: epochs x meta_batch episodes from the odd-kappa tasks, one outer update per epoch.
TrainResult meta_train(const dataset::Dataset& data, const MetaConfig& config, const EpochCallback& on_epoch = {});

/// Plain CNN baseline: one SGD step (outer_lr, clipped) per episode on support and query pooled.
TrainResult cnn_train(const dataset::Dataset& data, const MetaConfig& config, const EpochCallback& on_epoch = {});

/// Mean query accuracy after K-shot fine-tuning over config.eval_episodes episodes drawn from
/// `tasks` (all tasks of the dataset when empty) with seeds derived from eval_seed.
double evaluate(const nnet::ModelParams& model, const dataset::Dataset& eval_data, const MetaConfig& config,
                std::uint64_t eval_seed, const std::vector<int>& tasks = {});

std::string config_json(const MetaConfig& config);

}  // namespace threedpm::metalearn
