#include "threedpm/metalearn.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "threedpm/errors.hpp"
#include "threedpm/random.hpp"
#include "threedpm/util.hpp"

namespace threedpm::metalearn {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEpisodeStream = 0xe915;

template <class T>
double norm2(const std::vector<T>& v) {
    double s = 0.0;
    for (const T& x : v) s += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(s);
}

// Scale factor of gradient-norm clipping.
double clip_scale(double norm, double clip) { return clip > 0.0 && norm > clip ? clip / norm : 1.0; }

template <class T>
bool finite_loss(T loss) {
    return std::isfinite(static_cast<double>(loss));
}

std::vector<int> training_tasks(const dataset::Dataset& data) {
    auto s = dataset::split(data.config);
    if (s.train_tasks.empty()) throw ConfigError("training needs at least one odd-kappa (train) task");
    return s.train_tasks;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_divergence(double loss, double limit, int epoch) {
    if (!std::isfinite(loss) || loss > limit)
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                             std::to_string(loss) + ")");
}

class OuterStep {
public:
    OuterStep(const MetaConfig& c, std::size_t n) : cfg_(c), m_(n, 0.0), s_(n, 0.0) {}

    void apply(std::vector<float>& params, const std::vector<double>& g) {
        ++t_;
        const double lr = cfg_.outer_lr;
        if (cfg_.optimizer == OuterOptimizer::momentum) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i] = cfg_.beta * m_[i] + (1.0 - cfg_.beta) * g[i];
                params[i] = static_cast<float>(params[i] - lr * m_[i]);
            }
            return;
        }
        constexpr double b1 = 0.9, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, t_), c2 = 1.0 - std::pow(cfg_.beta, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
            s_[i] = cfg_.beta * s_[i] + (1.0 - cfg_.beta) * g[i] * g[i];
            params[i] = static_cast<float>(params[i] - lr * (m_[i] / c1) / (std::sqrt(s_[i] / c2) + eps));
        }
    }

private:
    const MetaConfig& cfg_;
    std::vector<double> m_, s_;
    int t_ = 0;
};

std::string log_header(const dataset::Dataset& data, const MetaConfig& config, const char* algo) {
    return std::string("algorithm=") + algo + " meta=" + config_json(config) +
           " dataset_checksum=" + to_hex(data.checksum());
}

}  // namespace

void MetaConfig::validate() const {
    if (!(inner_lr > 0.0)) throw ConfigError("meta: inner_lr must be > 0");
    if (!(outer_lr > 0.0)) throw ConfigError("meta: outer_lr must be > 0");
    if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("meta: beta must lie in [0, 1)");
    if (inner_steps < 1) throw ConfigError("meta: inner_steps must be >= 1");
    if (meta_batch < 1) throw ConfigError("meta: meta_batch must be >= 1");
    if (epochs < 0) throw ConfigError("meta: epochs must be >= 0");
    if (n_way < 1 || k_shot < 1 || q_query < 1) throw ConfigError("meta: n_way, k_shot, q_query must be >= 1");
    if (!(clip >= 0.0)) throw ConfigError("meta: clip must be >= 0");
    if (eval_episodes < 1) throw ConfigError("meta: eval_episodes must be >= 1");
    if (filters < 1) throw ConfigError("meta: filters must be >= 1");
    if (input_height < 1) throw ConfigError("meta: input_height must be >= 1");
}

Batch support_of(const dataset::Episode& ep) {
    return {ep.support.data(), ep.support_labels.data(), static_cast<int>(ep.support_labels.size())};
}

Batch query_of(const dataset::Episode& ep) {
    return {ep.query.data(), ep.query_labels.data(), static_cast<int>(ep.query_labels.size())};
}

template <class T>
Objective<T> network_objective(const nnet::Architecture& arch) {
    Objective<T> obj;
    obj.loss_and_grad = [arch](const std::vector<T>& p, const Batch& b, std::vector<T>& g, std::vector<T>* probs) {
        return nnet::loss_and_grad<T>(arch, p, b.x, b.labels, b.rows, g, nullptr, probs);
    };
    obj.hvp = [arch](const std::vector<T>& p, const Batch& b, const std::vector<T>& v, std::vector<T>& out) {
        nnet::hvp<T>(arch, p, b.x, b.labels, b.rows, v, out);
    };
    return obj;
}

template <class T>
std::vector<T> inner_adapt(const Objective<T>& obj, const std::vector<T>& params, const Batch& support,
                           double alpha, int steps, double clip, Tape<T>* tape) {
    std::vector<T> theta = params, g;
    if (tape) *tape = {};
    for (int i = 0; i < steps; ++i) {
        const T l = obj.loss_and_grad(theta, support, g, nullptr);
        if (!finite_loss(l))
            throw NumericalError("inner_adapt: non-finite support loss at step " + std::to_string(i));
        if (tape) {
            tape->thetas.push_back(theta);
            tape->grads.push_back(g);
            tape->losses.push_back(l);
        }
        const T step = static_cast<T>(alpha * clip_scale(norm2(g), clip));
        for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= step * g[j];
    }
    if (tape) tape->thetas.push_back(theta);
    return theta;
}

template <class T>
std::vector<T> meta_gradient(const Objective<T>& obj, const std::vector<T>& params, const Batch& support,
                             const Batch& query, double alpha, int steps, double clip, bool first_order,
                             QueryStats<T>* stats) {
    Tape<T> tape;
    const std::vector<T> adapted = inner_adapt(obj, params, support, alpha, steps, clip, first_order ? nullptr : &tape);
    std::vector<T> v;
    const T lq = obj.loss_and_grad(adapted, query, v, stats ? &stats->probs : nullptr);
    if (stats) stats->loss = lq;
    if (first_order || alpha == 0.0) return v;

    std::vector<T> u(v.size()), hv;
    for (int i = steps - 1; i >= 0; --i) {
        // theta_{i+1} = theta_i - alpha c(g_i); the clip Jacobian is s (I - gh gh^T) when active.
        const std::vector<T>& g = tape.grads[i];
        const double n = norm2(g);
        const double s = clip_scale(n, clip);
        if (s < 1.0) {
            double dot = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) dot += static_cast<double>(g[j]) * static_cast<double>(v[j]);
            const double k = dot / (n * n);
            for (std::size_t j = 0; j < g.size(); ++j) u[j] = static_cast<T>(s * (v[j] - k * g[j]));
        } else {
            u = v;
        }
        obj.hvp(tape.thetas[i], support, u, hv);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= static_cast<T>(alpha) * hv[j];
    }
    return v;
}

std::string TrainLog::to_csv(bool include_seconds) const {
    std::string out;
    if (!header.empty()) out += "# " + header + "\n";
    out += include_seconds ? "epoch,loss,accuracy,seconds\n" : "epoch,loss,accuracy\n";
    char buf[128];
    for (const auto& e : epochs) {
        if (include_seconds)
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.6f\n", e.epoch, e.loss, e.accuracy, e.seconds);
        else
            std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", e.epoch, e.loss, e.accuracy);
        out += buf;
    }
    return out;
}

void fit_input_normalization(const dataset::Dataset& data, const std::vector<int>& tasks, nnet::Architecture& arch) {
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    const std::size_t per_task = static_cast<std::size_t>(data.config.angle_bins) * data.config.instances_per_bin;
    const std::size_t len = static_cast<std::size_t>(data.config.feature_len);
    for (int k : tasks) {
        const std::size_t t = data.task_index(k);
        const float* p = data.features.data() + t * per_task * len;
        for (std::size_t i = 0; i < per_task * len; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
        }
        n += per_task * len;
    }
    if (n == 0) throw ConfigError("fit_input_normalization: no records");
    const double mean = sum / static_cast<double>(n);
    const double var = std::max(sq / static_cast<double>(n) - mean * mean, 0.0);
    arch.input_shift = mean;
    arch.input_scale = var > 0.0 ? std::sqrt(var) : 1.0;
}

nnet::Architecture architecture_for(const dataset::Dataset& data, const MetaConfig& config) {
    nnet::Architecture arch;
    arch.feature_len = data.config.feature_len;
    arch.n_way = config.n_way;
    arch.filters = config.filters;
    arch.height = config.input_height;
    auto s = dataset::split(data.config);
    fit_input_normalization(data, s.train_tasks.empty() ? data.config.kappa_list : s.train_tasks, arch);
    arch.validate();
    return arch;
}

TrainResult meta_train(const dataset::Dataset& data, const MetaConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const auto tasks = training_tasks(data);
    TrainResult res;
    res.model.arch = architecture_for(data, config);
    res.model.values = nnet::init_params<float>(res.model.arch, derive_seed({config.seed, kInitStream}));
    res.log.header = log_header(data, config, config.first_order ? "fomaml" : "maml");
    const auto obj = network_objective<float>(res.model.arch);
    OuterStep opt(config, res.model.values.size());
    std::vector<double> acc(res.model.values.size());

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::fill(acc.begin(), acc.end(), 0.0);
        double loss_sum = 0.0, acc_sum = 0.0;
        for (int t = 0; t < config.meta_batch; ++t) {
            const auto ep = dataset::sample_episode(
                data, tasks, config.n_way, config.k_shot, config.q_query,
                derive_seed({config.seed, kEpisodeStream, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(t)}));
            QueryStats<float> qs;
            const auto g = meta_gradient<float>(obj, res.model.values, support_of(ep), query_of(ep), config.inner_lr,
                                                config.inner_steps, config.clip, config.first_order, &qs);
            for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
            loss_sum += qs.loss;
            acc_sum += nnet::accuracy(qs.probs, ep.query_labels.data(), static_cast<int>(ep.query_labels.size()),
                                      config.n_way);
        }
        const double inv = 1.0 / config.meta_batch;
        for (auto& x : acc) x *= inv;
        const double s = clip_scale(norm2(acc), config.clip);
        for (auto& x : acc) x *= s;
        const EpochRecord rec{epoch, loss_sum * inv, acc_sum * inv, 0.0};
        check_divergence(rec.loss, config.divergence_loss, epoch);
        opt.apply(res.model.values, acc);
        res.log.epochs.push_back(rec);
        res.log.epochs.back().seconds = seconds_since(t0);
        if (on_epoch) on_epoch(res.log.epochs.back());
    }
    return res;
}

TrainResult cnn_train(const dataset::Dataset& data, const MetaConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const auto tasks = training_tasks(data);
    TrainResult res;
    res.model.arch = architecture_for(data, config);
    res.model.values = nnet::init_params<float>(res.model.arch, derive_seed({config.seed, kInitStream}));
    res.log.header = log_header(data, config, "cnn");
    auto& p = res.model.values;
    std::vector<float> g, probs, x;
    std::vector<int> y;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0, acc_sum = 0.0;
        for (int t = 0; t < config.meta_batch; ++t) {
            const auto ep = dataset::sample_episode(
                data, tasks, config.n_way, config.k_shot, config.q_query,
                derive_seed({config.seed, kEpisodeStream, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(t)}));
            x = ep.support;
            x.insert(x.end(), ep.query.begin(), ep.query.end());
            y = ep.support_labels;
            y.insert(y.end(), ep.query_labels.begin(), ep.query_labels.end());
            const int rows = static_cast<int>(y.size());
            const float l = nnet::loss_and_grad<float>(res.model.arch, p, x.data(), y.data(), rows, g, nullptr, &probs);
            check_divergence(l, config.divergence_loss, epoch);
            loss_sum += l;
            acc_sum += nnet::accuracy(probs, y.data(), rows, config.n_way);
            const auto step = static_cast<float>(config.outer_lr * clip_scale(norm2(g), config.clip));
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * g[i];
        }
        const double inv = 1.0 / config.meta_batch;
        res.log.epochs.push_back({epoch, loss_sum * inv, acc_sum * inv, seconds_since(t0)});
        if (on_epoch) on_epoch(res.log.epochs.back());
    }
    return res;
}

double evaluate(const nnet::ModelParams& model, const dataset::Dataset& eval_data, const MetaConfig& config,
                std::uint64_t eval_seed, const std::vector<int>& tasks) {
    const auto& arch = model.arch;
    if (arch.feature_len != eval_data.config.feature_len)
        throw ConfigError("evaluate: model and dataset feature lengths differ");
    const std::vector<int> pool = tasks.empty() ? eval_data.config.kappa_list : tasks;
    const auto obj = network_objective<float>(arch);
    std::vector<double> accs(static_cast<std::size_t>(config.eval_episodes));
    parallel_for(accs.size(), [&](std::size_t e) {
        const auto ep = dataset::sample_episode(eval_data, pool, arch.n_way, config.k_shot, config.q_query,
                                                derive_seed({eval_seed, static_cast<std::uint64_t>(e)}));
        const auto adapted =
            inner_adapt<float>(obj, model.values, support_of(ep), config.inner_lr, config.inner_steps, config.clip);
        const auto probs = nnet::forward<float>(arch, adapted, ep.query.data(), static_cast<int>(ep.query_labels.size()));
        accs[e] = nnet::accuracy(probs, ep.query_labels.data(), static_cast<int>(ep.query_labels.size()), arch.n_way);
    });
    return std::accumulate(accs.begin(), accs.end(), 0.0) / static_cast<double>(accs.size());
}

std::string config_json(const MetaConfig& c) {
    nlohmann::json j{{"inner_lr", c.inner_lr},     {"outer_lr", c.outer_lr},
                     {"beta", c.beta},             {"inner_steps", c.inner_steps},
                     {"meta_batch", c.meta_batch}, {"epochs", c.epochs},
                     {"n_way", c.n_way},           {"k_shot", c.k_shot},
                     {"q_query", c.q_query},       {"first_order", c.first_order},
                     {"seed", c.seed},             {"clip", c.clip},
                     {"eval_episodes", c.eval_episodes}, {"filters", c.filters},
                     {"input_height", c.input_height},
                     {"optimizer", c.optimizer == OuterOptimizer::adam ? "adam" : "momentum"},
                     {"divergence_loss", c.divergence_loss}};
    return j.dump();
}

template Objective<float> network_objective<float>(const nnet::Architecture&);
template Objective<double> network_objective<double>(const nnet::Architecture&);
template std::vector<float> inner_adapt<float>(const Objective<float>&, const std::vector<float>&, const Batch&, double,
                                               int, double, Tape<float>*);
template std::vector<double> inner_adapt<double>(const Objective<double>&, const std::vector<double>&, const Batch&,
                                                 double, int, double, Tape<double>*);
template std::vector<float> meta_gradient<float>(const Objective<float>&, const std::vector<float>&, const Batch&,
                                                 const Batch&, double, int, double, bool, QueryStats<float>*);
template std::vector<double> meta_gradient<double>(const Objective<double>&, const std::vector<double>&, const Batch&,
                                                   const Batch&, double, int, double, bool, QueryStats<double>*);

}  // namespace threedpm::metalearn
