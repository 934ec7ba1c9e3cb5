#include <doctest.h>

#include <cmath>
#include <vector>

#include "threedpm/dataset.hpp"
#include "threedpm/errors.hpp"
#include "threedpm/metalearn.hpp"
#include "threedpm/random.hpp"

using namespace threedpm;
using namespace threedpm::metalearn;

namespace {

// L = 1/2 ||q - c||^2 where the batch row count selects c.
Objective<double> quadratic(std::vector<double> centers) {
    Objective<double> o;
    o.loss_and_grad = [centers](const std::vector<double>& q, const Batch& b, std::vector<double>& g,
                                std::vector<double>*) {
        const double c = centers.at(static_cast<std::size_t>(b.rows));
        g.resize(q.size());
        double l = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            g[i] = q[i] - c;
            l += 0.5 * g[i] * g[i];
        }
        return l;
    };
    o.hvp = [](const std::vector<double>&, const Batch&, const std::vector<double>& v, std::vector<double>& out) {
        out = v;
    };
    return o;
}

// L = a . q: zero Hessian.
Objective<double> linear(std::vector<double> a) {
    Objective<double> o;
    o.loss_and_grad = [a](const std::vector<double>& q, const Batch&, std::vector<double>& g, std::vector<double>*) {
        g = a;
        double l = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) l += a[i] * q[i];
        return l;
    };
    o.hvp = [](const std::vector<double>&, const Batch&, const std::vector<double>& v, std::vector<double>& out) {
        out.assign(v.size(), 0.0);
    };
    return o;
}

const Batch kSupport{nullptr, nullptr, 0};
const Batch kQuery{nullptr, nullptr, 1};

double vnorm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

struct NetProblem {
    nnet::Architecture arch;
    std::vector<float> xs, xq;
    std::vector<int> ys, yq;
    std::vector<double> params;

    NetProblem() {
        arch.feature_len = 12;
        arch.n_way = 3;
        arch.blocks = 2;
        arch.filters = 4;
        Rng rng(404);
        xs.resize(6 * 12);
        xq.resize(9 * 12);
        for (auto& v : xs) v = static_cast<float>(rng.normal());
        for (auto& v : xq) v = static_cast<float>(rng.normal());
        ys = {0, 1, 2, 0, 1, 2};
        yq = {0, 1, 2, 0, 1, 2, 0, 1, 2};
        params = nnet::init_params<double>(arch, 8);
    }
    Batch support() const { return {xs.data(), ys.data(), 6}; }
    Batch query() const { return {xq.data(), yq.data(), 9}; }
};

double meta_loss(const Objective<double>& obj, const NetProblem& p, const std::vector<double>& params, double alpha,
                 int steps, double clip) {
    const auto adapted = inner_adapt(obj, params, p.support(), alpha, steps, clip);
    std::vector<double> g;
    return obj.loss_and_grad(adapted, p.query(), g, nullptr);
}

void check_meta_gradient_fd(double alpha, int steps, double clip) {
    NetProblem p;
    const auto obj = network_objective<double>(p.arch);
    const auto mg = meta_gradient(obj, p.params, p.support(), p.query(), alpha, steps, clip, false);
    std::vector<double> fd(p.params.size());
    auto x = p.params;
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = meta_loss(obj, p, x, alpha, steps, clip);
        x[i] = x0 - h;
        const double dn = meta_loss(obj, p, x, alpha, steps, clip);
        x[i] = x0;
        fd[i] = (up - dn) / (2 * h);
    }
    std::vector<double> diff(fd.size());
    for (std::size_t i = 0; i < fd.size(); ++i) diff[i] = mg[i] - fd[i];
    CHECK(vnorm(diff) / vnorm(fd) <= 1e-3);
    // The second-order terms matter: the first-order gradient is measurably different.
    const auto fo = meta_gradient(obj, p.params, p.support(), p.query(), alpha, steps, clip, true);
    for (std::size_t i = 0; i < fd.size(); ++i) diff[i] = fo[i] - fd[i];
    CHECK(vnorm(diff) / vnorm(fd) > 1e-2);
}

dataset::Dataset tiny_dataset() {
    dataset::DatasetConfig c;
    c.kappa_list = {0, 1, 2, 3};
    c.angle_bins = 8;
    c.instances_per_bin = 6;
    c.feature_len = 16;
    c.base_seed = 3;
    return dataset::generate(c);
}

MetaConfig tiny_meta() {
    MetaConfig m;
    m.n_way = 3;
    m.k_shot = 1;
    m.q_query = 2;
    m.meta_batch = 2;
    m.epochs = 3;
    m.filters = 4;
    m.eval_episodes = 10;
    m.seed = 17;
    return m;
}

}  // namespace

TEST_SUITE("metalearn") {
    TEST_CASE("inner adaptation on the quadratic") {
        const auto obj = quadratic({0.0, 0.0});
        CHECK(inner_adapt(obj, {1.0}, kSupport, 0.5, 1, 10.0)[0] == 0.5);
        CHECK(inner_adapt(obj, {1.0}, kSupport, 0.5, 3, 10.0)[0] == doctest::Approx(0.125).epsilon(1e-15));
        Tape<double> tape;
        inner_adapt(obj, {2.0, -1.0}, kSupport, 0.25, 4, 10.0, &tape);
        CHECK(tape.thetas.size() == 5);
        CHECK(tape.grads.size() == 4);
        CHECK(tape.thetas.back()[0] == doctest::Approx(2.0 * std::pow(0.75, 4)));
        // Clipping caps the step length.
        const auto clipped = inner_adapt(obj, {100.0}, kSupport, 0.5, 1, 10.0);
        CHECK(clipped[0] == doctest::Approx(95.0));
    }

    TEST_CASE("MAML and first-order gradients on the quadratic") {
        const auto obj = quadratic({0.0, 0.0});
        const double alpha = 0.5;
        CHECK(meta_gradient(obj, {1.0}, kSupport, kQuery, alpha, 1, 10.0, false)[0] == 0.25);
        CHECK(meta_gradient(obj, {1.0}, kSupport, kQuery, alpha, 1, 10.0, true)[0] == 0.5);
        for (int k = 1; k <= 5; ++k) {
            for (double a : {0.1, 0.4, 0.5, 0.9}) {
                // Support centre 0.3, query centre -0.2.
                const auto o = quadratic({0.3, -0.2});
                const double q = 1.7;
                const double qk = 0.3 + std::pow(1.0 - a, k) * (q - 0.3);
                const double query_grad = qk + 0.2;
                const double maml = meta_gradient(o, {q}, kSupport, kQuery, a, k, 10.0, false)[0];
                const double fomaml = meta_gradient(o, {q}, kSupport, kQuery, a, k, 10.0, true)[0];
                CHECK(std::abs(maml - std::pow(1.0 - a, k) * query_grad) <= 1e-14);
                CHECK(std::abs(fomaml - query_grad) <= 1e-14);
            }
        }
    }

    TEST_CASE("clipped quadratic: the clip Jacobian") {
        // A clipped step alpha * clip * g / |g| is constant in one dimension, so the adaptation
        // Jacobian is 1 and the meta-gradient is the query gradient.
        const auto obj = quadratic({0.0, 0.0});
        const double g = meta_gradient(obj, {100.0}, kSupport, kQuery, 0.5, 1, 10.0, false)[0];
        CHECK(g == doctest::Approx(95.0));
        // Two dimensions: directions orthogonal to the gradient are scaled by alpha * clip / |g|.
        const std::vector<double> q{30.0, 40.0};
        const auto mg = meta_gradient(obj, q, kSupport, kQuery, 0.5, 1, 10.0, false);
        const auto adapted = inner_adapt(obj, q, kSupport, 0.5, 1, 10.0);
        // J = I - alpha * s (I - u u^T), s = clip / |q| = 0.2, u = q / |q|.
        const double s = 0.2, u0 = 0.6, u1 = 0.8;
        const double j00 = 1 - 0.5 * s * (1 - u0 * u0), j01 = 0.5 * s * u0 * u1, j11 = 1 - 0.5 * s * (1 - u1 * u1);
        CHECK(mg[0] == doctest::Approx(j00 * adapted[0] + j01 * adapted[1]));
        CHECK(mg[1] == doctest::Approx(j01 * adapted[0] + j11 * adapted[1]));
    }

    TEST_CASE("zero Hessian or zero step makes MAML first order") {
        const auto lin = linear({0.5, -2.0, 1.0});
        const std::vector<double> q{1.0, 2.0, 3.0};
        CHECK(meta_gradient(lin, q, kSupport, kQuery, 0.4, 3, 0.0, false) ==
              meta_gradient(lin, q, kSupport, kQuery, 0.4, 3, 0.0, true));
        NetProblem p;
        const auto obj = network_objective<double>(p.arch);
        const auto a = meta_gradient(obj, p.params, p.support(), p.query(), 0.0, 2, 10.0, false);
        const auto b = meta_gradient(obj, p.params, p.support(), p.query(), 0.0, 2, 10.0, true);
        CHECK(a == b);
    }

    TEST_CASE("meta-gradient of a small network against finite differences") {
        SUBCASE("one step") { check_meta_gradient_fd(0.4, 1, 0.0); }
        SUBCASE("two steps") { check_meta_gradient_fd(0.2, 2, 0.0); }
        SUBCASE("active clip") {
            NetProblem p;
            std::vector<double> g;
            network_objective<double>(p.arch).loss_and_grad(p.params, p.support(), g, nullptr);
            check_meta_gradient_fd(0.4, 1, 0.5 * vnorm(g));
        }
    }

    TEST_CASE("first-order training performs no Hessian-vector products") {
        const auto data = tiny_dataset();
        auto m = tiny_meta();
        m.first_order = true;
        nnet::reset_hvp_calls();
        const auto fo = meta_train(data, m);
        CHECK(nnet::hvp_calls() == 0);
        CHECK(fo.log.epochs.size() == 3);
        m.first_order = false;
        m.inner_steps = 2;
        const auto so = meta_train(data, m);
        CHECK(nnet::hvp_calls() == static_cast<std::uint64_t>(m.epochs * m.meta_batch * m.inner_steps));
        CHECK(so.model.values != fo.model.values);
    }

    TEST_CASE("zero epochs returns the initialization") {
        const auto data = tiny_dataset();
        auto m = tiny_meta();
        m.epochs = 0;
        const auto r = meta_train(data, m);
        CHECK(r.log.epochs.empty());
        CHECK(r.model.values == nnet::init_params<float>(r.model.arch, derive_seed({m.seed, 0x1417})));
        CHECK(cnn_train(data, m).model.values == r.model.values);
    }

    TEST_CASE("training is deterministic and logged") {
        const auto data = tiny_dataset();
        const auto m = tiny_meta();
        const auto a = meta_train(data, m), b = meta_train(data, m);
        CHECK(a.model.values == b.model.values);
        CHECK(a.log.to_csv(false) == b.log.to_csv(false));
        const auto csv = a.log.to_csv();
        CHECK(csv.rfind("# algorithm=maml", 0) == 0);
        CHECK(csv.find("\nepoch,loss,accuracy,seconds\n") != std::string::npos);
        for (const auto& e : a.log.epochs) {
            CHECK(e.accuracy >= 0.0);
            CHECK(e.accuracy <= 1.0);
            CHECK(std::isfinite(e.loss));
        }
        CHECK(a.model.arch.input_scale > 0.0);
        CHECK(a.model.arch.input_shift < 0.0);
    }

    TEST_CASE("outer optimizers take their documented first step") {
        const auto data = tiny_dataset();
        for (auto opt : {OuterOptimizer::momentum, OuterOptimizer::adam}) {
            auto m = tiny_meta();
            m.epochs = 1;
            m.meta_batch = 1;
            m.first_order = true;
            m.optimizer = opt;
            m.outer_lr = 0.01;
            const auto r = meta_train(data, m);
            const auto arch = r.model.arch;
            const auto init = nnet::init_params<float>(arch, derive_seed({m.seed, 0x1417}));
            const auto ep = dataset::sample_episode(data, {1, 3}, m.n_way, m.k_shot, m.q_query,
                                                    derive_seed({m.seed, 0xe915, 1, 0}));
            const auto g = meta_gradient<float>(network_objective<float>(arch), init, support_of(ep), query_of(ep),
                                                m.inner_lr, m.inner_steps, m.clip, true);
            double gn = 0.0;
            for (float x : g) gn += static_cast<double>(x) * x;
            gn = std::sqrt(gn);
            const double s = gn > m.clip ? m.clip / gn : 1.0;
            for (std::size_t i = 0; i < init.size(); ++i) {
                const double gi = s * g[i];
                const double step = opt == OuterOptimizer::momentum ? m.outer_lr * (1 - m.beta) * gi
                                                                    : m.outer_lr * gi / (std::abs(gi) + 1e-8);
                CHECK(r.model.values[i] == doctest::Approx(init[i] - step).epsilon(1e-5));
            }
        }
    }

    TEST_CASE("first-order single task step is SGD on the adapted query loss") {
        NetProblem p;
        const auto obj = network_objective<double>(p.arch);
        const auto adapted = inner_adapt(obj, p.params, p.support(), 0.4, 1, 10.0);
        std::vector<double> gq;
        obj.loss_and_grad(adapted, p.query(), gq, nullptr);
        CHECK(meta_gradient(obj, p.params, p.support(), p.query(), 0.4, 1, 10.0, true) == gq);
    }

    TEST_CASE("CNN baseline step equals one inner step on the pooled episode") {
        const auto data = tiny_dataset();
        auto m = tiny_meta();
        m.epochs = 1;
        m.meta_batch = 1;
        m.outer_lr = 0.05;
        const auto r = cnn_train(data, m);
        const auto arch = r.model.arch;
        const auto init = nnet::init_params<float>(arch, derive_seed({m.seed, 0x1417}));
        const auto ep = dataset::sample_episode(data, {1, 3}, m.n_way, m.k_shot, m.q_query,
                                                derive_seed({m.seed, 0xe915, 1, 0}));
        auto x = ep.support;
        x.insert(x.end(), ep.query.begin(), ep.query.end());
        auto y = ep.support_labels;
        y.insert(y.end(), ep.query_labels.begin(), ep.query_labels.end());
        const Batch pooled{x.data(), y.data(), static_cast<int>(y.size())};
        const auto expect = inner_adapt<float>(network_objective<float>(arch), init, pooled, m.outer_lr, 1, m.clip);
        CHECK(r.model.values == expect);
    }

    TEST_CASE("evaluation is deterministic and bounded") {
        const auto data = tiny_dataset();
        const auto m = tiny_meta();
        const auto r = meta_train(data, m);
        const double a = evaluate(r.model, data, m, 5, {0, 2});
        CHECK(a == evaluate(r.model, data, m, 5, {0, 2}));
        CHECK(a >= 0.0);
        CHECK(a <= 1.0);
        auto wrong = r.model;
        wrong.arch.feature_len = 20;
        CHECK_THROWS_AS(evaluate(wrong, data, m, 5), ConfigError);
    }

    TEST_CASE("divergence and validation") {
        const auto data = tiny_dataset();
        auto m = tiny_meta();
        m.divergence_loss = 1e-3;
        CHECK_THROWS_AS(meta_train(data, m), NumericalError);
        m = tiny_meta();
        m.inner_lr = 0.0;
        CHECK_THROWS_AS(m.validate(), ConfigError);
        m = tiny_meta();
        m.beta = 1.0;
        CHECK_THROWS_AS(m.validate(), ConfigError);
        m = tiny_meta();
        m.n_way = 20;
        CHECK_THROWS_AS(meta_train(data, m), ConfigError);
        const auto obj = quadratic({0.0, 0.0});
        CHECK_THROWS_AS(inner_adapt(obj, {std::nan("")}, kSupport, 0.5, 1, 10.0), NumericalError);
    }

    TEST_CASE("two-dimensional input switch") {
        const auto data = tiny_dataset();
        auto m = tiny_meta();
        m.input_height = 4;
        const auto arch = architecture_for(data, m);
        CHECK(arch.height == 4);
        CHECK(arch.kernel_height() == 3);
        const auto res = meta_train(data, m);
        CHECK(res.model.arch.height == 4);
        CHECK(res.model.values.size() == arch.param_count());
        const double acc = evaluate(res.model, data, m, 5);
        CHECK(acc >= 0.0);
        CHECK(acc <= 1.0);
        m.input_height = 3;
        CHECK_THROWS_AS(meta_train(data, m), ConfigError);
        m.input_height = 0;
        CHECK_THROWS_AS(m.validate(), ConfigError);
    }
}
