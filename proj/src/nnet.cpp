#include "threedpm/nnet.hpp"

#include <atomic>
#include <cmath>

#include <Eigen/Core>
#include <json.hpp>

#include "threedpm/dual.hpp"
#include "threedpm/errors.hpp"
#include "threedpm/nnet_ops.hpp"
#include "threedpm/random.hpp"
#include "threedpm/util.hpp"

namespace threedpm::nnet {

namespace ops {

namespace {

template <class T>
void gemm_real(bool ta, bool tb, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> A(a, ta ? k : m, ta ? m : k);
    Eigen::Map<const Mat> B(b, tb ? n : k, tb ? k : n);
    Eigen::Map<Mat> C(c, m, n);
    if (!accumulate) C.setZero();
    if (ta && tb)
        C.noalias() += A.transpose() * B.transpose();
    else if (ta)
        C.noalias() += A.transpose() * B;
    else if (tb)
        C.noalias() += A * B.transpose();
    else
        C.noalias() += A * B;
}

// (Av + eps Ad)(Bv + eps Bd) = AvBv + eps (AvBd + AdBv), as three real products.
template <class U>
void gemm_dual(bool ta, bool tb, int m, int n, int k, const Dual<U>* a, const Dual<U>* b, Dual<U>* c,
               bool accumulate) {
    thread_local std::vector<U> av, ad, bv, bd, cv, cd;
    const std::size_t na = static_cast<std::size_t>(m) * k, nb = static_cast<std::size_t>(k) * n,
                      nc = static_cast<std::size_t>(m) * n;
    av.resize(na);
    ad.resize(na);
    bv.resize(nb);
    bd.resize(nb);
    cv.resize(nc);
    cd.resize(nc);
    for (std::size_t i = 0; i < na; ++i) av[i] = a[i].v, ad[i] = a[i].d;
    for (std::size_t i = 0; i < nb; ++i) bv[i] = b[i].v, bd[i] = b[i].d;
    gemm_real<U>(ta, tb, m, n, k, av.data(), bv.data(), cv.data(), false);
    gemm_real<U>(ta, tb, m, n, k, av.data(), bd.data(), cd.data(), false);
    gemm_real<U>(ta, tb, m, n, k, ad.data(), bv.data(), cd.data(), true);
    for (std::size_t i = 0; i < nc; ++i) {
        if (accumulate) {
            c[i].v += cv[i];
            c[i].d += cd[i];
        } else {
            c[i] = {cv[i], cd[i]};
        }
    }
}

}  // namespace

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, const float* a, const float* b, float* c, bool acc) {
    gemm_real(ta, tb, m, n, k, a, b, c, acc);
}
template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, const double* a, const double* b, double* c, bool acc) {
    gemm_real(ta, tb, m, n, k, a, b, c, acc);
}
template <>
void gemm<Dual<float>>(bool ta, bool tb, int m, int n, int k, const Dual<float>* a, const Dual<float>* b,
                       Dual<float>* c, bool acc) {
    gemm_dual(ta, tb, m, n, k, a, b, c, acc);
}
template <>
void gemm<Dual<double>>(bool ta, bool tb, int m, int n, int k, const Dual<double>* a, const Dual<double>* b,
                        Dual<double>* c, bool acc) {
    gemm_dual(ta, tb, m, n, k, a, b, c, acc);
}

}  // namespace ops

namespace {

using json = nlohmann::json;

std::atomic<std::uint64_t> g_hvp_calls{0};

constexpr char kCkptMagic[7] = {'3', 'D', 'P', 'M', 'N', 'E', 'T'};
constexpr std::uint16_t kCkptVersion = 1;

struct Offsets {
    std::vector<std::size_t> conv, gamma, beta;
    std::size_t lin_w = 0, lin_b = 0;
};

Offsets offsets(const Architecture& arch) {
    Offsets o;
    std::size_t p = 0;
    for (int i = 0; i < arch.blocks; ++i) {
        const int cin = i == 0 ? 1 : arch.filters;
        o.conv.push_back(p);
        p += static_cast<std::size_t>(arch.filters) * cin * arch.kernel_height() * arch.kernel;
        o.gamma.push_back(p);
        p += arch.filters;
        o.beta.push_back(p);
        p += arch.filters;
    }
    o.lin_w = p;
    p += static_cast<std::size_t>(arch.n_way) * arch.flat_features();
    o.lin_b = p;
    return o;
}

template <class T>
struct BlockCache {
    std::vector<T> cols, xhat, inv_std, relu_out;
    std::vector<int> argmax;
};

// Forward pass plus optional reverse pass. Returns the mean loss (zero when labels is null).
template <class T>
T run(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels, int rows,
      const BnStats* frozen, std::vector<T>* grad, std::vector<T>* probs_out, BnStats* stats_out) {
    arch.validate();
    if (rows < 1) throw ConfigError("network: batch must contain at least one row");
    if (params.size() != arch.param_count())
        throw ConfigError("network: parameter vector has " + std::to_string(params.size()) + " entries, expected " +
                          std::to_string(arch.param_count()));
    if (frozen && (frozen->mean.size() != static_cast<std::size_t>(arch.blocks) * arch.filters ||
                   frozen->var.size() != frozen->mean.size()))
        throw ConfigError("network: frozen batch-norm statistics have the wrong size");

    const Offsets off = offsets(arch);
    const int f = arch.filters;
    std::vector<BlockCache<T>> cache(arch.blocks);

    std::vector<T> x(static_cast<std::size_t>(rows) * arch.feature_len);
    const double inv_scale = 1.0 / arch.input_scale;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = T((batch[i] - arch.input_shift) * inv_scale);

    if (stats_out) {
        stats_out->mean.clear();
        stats_out->var.clear();
    }
    std::vector<T> conv_out, bn_out;
    for (int bi = 0; bi < arch.blocks; ++bi) {
        auto& c = cache[bi];
        const int cin = bi == 0 ? 1 : f;
        const MapShape in = arch.block_shape(bi), out = arch.block_shape(bi + 1);
        const std::size_t m = static_cast<std::size_t>(rows) * in.size();
        conv_out.assign(static_cast<std::size_t>(f) * m, T(0));
        ops::conv2d_forward(x.data(), params.data() + off.conv[bi], cin, f, rows, in.h, in.w, arch.kernel_height(),
                            arch.kernel, c.cols, conv_out.data());
        if (stats_out) {
            for (int ch = 0; ch < f; ++ch) {
                double mu = 0.0, var = 0.0;
                for (std::size_t i = 0; i < m; ++i) mu += static_cast<double>(value_of(conv_out[ch * m + i]));
                mu /= static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i) {
                    const double d = static_cast<double>(value_of(conv_out[ch * m + i])) - mu;
                    var += d * d;
                }
                stats_out->mean.push_back(mu);
                stats_out->var.push_back(var / static_cast<double>(m));
            }
        }
        bn_out.assign(conv_out.size(), T(0));
        c.xhat.assign(conv_out.size(), T(0));
        c.inv_std.assign(f, T(0));
        ops::batchnorm_forward(conv_out.data(), params.data() + off.gamma[bi], params.data() + off.beta[bi], f, m,
                               arch.bn_eps, bn_out.data(), c.xhat.data(), c.inv_std.data(),
                               frozen ? frozen->mean.data() + bi * f : nullptr,
                               frozen ? frozen->var.data() + bi * f : nullptr);
        c.relu_out.assign(bn_out.size(), T(0));
        ops::relu_forward(bn_out.data(), bn_out.size(), c.relu_out.data());
        x.assign(static_cast<std::size_t>(f) * rows * out.size(), T(0));
        ops::maxpool2d_forward(c.relu_out.data(), static_cast<std::size_t>(f) * rows, in.h, in.w, in.h / out.h,
                               in.w / out.w, x.data(), c.argmax);
    }

    const int lf = arch.final_length();
    const int d = arch.flat_features();
    std::vector<T> flat(static_cast<std::size_t>(rows) * d);
    ops::flatten(x.data(), f, rows, lf, flat.data());
    std::vector<T> z(static_cast<std::size_t>(rows) * arch.n_way), probs(z.size()), dz;
    ops::linear_forward(flat.data(), params.data() + off.lin_w, params.data() + off.lin_b, rows, d, arch.n_way,
                        z.data());
    if (grad && labels) dz.resize(z.size());
    const T loss = ops::softmax_xent(z.data(), labels, rows, arch.n_way, probs.data(),
                                     grad && labels ? dz.data() : nullptr);
    if (probs_out) *probs_out = std::move(probs);
    if (!grad || !labels) return loss;

    std::vector<T>& g = *grad;
    g.assign(params.size(), T(0));
    std::vector<T> dflat(flat.size());
    ops::linear_backward(dz.data(), flat.data(), params.data() + off.lin_w, rows, d, arch.n_way, dflat.data(),
                         g.data() + off.lin_w, g.data() + off.lin_b);
    std::vector<T> dx(x.size()), drelu, dbn, dconv, dcols;
    ops::unflatten(dflat.data(), f, rows, lf, dx.data());
    for (int bi = arch.blocks - 1; bi >= 0; --bi) {
        auto& c = cache[bi];
        const int cin = bi == 0 ? 1 : f;
        const MapShape in = arch.block_shape(bi), out = arch.block_shape(bi + 1);
        const std::size_t m = static_cast<std::size_t>(rows) * in.size();
        drelu.assign(static_cast<std::size_t>(f) * m, T(0));
        ops::maxpool2d_backward(dx.data(), c.argmax, static_cast<std::size_t>(f) * rows, in.h, in.w, in.h / out.h,
                                in.w / out.w, drelu.data());
        dbn.assign(drelu.size(), T(0));
        ops::relu_backward(drelu.data(), c.relu_out.data(), drelu.size(), dbn.data());
        dconv.assign(dbn.size(), T(0));
        ops::batchnorm_backward(dbn.data(), c.xhat.data(), c.inv_std.data(), params.data() + off.gamma[bi], f, m,
                                frozen != nullptr, dconv.data(), g.data() + off.gamma[bi], g.data() + off.beta[bi]);
        if (bi > 0) {
            dx.assign(static_cast<std::size_t>(cin) * m, T(0));
            ops::conv2d_backward(dconv.data(), params.data() + off.conv[bi], c.cols, cin, f, rows, in.h, in.w,
                                 arch.kernel_height(), arch.kernel, dx.data(), g.data() + off.conv[bi], dcols);
        } else {
            ops::conv2d_backward<T>(dconv.data(), params.data() + off.conv[bi], c.cols, cin, f, rows, in.h, in.w,
                                    arch.kernel_height(), arch.kernel, nullptr, g.data() + off.conv[bi], dcols);
        }
    }
    return loss;
}

}  // namespace

void Architecture::validate() const {
    if (feature_len < 1 || n_way < 1 || blocks < 1 || filters < 1 || kernel < 1 || pool < 1)
        throw ConfigError("architecture: sizes must be positive");
    if (kernel % 2 == 0) throw ConfigError("architecture: kernel must be odd for same padding");
    if (height < 1 || feature_len % height != 0)
        throw ConfigError("architecture: height must divide feature_len");
    if (!(input_scale > 0.0) || !std::isfinite(input_shift)) throw ConfigError("architecture: bad input normalization");
    if (!(bn_eps > 0.0)) throw ConfigError("architecture: bn_eps must be > 0");
}

MapShape Architecture::block_shape(int block) const {
    MapShape s{height, feature_len / height};
    for (int i = 0; i < block; ++i) {
        if (s.h >= pool) s.h /= pool;
        if (s.w >= pool) s.w /= pool;
    }
    return s;
}

int Architecture::block_length(int block) const { return block_shape(block).size(); }

int Architecture::final_length() const { return block_length(blocks); }

int Architecture::flat_features() const { return filters * final_length(); }

std::size_t Architecture::param_count() const {
    std::size_t n = 0;
    for (int i = 0; i < blocks; ++i)
        n += static_cast<std::size_t>(filters) * (i == 0 ? 1 : filters) * kernel_height() * kernel + 2 * filters;
    return n + static_cast<std::size_t>(n_way) * flat_features() + n_way;
}

std::string Architecture::to_json() const {
    json j{{"feature_len", feature_len}, {"height", height},         {"n_way", n_way}, {"blocks", blocks},
           {"filters", filters},         {"kernel", kernel},         {"pool", pool},
           {"bn_eps", bn_eps},           {"input_shift", input_shift}, {"input_scale", input_scale}};
    return j.dump();
}

Architecture Architecture::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        Architecture a;
        a.feature_len = j.at("feature_len").get<int>();
        a.height = j.value("height", 1);
        a.n_way = j.at("n_way").get<int>();
        a.blocks = j.at("blocks").get<int>();
        a.filters = j.at("filters").get<int>();
        a.kernel = j.at("kernel").get<int>();
        a.pool = j.at("pool").get<int>();
        a.bn_eps = j.at("bn_eps").get<double>();
        a.input_shift = j.at("input_shift").get<double>();
        a.input_scale = j.at("input_scale").get<double>();
        a.validate();
        return a;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed architecture record: ") + e.what());
    }
}

std::vector<LayerSlot> layout(const Architecture& arch) {
    const Offsets o = offsets(arch);
    std::vector<LayerSlot> slots;
    for (int i = 0; i < arch.blocks; ++i) {
        const std::string s = std::to_string(i);
        slots.push_back({"conv" + s + ".weight", o.conv[i], o.gamma[i] - o.conv[i]});
        slots.push_back({"bn" + s + ".gamma", o.gamma[i], static_cast<std::size_t>(arch.filters)});
        slots.push_back({"bn" + s + ".beta", o.beta[i], static_cast<std::size_t>(arch.filters)});
    }
    slots.push_back({"linear.weight", o.lin_w, o.lin_b - o.lin_w});
    slots.push_back({"linear.bias", o.lin_b, static_cast<std::size_t>(arch.n_way)});
    return slots;
}

template <class T>
std::vector<T> init_params(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    const Offsets o = offsets(arch);
    std::vector<T> p(arch.param_count(), T(0));
    Rng rng(seed);
    auto fill = [&](std::size_t at, std::size_t n, double fan_in, double fan_out) {
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        for (std::size_t i = 0; i < n; ++i) p[at + i] = static_cast<T>(rng.uniform(-a, a));
    };
    for (int i = 0; i < arch.blocks; ++i) {
        const int cin = i == 0 ? 1 : arch.filters;
        const int taps = arch.kernel_height() * arch.kernel;
        fill(o.conv[i], static_cast<std::size_t>(arch.filters) * cin * taps, cin * taps, arch.filters * taps);
        for (int c = 0; c < arch.filters; ++c) p[o.gamma[i] + c] = T(1);
    }
    fill(o.lin_w, static_cast<std::size_t>(arch.n_way) * arch.flat_features(), arch.flat_features(), arch.n_way);
    return p;
}

template <class T>
std::vector<T> forward(const Architecture& arch, const std::vector<T>& params, const float* batch, int rows,
                       const BnStats* frozen) {
    std::vector<T> probs;
    run<T>(arch, params, batch, nullptr, rows, frozen, nullptr, &probs, nullptr);
    return probs;
}

template <class T>
T loss(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels, int rows,
       const BnStats* frozen) {
    return run<T>(arch, params, batch, labels, rows, frozen, nullptr, nullptr, nullptr);
}

template <class T>
T loss_and_grad(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels,
                int rows, std::vector<T>& grad, const BnStats* frozen, std::vector<T>* probs) {
    return run<T>(arch, params, batch, labels, rows, frozen, &grad, probs, nullptr);
}

template <class T>
void hvp(const Architecture& arch, const std::vector<T>& params, const float* batch, const int* labels, int rows,
         const std::vector<T>& v, std::vector<T>& out, std::vector<T>* grad) {
    if (v.size() != params.size()) throw ConfigError("hvp: direction has the wrong length");
    g_hvp_calls.fetch_add(1, std::memory_order_relaxed);
    std::vector<Dual<T>> p(params.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual<T>(params[i], v[i]);
    std::vector<Dual<T>> g;
    run<Dual<T>>(arch, p, batch, labels, rows, nullptr, &g, nullptr, nullptr);
    out.resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].d;
    if (grad) {
        grad->resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) (*grad)[i] = g[i].v;
    }
}

BnStats batch_statistics(const Architecture& arch, const std::vector<double>& params, const float* batch, int rows) {
    BnStats s;
    run<double>(arch, params, batch, nullptr, rows, nullptr, nullptr, nullptr, &s);
    return s;
}

double cross_entropy(const std::vector<double>& probs, const std::vector<int>& labels, int classes) {
    if (labels.empty() || probs.size() != labels.size() * static_cast<std::size_t>(classes))
        throw ConfigError("cross_entropy: probability rows and labels disagree");
    double total = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b)
        total -= std::log(std::max(probs[b * classes + labels[b]], 1e-12));
    return total / static_cast<double>(labels.size());
}

template <class T>
double accuracy(const std::vector<T>& probs, const int* labels, int rows, int classes) {
    int hits = 0;
    for (int b = 0; b < rows; ++b) {
        int best = 0;
        for (int j = 1; j < classes; ++j)
            if (probs[static_cast<std::size_t>(b) * classes + j] > probs[static_cast<std::size_t>(b) * classes + best])
                best = j;
        hits += best == labels[b];
    }
    return static_cast<double>(hits) / rows;
}

std::uint64_t hvp_calls() { return g_hvp_calls.load(); }
void reset_hvp_calls() { g_hvp_calls.store(0); }

std::string serialize_checkpoint(const ModelParams& model) {
    if (model.values.size() != model.arch.param_count()) throw ConfigError("checkpoint: parameter count mismatch");
    const std::string a = model.arch.to_json();
    std::string out(kCkptMagic, 7);
    put_u16(out, kCkptVersion);
    put_u32(out, static_cast<std::uint32_t>(a.size()));
    out += a;
    put_u64(out, model.values.size());
    for (float v : model.values) put_f32(out, v);
    Fnv1a64 h;
    h.update(out);
    put_u64(out, h.digest());
    return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 8) throw IoError("checkpoint: truncated input");
    Fnv1a64 h;
    h.update(bytes.data(), bytes.size() - 8);
    ByteReader tail(bytes, "checkpoint");
    tail.bytes(bytes.size() - 8);
    if (tail.u64() != h.digest()) throw IoError("checkpoint: checksum mismatch");

    ByteReader rd(bytes, "checkpoint");
    if (rd.bytes(7) != std::string(kCkptMagic, 7)) throw IoError("checkpoint: bad magic");
    const auto version = rd.u16();
    if (version != kCkptVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
    ModelParams m;
    m.arch = Architecture::from_json(rd.bytes(rd.u32()));
    const auto n = rd.u64();
    if (n != m.arch.param_count()) throw IoError("checkpoint: parameter count disagrees with architecture");
    if (rd.remaining() != n * 4 + 8) throw IoError("checkpoint: payload size mismatch");
    m.values.resize(n);
    for (auto& v : m.values) v = rd.f32();
    return m;
}

void save_checkpoint(const ModelParams& model, const std::string& path) {
    write_file(path, serialize_checkpoint(model));
}

ModelParams load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

#define THREEDPM_INSTANTIATE(T)                                                                                     \
    template std::vector<T> init_params<T>(const Architecture&, std::uint64_t);                                     \
    template std::vector<T> forward<T>(const Architecture&, const std::vector<T>&, const float*, int,               \
                                       const BnStats*);                                                             \
    template T loss<T>(const Architecture&, const std::vector<T>&, const float*, const int*, int, const BnStats*);   \
    template T loss_and_grad<T>(const Architecture&, const std::vector<T>&, const float*, const int*, int,           \
                                std::vector<T>&, const BnStats*, std::vector<T>*);                                  \
    template void hvp<T>(const Architecture&, const std::vector<T>&, const float*, const int*, int,                 \
                         const std::vector<T>&, std::vector<T>&, std::vector<T>*);                                  \
    template double accuracy<T>(const std::vector<T>&, const int*, int, int);

THREEDPM_INSTANTIATE(float)
THREEDPM_INSTANTIATE(double)

#undef THREEDPM_INSTANTIATE

}  // namespace threedpm::nnet
