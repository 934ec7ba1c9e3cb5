#pragma once

// Layer primitives of the convolutional classifier. Activations use channel-major
// layout [C][B][L] (L = h * w for 2-D maps) so that batch-norm statistics run over
// contiguous memory.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "threedpm/dual.hpp"

namespace threedpm::nnet::ops {

/// Row-major C (M x N) = op(A) op(B), or += when `accumulate`. op transposes when flagged.
/// A is M x K (K x M when ta), B is K x N (N x K when tb).
template <class T>
void gemm(bool ta, bool tb, int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

template <>
void gemm<float>(bool, bool, int, int, int, const float*, const float*, float*, bool);
template <>
void gemm<double>(bool, bool, int, int, int, const double*, const double*, double*, bool);
template <>
void gemm<Dual<float>>(bool, bool, int, int, int, const Dual<float>*, const Dual<float>*, Dual<float>*, bool);
template <>
void gemm<Dual<double>>(bool, bool, int, int, int, const Dual<double>*, const Dual<double>*, Dual<double>*, bool);

/// Same-padded 2-D convolution without bias on h x w maps. x: [cin][batch][h * w],
/// w: [cout][cin * kh * kw]. `cols` receives the im2col matrix [cin * kh * kw][batch * h * w]
/// needed by the backward pass.
template <class T>
void conv2d_forward(const T* x, const T* w, int cin, int cout, int batch, int h, int wd, int kh, int kw,
                    std::vector<T>& cols, T* y) {
    const int ph = kh / 2, pw = kw / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * wd, bl = static_cast<std::size_t>(batch) * hw;
    cols.assign(static_cast<std::size_t>(cin) * kh * kw * bl, T(0));
    for (int ci = 0; ci < cin; ++ci)
        for (int ty = 0; ty < kh; ++ty)
            for (int tx = 0; tx < kw; ++tx) {
                T* row = cols.data() + ((static_cast<std::size_t>(ci) * kh + ty) * kw + tx) * bl;
                const int ylo = std::max(0, ph - ty), yhi = std::min(h, h + ph - ty);
                const int xlo = std::max(0, pw - tx), xhi = std::min(wd, wd + pw - tx);
                for (int b = 0; b < batch; ++b) {
                    const T* src = x + (static_cast<std::size_t>(ci) * batch + b) * hw;
                    T* dst = row + static_cast<std::size_t>(b) * hw;
                    for (int r = ylo; r < yhi; ++r)
                        for (int c = xlo; c < xhi; ++c)
                            dst[r * wd + c] = src[(r + ty - ph) * wd + c + tx - pw];
                }
            }
    gemm<T>(false, false, cout, static_cast<int>(bl), cin * kh * kw, w, cols.data(), y, false);
}

/// dx (overwritten, skipped when null) and dw (overwritten) from dy.
template <class T>
void conv2d_backward(const T* dy, const T* w, const std::vector<T>& cols, int cin, int cout, int batch, int h,
                     int wd, int kh, int kw, T* dx, T* dw, std::vector<T>& dcols) {
    const int ph = kh / 2, pw = kw / 2;
    const std::size_t hw = static_cast<std::size_t>(h) * wd, bl = static_cast<std::size_t>(batch) * hw;
    const int taps = cin * kh * kw;
    gemm<T>(false, true, cout, taps, static_cast<int>(bl), dy, cols.data(), dw, false);
    if (!dx) return;
    dcols.assign(static_cast<std::size_t>(taps) * bl, T(0));
    gemm<T>(true, false, taps, static_cast<int>(bl), cout, w, dy, dcols.data(), false);
    std::fill(dx, dx + static_cast<std::size_t>(cin) * bl, T(0));
    for (int ci = 0; ci < cin; ++ci)
        for (int ty = 0; ty < kh; ++ty)
            for (int tx = 0; tx < kw; ++tx) {
                const T* row = dcols.data() + ((static_cast<std::size_t>(ci) * kh + ty) * kw + tx) * bl;
                const int ylo = std::max(0, ph - ty), yhi = std::min(h, h + ph - ty);
                const int xlo = std::max(0, pw - tx), xhi = std::min(wd, wd + pw - tx);
                for (int b = 0; b < batch; ++b) {
                    T* dst = dx + (static_cast<std::size_t>(ci) * batch + b) * hw;
                    const T* src = row + static_cast<std::size_t>(b) * hw;
                    for (int r = ylo; r < yhi; ++r)
                        for (int c = xlo; c < xhi; ++c)
                            dst[(r + ty - ph) * wd + c + tx - pw] += src[r * wd + c];
                }
            }
}

/// 1-D case: a 1 x len map and a 1 x kernel filter.
template <class T>
void conv1d_forward(const T* x, const T* w, int cin, int cout, int batch, int len, int kernel, std::vector<T>& cols,
                    T* y) {
    conv2d_forward(x, w, cin, cout, batch, 1, len, 1, kernel, cols, y);
}

template <class T>
void conv1d_backward(const T* dy, const T* w, const std::vector<T>& cols, int cin, int cout, int batch, int len,
                     int kernel, T* dx, T* dw, std::vector<T>& dcols) {
    conv2d_backward(dy, w, cols, cin, cout, batch, 1, len, 1, kernel, dx, dw, dcols);
}

/// Per-channel normalization over the m = batch * len entries of each channel.
/// With `frozen_mean`/`frozen_var` the given statistics are used as constants.
template <class T>
void batchnorm_forward(const T* x, const T* gamma, const T* beta, int channels, std::size_t m, double eps, T* y,
                       T* xhat, T* inv_std, const double* frozen_mean = nullptr, const double* frozen_var = nullptr) {
    using std::sqrt;
    for (int c = 0; c < channels; ++c) {
        const T* xc = x + c * m;
        T mean(0), var(0);
        if (frozen_mean) {
            mean = T(frozen_mean[c]);
            var = T(frozen_var[c]);
        } else {
            for (std::size_t i = 0; i < m; ++i) mean += xc[i];
            mean /= T(static_cast<double>(m));
            for (std::size_t i = 0; i < m; ++i) {
                const T dv = xc[i] - mean;
                var += dv * dv;
            }
            var /= T(static_cast<double>(m));
        }
        const T is = T(1) / sqrt(var + T(eps));
        inv_std[c] = is;
        for (std::size_t i = 0; i < m; ++i) {
            const T h = (xc[i] - mean) * is;
            xhat[c * m + i] = h;
            y[c * m + i] = gamma[c] * h + beta[c];
        }
    }
}

template <class T>
void batchnorm_backward(const T* dy, const T* xhat, const T* inv_std, const T* gamma, int channels, std::size_t m,
                        bool frozen, T* dx, T* dgamma, T* dbeta) {
    for (int c = 0; c < channels; ++c) {
        const T* dyc = dy + c * m;
        const T* hc = xhat + c * m;
        T sum_dy(0), sum_dy_h(0);
        for (std::size_t i = 0; i < m; ++i) {
            sum_dy += dyc[i];
            sum_dy_h += dyc[i] * hc[i];
        }
        dgamma[c] = sum_dy_h;
        dbeta[c] = sum_dy;
        if (!dx) continue;
        const T scale = gamma[c] * inv_std[c];
        if (frozen) {
            for (std::size_t i = 0; i < m; ++i) dx[c * m + i] = scale * dyc[i];
        } else {
            const T inv_m = T(1.0 / static_cast<double>(m));
            const T mean_dy = sum_dy * inv_m, mean_dy_h = sum_dy_h * inv_m;
            for (std::size_t i = 0; i < m; ++i) dx[c * m + i] = scale * (dyc[i] - mean_dy - hc[i] * mean_dy_h);
        }
    }
}

template <class T>
void relu_forward(const T* x, std::size_t n, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = value_of(x[i]) > 0 ? x[i] : T(0);
}

/// Uses the forward output y to select the active entries.
template <class T>
void relu_backward(const T* dy, const T* y, std::size_t n, T* dx) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = value_of(y[i]) > 0 ? dy[i] : T(0);
}

/// Non-overlapping ph x pw max pooling of `maps` row-major h x w maps; output (h / ph) x (w / pw)
/// (floor). Ties go to the first entry in row-major order.
template <class T>
void maxpool2d_forward(const T* x, std::size_t maps, int h, int w, int ph, int pw, T* y, std::vector<int>& argmax) {
    const int oh = h / ph, ow = w / pw;
    const std::size_t in = static_cast<std::size_t>(h) * w, out = static_cast<std::size_t>(oh) * ow;
    argmax.resize(maps * out);
    for (std::size_t m = 0; m < maps; ++m) {
        const T* xm = x + m * in;
        for (int r = 0; r < oh; ++r)
            for (int c = 0; c < ow; ++c) {
                int best = r * ph * w + c * pw;
                for (int i = 0; i < ph; ++i)
                    for (int j = 0; j < pw; ++j) {
                        const int at = (r * ph + i) * w + c * pw + j;
                        if (value_of(xm[at]) > value_of(xm[best])) best = at;
                    }
                argmax[m * out + r * ow + c] = best;
                y[m * out + r * ow + c] = xm[best];
            }
    }
}

template <class T>
void maxpool2d_backward(const T* dy, const std::vector<int>& argmax, std::size_t maps, int h, int w, int ph, int pw,
                        T* dx) {
    const std::size_t in = static_cast<std::size_t>(h) * w, out = static_cast<std::size_t>(h / ph) * (w / pw);
    std::fill(dx, dx + maps * in, T(0));
    for (std::size_t m = 0; m < maps; ++m)
        for (std::size_t o = 0; o < out; ++o) dx[m * in + argmax[m * out + o]] += dy[m * out + o];
}

/// Pooling along the last axis of `rows` rows of length len; output length len / pool.
template <class T>
void maxpool_forward(const T* x, std::size_t rows, int len, int pool, T* y, std::vector<int>& argmax) {
    maxpool2d_forward(x, rows, 1, len, 1, pool, y, argmax);
}

template <class T>
void maxpool_backward(const T* dy, const std::vector<int>& argmax, std::size_t rows, int len, int pool, T* dx) {
    maxpool2d_backward(dy, argmax, rows, 1, len, 1, pool, dx);
}

/// [C][B][L] -> [B][C * L]
template <class T>
void flatten(const T* x, int channels, int batch, int len, T* y) {
    for (int c = 0; c < channels; ++c)
        for (int b = 0; b < batch; ++b)
            for (int l = 0; l < len; ++l)
                y[(static_cast<std::size_t>(b) * channels + c) * len + l] = x[(static_cast<std::size_t>(c) * batch + b) * len + l];
}

/// [B][C * L] -> [C][B][L]
template <class T>
void unflatten(const T* y, int channels, int batch, int len, T* x) {
    for (int c = 0; c < channels; ++c)
        for (int b = 0; b < batch; ++b)
            for (int l = 0; l < len; ++l)
                x[(static_cast<std::size_t>(c) * batch + b) * len + l] = y[(static_cast<std::size_t>(b) * channels + c) * len + l];
}

/// z[B][N] = x[B][D] w^T + bias, w: [N][D].
template <class T>
void linear_forward(const T* x, const T* w, const T* bias, int batch, int in, int out, T* z) {
    gemm<T>(false, true, batch, out, in, x, w, z, false);
    for (int b = 0; b < batch; ++b)
        for (int j = 0; j < out; ++j) z[static_cast<std::size_t>(b) * out + j] += bias[j];
}

template <class T>
void linear_backward(const T* dz, const T* x, const T* w, int batch, int in, int out, T* dx, T* dw, T* dbias) {
    gemm<T>(true, false, out, in, batch, dz, x, dw, false);
    for (int j = 0; j < out; ++j) {
        T s(0);
        for (int b = 0; b < batch; ++b) s += dz[static_cast<std::size_t>(b) * out + j];
        dbias[j] = s;
    }
    if (dx) gemm<T>(false, false, batch, in, out, dz, w, dx, false);
}

/// Mean categorical cross-entropy of log-softmax(z). Fills row-stochastic probs and, when dz is
/// non-null, the gradient (probs - onehot) / batch.
template <class T>
T softmax_xent(const T* z, const int* labels, int batch, int classes, T* probs, T* dz) {
    using std::exp;
    using std::log;
    T total(0);
    for (int b = 0; b < batch; ++b) {
        const T* zb = z + static_cast<std::size_t>(b) * classes;
        T* pb = probs + static_cast<std::size_t>(b) * classes;
        T mx = zb[0];
        for (int j = 1; j < classes; ++j)
            if (value_of(zb[j]) > value_of(mx)) mx = zb[j];
        T s(0);
        for (int j = 0; j < classes; ++j) {
            pb[j] = exp(zb[j] - mx);
            s += pb[j];
        }
        for (int j = 0; j < classes; ++j) pb[j] /= s;
        if (labels) total += log(s) + mx - zb[labels[b]];
    }
    const T inv_b = T(1.0 / batch);
    if (dz && labels)
        for (int b = 0; b < batch; ++b)
            for (int j = 0; j < classes; ++j) {
                const std::size_t i = static_cast<std::size_t>(b) * classes + j;
                dz[i] = (probs[i] - T(j == labels[b] ? 1.0 : 0.0)) * inv_b;
            }
    return total * inv_b;
}

}  // namespace threedpm::nnet::ops
