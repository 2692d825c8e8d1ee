#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gradleak/errors.hpp"

namespace gradleak {

/// Dense N-dimensional array of doubles, row-major, explicit shape.
/// Value type: copies are deep, operations never mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor of the given shape. Extents must be positive.
    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    static Tensor full(std::vector<std::size_t> shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> data) {
        if (checked_size(shape) != data.size()) {
            throw DimensionError("tensor data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_string(shape));
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    double at(std::size_t i) const { return data_[flat({i})]; }
    double at(std::size_t i, std::size_t j) const { return data_[flat({i, j})]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const { return data_[flat({i, j, k})]; }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[flat({i, j, k, l})];
    }
    double& at(std::size_t i) { return data_[flat({i})]; }
    double& at(std::size_t i, std::size_t j) { return data_[flat({i, j})]; }
    double& at(std::size_t i, std::size_t j, std::size_t k) { return data_[flat({i, j, k})]; }
    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[flat({i, j, k, l})];
    }

    /// Same data, different shape (sizes must agree).
    Tensor reshaped(std::vector<std::size_t> new_shape) const {
        if (checked_size(new_shape) != size()) {
            throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                                 shape_string(new_shape));
        }
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Bitwise equality (shape and every element). NaN != NaN as usual.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }
    friend bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
    std::string shape_string() const { return shape_string(shape_); }

private:
    static std::size_t checked_size(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw DimensionError("zero extent in shape " + shape_string(shape));
            n *= e;
        }
        return n;
    }

    std::size_t flat(std::initializer_list<std::size_t> idx) const {
        assert(idx.size() == shape_.size());
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) {
            assert(i < shape_[axis]);
            off = off * shape_[axis] + i;
            ++axis;
        }
        return off;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape_string() + " and " +
                             b.shape_string() + " differ");
    }
}

/// Seedable deterministic generator: mt19937_64 stream, uniforms via 53-bit
/// mantissa draws, normals via Box-Muller on that stream (spare cached).
/// Identical seeds give identical streams within one build of this library;
/// cross-implementation bit-equality is not promised.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi). Requires lo < hi.
    double uniform(double lo, double hi) {
        if (!(lo < hi)) {
            throw UsageError("uniform bounds must satisfy lo < hi, got [" + std::to_string(lo) +
                             ", " + std::to_string(hi) + ")");
        }
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = static_cast<double>((gen_() >> 11) + 1) * 0x1.0p-53;
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline Tensor sample_normal(Rng& rng, std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

inline Tensor sample_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
    if (!(lo < hi)) {
        throw UsageError("sample_uniform requires lo < hi");
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// ---- elementwise helpers ----

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor scaled(const Tensor& a, double s) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

/// out += alpha * x
inline void axpy(double alpha, const Tensor& x, Tensor& out) {
    check_same_shape(x, out, "axpy");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * x[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double frobenius_sq(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

inline bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(t[i])) return false;
    }
    return true;
}

/// Mean of squared elementwise differences.
inline double mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

// ---- linear algebra ----

/// Standard matrix product [m x k] . [k x n] -> [m x n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimensionError("matmul expects rank-2 tensors, got " + a.shape_string() + " and " +
                             b.shape_string());
    }
    const std::size_t m = a.extent(0), k = a.extent(1);
    const std::size_t k2 = b.extent(0), n = b.extent(1);
    if (k != k2) {
        throw DimensionError("matmul: inner extents differ, " + a.shape_string() + " x " +
                             b.shape_string());
    }
    Tensor out({m, n});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            if (av == 0.0) continue;
            const double* brow = pb + l * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

/// a [m x n] . v [n] -> [m]
inline Tensor matvec(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.extent(1) != v.extent(0)) {
        throw DimensionError("matvec: shapes " + a.shape_string() + " and " + v.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({m});
    const double* pa = a.data();
    const double* pv = v.data();
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        const double* row = pa + i * n;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * pv[j];
        out[i] = s;
    }
    return out;
}

/// a^T [m x n] . v [m] -> [n]
inline Tensor matvec_transposed(const Tensor& a, const Tensor& v) {
    if (a.rank() != 2 || v.rank() != 1 || a.extent(0) != v.extent(0)) {
        throw DimensionError("matvec_transposed: shapes " + a.shape_string() + " and " +
                             v.shape_string());
    }
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out({n});
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double vi = v[i];
        if (vi == 0.0) continue;
        const double* row = pa + i * n;
        for (std::size_t j = 0; j < n; ++j) po[j] += row[j] * vi;
    }
    return out;
}

/// u [m] outer v [n] -> [m x n]
inline Tensor outer(const Tensor& u, const Tensor& v) {
    if (u.rank() != 1 || v.rank() != 1) {
        throw DimensionError("outer expects rank-1 tensors, got " + u.shape_string() + " and " +
                             v.shape_string());
    }
    const std::size_t m = u.extent(0), n = v.extent(0);
    Tensor out({m, n});
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double ui = u[i];
        for (std::size_t j = 0; j < n; ++j) po[i * n + j] = ui * v[j];
    }
    return out;
}

// ---- activations ----

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& t) {
    Tensor out = t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(out[i]);
    return out;
}

/// Gradient through sigmoid given its output: upstream * out * (1 - out).
inline Tensor sigmoid_grad(const Tensor& out, const Tensor& upstream) {
    check_same_shape(out, upstream, "sigmoid_grad");
    Tensor g = upstream;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= out[i] * (1.0 - out[i]);
    return g;
}

// ---- softmax family (max-subtracted, safe for large logits) ----

inline double log_sum_exp(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("log_sum_exp expects a non-empty rank-1 tensor, got " +
                             logits.shape_string());
    }
    double m = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) s += std::exp(logits[i] - m);
    return m + std::log(s);
}

inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("softmax expects a non-empty rank-1 tensor, got " +
                             logits.shape_string());
    }
    double m = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) m = std::max(m, logits[i]);
    Tensor out = logits;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(out[i] - m);
        s += out[i];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= s;
    return out;
}

// ---- 2-D convolution (cross-correlation) and its adjoints ----

struct Conv2dDims {
    std::size_t in_c, in_h, in_w;
    std::size_t out_c, kh, kw;
    std::size_t out_h, out_w;
    std::size_t stride, pad;
};

inline Conv2dDims conv2d_dims(const Tensor& input, const Tensor& kernels, std::size_t stride,
                              std::size_t pad) {
    if (input.rank() != 3) {
        throw DimensionError("conv2d input must be [C x H x W], got " + input.shape_string());
    }
    if (kernels.rank() != 4) {
        throw DimensionError("conv2d kernels must be [K x C x kh x kw], got " +
                             kernels.shape_string());
    }
    if (stride == 0) throw DimensionError("conv2d stride must be positive");
    Conv2dDims d{};
    d.in_c = input.extent(0);
    d.in_h = input.extent(1);
    d.in_w = input.extent(2);
    d.out_c = kernels.extent(0);
    d.kh = kernels.extent(2);
    d.kw = kernels.extent(3);
    d.stride = stride;
    d.pad = pad;
    if (kernels.extent(1) != d.in_c) {
        throw DimensionError("conv2d channel mismatch: input " + input.shape_string() +
                             " vs kernels " + kernels.shape_string());
    }
    const std::ptrdiff_t oh = (static_cast<std::ptrdiff_t>(d.in_h) + 2 * static_cast<std::ptrdiff_t>(pad) -
                               static_cast<std::ptrdiff_t>(d.kh)) /
                                  static_cast<std::ptrdiff_t>(stride) +
                              1;
    const std::ptrdiff_t ow = (static_cast<std::ptrdiff_t>(d.in_w) + 2 * static_cast<std::ptrdiff_t>(pad) -
                               static_cast<std::ptrdiff_t>(d.kw)) /
                                  static_cast<std::ptrdiff_t>(stride) +
                              1;
    if (oh < 1 || ow < 1) {
        throw DimensionError("conv2d output extent would be non-positive for input " +
                             input.shape_string() + ", kernels " + kernels.shape_string() +
                             ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
    }
    d.out_h = static_cast<std::size_t>(oh);
    d.out_w = static_cast<std::size_t>(ow);
    return d;
}

/// Zero-padded cross-correlation plus per-channel bias.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     std::size_t stride, std::size_t pad) {
    Conv2dDims d = conv2d_dims(input, kernels, stride, pad);
    if (bias.rank() != 1 || bias.extent(0) != d.out_c) {
        throw DimensionError("conv2d bias must be [" + std::to_string(d.out_c) + "], got " +
                             bias.shape_string());
    }
    Tensor out({d.out_c, d.out_h, d.out_w});
    const double* pin = input.data();
    const double* pk = kernels.data();
    double* po = out.data();
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(d.in_h);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(d.in_w);
    for (std::size_t k = 0; k < d.out_c; ++k) {
        for (std::size_t oy = 0; oy < d.out_h; ++oy) {
            for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                double acc = bias[k];
                const std::ptrdiff_t base_y =
                    static_cast<std::ptrdiff_t>(oy * d.stride) - static_cast<std::ptrdiff_t>(d.pad);
                const std::ptrdiff_t base_x =
                    static_cast<std::ptrdiff_t>(ox * d.stride) - static_cast<std::ptrdiff_t>(d.pad);
                for (std::size_t c = 0; c < d.in_c; ++c) {
                    const double* in_plane = pin + c * d.in_h * d.in_w;
                    const double* k_plane = pk + (k * d.in_c + c) * d.kh * d.kw;
                    for (std::size_t u = 0; u < d.kh; ++u) {
                        const std::ptrdiff_t y = base_y + static_cast<std::ptrdiff_t>(u);
                        if (y < 0 || y >= H) continue;
                        for (std::size_t v = 0; v < d.kw; ++v) {
                            const std::ptrdiff_t x = base_x + static_cast<std::ptrdiff_t>(v);
                            if (x < 0 || x >= W) continue;
                            acc += in_plane[y * W + x] * k_plane[u * d.kw + v];
                        }
                    }
                }
                po[(k * d.out_h + oy) * d.out_w + ox] = acc;
            }
        }
    }
    return out;
}

inline void check_conv2d_upstream(const Conv2dDims& d, const Tensor& upstream) {
    if (upstream.rank() != 3 || upstream.extent(0) != d.out_c || upstream.extent(1) != d.out_h ||
        upstream.extent(2) != d.out_w) {
        throw DimensionError("conv2d upstream must be [" + std::to_string(d.out_c) + "x" +
                             std::to_string(d.out_h) + "x" + std::to_string(d.out_w) + "], got " +
                             upstream.shape_string());
    }
}

/// Adjoint of conv2d w.r.t. its input. `in_h`/`in_w` give the forward input size.
inline Tensor conv2d_grad_input(const Tensor& kernels, const Tensor& upstream, std::size_t stride,
                                std::size_t pad, std::size_t in_h, std::size_t in_w) {
    if (kernels.rank() != 4) {
        throw DimensionError("conv2d_grad_input kernels must be rank 4, got " +
                             kernels.shape_string());
    }
    const std::size_t out_c = kernels.extent(0);
    const std::size_t in_c = kernels.extent(1);
    const std::size_t kh = kernels.extent(2), kw = kernels.extent(3);
    if (upstream.rank() != 3 || upstream.extent(0) != out_c) {
        throw DimensionError("conv2d_grad_input upstream " + upstream.shape_string() +
                             " does not match kernels " + kernels.shape_string());
    }
    const std::size_t out_h = upstream.extent(1), out_w = upstream.extent(2);
    Tensor grad({in_c, in_h, in_w});
    const double* pk = kernels.data();
    const double* pu = upstream.data();
    double* pg = grad.data();
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(in_h);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(in_w);
    for (std::size_t k = 0; k < out_c; ++k) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double up = pu[(k * out_h + oy) * out_w + ox];
                if (up == 0.0) continue;
                const std::ptrdiff_t base_y =
                    static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t base_x =
                    static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad);
                for (std::size_t c = 0; c < in_c; ++c) {
                    double* g_plane = pg + c * in_h * in_w;
                    const double* k_plane = pk + (k * in_c + c) * kh * kw;
                    for (std::size_t u = 0; u < kh; ++u) {
                        const std::ptrdiff_t y = base_y + static_cast<std::ptrdiff_t>(u);
                        if (y < 0 || y >= H) continue;
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::ptrdiff_t x = base_x + static_cast<std::ptrdiff_t>(v);
                            if (x < 0 || x >= W) continue;
                            g_plane[y * W + x] += up * k_plane[u * kw + v];
                        }
                    }
                }
            }
        }
    }
    return grad;
}

/// Adjoint of conv2d w.r.t. the kernels. Kernel size is taken from `kh`/`kw`.
inline Tensor conv2d_grad_kernels(const Tensor& input, const Tensor& upstream, std::size_t stride,
                                  std::size_t pad, std::size_t kh, std::size_t kw) {
    if (input.rank() != 3 || upstream.rank() != 3) {
        throw DimensionError("conv2d_grad_kernels expects rank-3 input and upstream, got " +
                             input.shape_string() + " and " + upstream.shape_string());
    }
    const std::size_t in_c = input.extent(0), in_h = input.extent(1), in_w = input.extent(2);
    const std::size_t out_c = upstream.extent(0), out_h = upstream.extent(1),
                      out_w = upstream.extent(2);
    Tensor grad({out_c, in_c, kh, kw});
    const double* pin = input.data();
    const double* pu = upstream.data();
    double* pg = grad.data();
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(in_h);
    const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(in_w);
    for (std::size_t k = 0; k < out_c; ++k) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double up = pu[(k * out_h + oy) * out_w + ox];
                if (up == 0.0) continue;
                const std::ptrdiff_t base_y =
                    static_cast<std::ptrdiff_t>(oy * stride) - static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t base_x =
                    static_cast<std::ptrdiff_t>(ox * stride) - static_cast<std::ptrdiff_t>(pad);
                for (std::size_t c = 0; c < in_c; ++c) {
                    const double* in_plane = pin + c * in_h * in_w;
                    double* g_plane = pg + (k * in_c + c) * kh * kw;
                    for (std::size_t u = 0; u < kh; ++u) {
                        const std::ptrdiff_t y = base_y + static_cast<std::ptrdiff_t>(u);
                        if (y < 0 || y >= H) continue;
                        for (std::size_t v = 0; v < kw; ++v) {
                            const std::ptrdiff_t x = base_x + static_cast<std::ptrdiff_t>(v);
                            if (x < 0 || x >= W) continue;
                            g_plane[u * kw + v] += up * in_plane[y * W + x];
                        }
                    }
                }
            }
        }
    }
    return grad;
}

/// Adjoint of conv2d w.r.t. the bias: per-channel sum of the upstream gradient.
inline Tensor conv2d_grad_bias(const Tensor& upstream) {
    if (upstream.rank() != 3) {
        throw DimensionError("conv2d_grad_bias expects rank-3 upstream, got " +
                             upstream.shape_string());
    }
    const std::size_t out_c = upstream.extent(0);
    const std::size_t plane = upstream.extent(1) * upstream.extent(2);
    Tensor grad({out_c});
    const double* pu = upstream.data();
    for (std::size_t k = 0; k < out_c; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += pu[k * plane + i];
        grad[k] = s;
    }
    return grad;
}

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

/// All three adjoints of one conv2d call.
inline Conv2dGrads conv2d_grads(const Tensor& input, const Tensor& kernels, std::size_t stride,
                                std::size_t pad, const Tensor& upstream) {
    Conv2dDims d = conv2d_dims(input, kernels, stride, pad);
    check_conv2d_upstream(d, upstream);
    Conv2dGrads g;
    g.input = conv2d_grad_input(kernels, upstream, stride, pad, d.in_h, d.in_w);
    g.kernels = conv2d_grad_kernels(input, upstream, stride, pad, d.kh, d.kw);
    g.bias = conv2d_grad_bias(upstream);
    return g;
}

}  // namespace gradleak
