#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gradleak/errors.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

inline constexpr std::size_t kConvChannels = 12;
inline constexpr std::size_t kKernelSide = 5;
inline constexpr std::size_t kHiddenSize = 768;  // 12 channels * 8 * 8 after the conv stack

/// Fixed classifier geometry. 32x32 inputs only: two stride-2 convolutions and
/// one stride-1 convolution reduce to a 12x8x8 feature map (768 flat).
struct Architecture {
    std::size_t in_channels = 1;  // 1 or 3
    std::size_t image_side = 32;
    std::size_t num_classes = 10;

    void validate() const {
        if (in_channels != 1 && in_channels != 3) {
            throw UsageError("architecture in_channels must be 1 or 3, got " +
                             std::to_string(in_channels));
        }
        if (image_side != 32) {
            throw UsageError("architecture image_side must be 32, got " +
                             std::to_string(image_side));
        }
        if (num_classes < 2) {
            throw UsageError("architecture num_classes must be at least 2, got " +
                             std::to_string(num_classes));
        }
    }
};

/// The ordered parameter set. Order and names are fixed:
/// conv1.w, conv1.b, conv2.w, conv2.b, conv3.w, conv3.b, fc.w, fc.b.
struct ParamSet {
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor fc_w, fc_b;

    template <typename F>
    void for_each(F&& f) {
        f("conv1.w", conv1_w);
        f("conv1.b", conv1_b);
        f("conv2.w", conv2_w);
        f("conv2.b", conv2_b);
        f("conv3.w", conv3_w);
        f("conv3.b", conv3_b);
        f("fc.w", fc_w);
        f("fc.b", fc_b);
    }

    template <typename F>
    void for_each(F&& f) const {
        f("conv1.w", conv1_w);
        f("conv1.b", conv1_b);
        f("conv2.w", conv2_w);
        f("conv2.b", conv2_b);
        f("conv3.w", conv3_w);
        f("conv3.b", conv3_b);
        f("fc.w", fc_w);
        f("fc.b", fc_b);
    }
};

/// Per-parameter gradients; mirrors ParamSet exactly.
using GradSet = ParamSet;

/// Conv(C->12, 5x5, s2, p2)-Sigmoid, Conv(12->12, 5x5, s2, p2)-Sigmoid,
/// Conv(12->12, 5x5, s1, p2)-Sigmoid, flatten, FC(768->num_classes).
/// Sigmoid keeps the flattened hidden activation strictly inside (0, 1),
/// which the label-leakage sign rule relies on.
struct Model {
    Architecture arch;
    ParamSet params;
};

/// Every intermediate of one forward pass.
struct ForwardTrace {
    Tensor input;
    Tensor z1, a1;
    Tensor z2, a2;
    Tensor z3, a3;
    Tensor hidden;  // a3 flattened to [768]
    Tensor logits;  // [num_classes]
};

inline ParamSet zero_params(const Architecture& arch) {
    arch.validate();
    ParamSet p;
    p.conv1_w = Tensor({kConvChannels, arch.in_channels, kKernelSide, kKernelSide});
    p.conv1_b = Tensor({kConvChannels});
    p.conv2_w = Tensor({kConvChannels, kConvChannels, kKernelSide, kKernelSide});
    p.conv2_b = Tensor({kConvChannels});
    p.conv3_w = Tensor({kConvChannels, kConvChannels, kKernelSide, kKernelSide});
    p.conv3_b = Tensor({kConvChannels});
    p.fc_w = Tensor({arch.num_classes, kHiddenSize});
    p.fc_b = Tensor({arch.num_classes});
    return p;
}

/// All parameters i.i.d. uniform(-0.5, 0.5).
inline Model init_model(const Architecture& arch, Rng& rng) {
    Model m;
    m.arch = arch;
    m.params = zero_params(arch);
    m.params.for_each([&](const char*, Tensor& t) {
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-0.5, 0.5);
    });
    return m;
}

inline void check_input_shape(const Model& m, const Tensor& x) {
    if (x.rank() != 3 || x.extent(0) != m.arch.in_channels || x.extent(1) != m.arch.image_side ||
        x.extent(2) != m.arch.image_side) {
        throw DimensionError("model input must be [" + std::to_string(m.arch.in_channels) + "x" +
                             std::to_string(m.arch.image_side) + "x" +
                             std::to_string(m.arch.image_side) + "], got " + x.shape_string());
    }
}

inline void check_gradset_structure(const Model& m, const GradSet& g) {
    bool ok = true;
    std::string bad;
    const ParamSet& p = m.params;
    const Tensor* mine[8] = {&p.conv1_w, &p.conv1_b, &p.conv2_w, &p.conv2_b,
                             &p.conv3_w, &p.conv3_b, &p.fc_w,    &p.fc_b};
    const Tensor* theirs[8] = {&g.conv1_w, &g.conv1_b, &g.conv2_w, &g.conv2_b,
                               &g.conv3_w, &g.conv3_b, &g.fc_w,    &g.fc_b};
    const char* names[8] = {"conv1.w", "conv1.b", "conv2.w", "conv2.b",
                            "conv3.w", "conv3.b", "fc.w",    "fc.b"};
    for (int i = 0; i < 8; ++i) {
        if (!mine[i]->same_shape(*theirs[i])) {
            ok = false;
            bad = std::string(names[i]) + ": " + mine[i]->shape_string() + " vs " +
                  theirs[i]->shape_string();
            break;
        }
    }
    if (!ok) {
        throw DimensionError("gradient set does not mirror model parameters (" + bad + ")");
    }
}

inline ForwardTrace forward(const Model& m, const Tensor& x) {
    check_input_shape(m, x);
    const ParamSet& p = m.params;
    ForwardTrace t;
    t.input = x;
    t.z1 = conv2d(x, p.conv1_w, p.conv1_b, 2, 2);
    t.a1 = sigmoid(t.z1);
    t.z2 = conv2d(t.a1, p.conv2_w, p.conv2_b, 2, 2);
    t.a2 = sigmoid(t.z2);
    t.z3 = conv2d(t.a2, p.conv3_w, p.conv3_b, 1, 2);
    t.a3 = sigmoid(t.z3);
    t.hidden = t.a3.reshaped({kHiddenSize});
    t.logits = add(matvec(p.fc_w, t.hidden), p.fc_b);
    return t;
}

/// -log softmax(logits)[c], computed through log-sum-exp.
inline double cross_entropy(const Tensor& logits, std::size_t c) {
    if (logits.rank() != 1) {
        throw DimensionError("cross_entropy expects rank-1 logits, got " + logits.shape_string());
    }
    if (c >= logits.size()) {
        throw IndexError("class index " + std::to_string(c) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    }
    return log_sum_exp(logits) - logits[c];
}

/// Soft-label cross entropy -sum_j p_j log softmax(logits)_j. The label vector
/// is not required to sum to 1.
inline double cross_entropy_soft(const Tensor& logits, const Tensor& soft_label) {
    check_same_shape(logits, soft_label, "cross_entropy_soft");
    const double lse = log_sum_exp(logits);
    double loss = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        loss -= soft_label[j] * (logits[j] - lse);
    }
    return loss;
}

namespace detail {

/// d loss / d logits for the one-hot loss: softmax(logits) - e_c. The c
/// component comes from the complementary exponential sum so its sign
/// survives softmax saturation (same formulation as leakage::softmax_grad).
inline Tensor logit_grad_onehot(const Tensor& logits, std::size_t c) {
    if (c >= logits.size()) {
        throw IndexError("class index " + std::to_string(c) + " out of range for " +
                         std::to_string(logits.size()) + " classes");
    }
    const std::size_t n = logits.size();
    double m = logits[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
    Tensor e = logits;
    double tail = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(logits[i] - m);
        if (i != c) tail += e[i];
    }
    const double total = tail + e[c];
    Tensor g({n});
    for (std::size_t i = 0; i < n; ++i) g[i] = e[i] / total;
    g[c] = -(tail / total);
    return g;
}

/// d loss / d logits for the soft loss: (sum p) * softmax(logits) - p.
inline Tensor logit_grad_soft(const Tensor& logits, const Tensor& p) {
    check_same_shape(logits, p, "logit_grad_soft");
    double psum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) psum += p[j];
    Tensor g = softmax(logits);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = psum * g[j] - p[j];
    return g;
}

/// Upstream gradients flowing through the backward pass; kept so the
/// second-order tangent sweep can reuse them.
struct BackwardTrace {
    Tensor g_logits;            // d loss / d logits
    Tensor dh;                  // d loss / d hidden
    Tensor dz3, da2, dz2, da1;  // layer deltas
    Tensor dz1;
    Tensor dx;  // d loss / d input
};

/// Reverse sweep from a logit gradient down to parameters and input.
inline BackwardTrace backward_from_logit_grad(const Model& m, const ForwardTrace& t,
                                              Tensor g_logits, GradSet& grads) {
    const ParamSet& p = m.params;
    BackwardTrace bt;
    bt.g_logits = std::move(g_logits);

    // fc layer: logits = fc_w . hidden + fc_b
    grads.fc_w = outer(bt.g_logits, t.hidden);
    grads.fc_b = bt.g_logits;
    bt.dh = matvec_transposed(p.fc_w, bt.g_logits);

    Tensor da3 = bt.dh.reshaped(t.a3.shape());
    bt.dz3 = sigmoid_grad(t.a3, da3);
    grads.conv3_w = conv2d_grad_kernels(t.a2, bt.dz3, 1, 2, kKernelSide, kKernelSide);
    grads.conv3_b = conv2d_grad_bias(bt.dz3);
    bt.da2 = conv2d_grad_input(p.conv3_w, bt.dz3, 1, 2, t.a2.extent(1), t.a2.extent(2));

    bt.dz2 = sigmoid_grad(t.a2, bt.da2);
    grads.conv2_w = conv2d_grad_kernels(t.a1, bt.dz2, 2, 2, kKernelSide, kKernelSide);
    grads.conv2_b = conv2d_grad_bias(bt.dz2);
    bt.da1 = conv2d_grad_input(p.conv2_w, bt.dz2, 2, 2, t.a1.extent(1), t.a1.extent(2));

    bt.dz1 = sigmoid_grad(t.a1, bt.da1);
    grads.conv1_w = conv2d_grad_kernels(t.input, bt.dz1, 2, 2, kKernelSide, kKernelSide);
    grads.conv1_b = conv2d_grad_bias(bt.dz1);
    bt.dx = conv2d_grad_input(p.conv1_w, bt.dz1, 2, 2, t.input.extent(1), t.input.extent(2));

    return bt;
}

}  // namespace detail

/// Exact gradient of cross_entropy(forward(m, x).logits, c) w.r.t. every parameter.
inline GradSet backward(const Model& m, const Tensor& x, std::size_t c) {
    ForwardTrace t = forward(m, x);
    GradSet grads;
    detail::backward_from_logit_grad(m, t, detail::logit_grad_onehot(t.logits, c), grads);
    return grads;
}

/// Squared Frobenius distance between two gradient sets, summed over parameters.
inline double gradset_distance_sq(const GradSet& a, const GradSet& b) {
    double s = 0.0;
    s += frobenius_sq(sub(a.conv1_w, b.conv1_w));
    s += frobenius_sq(sub(a.conv1_b, b.conv1_b));
    s += frobenius_sq(sub(a.conv2_w, b.conv2_w));
    s += frobenius_sq(sub(a.conv2_b, b.conv2_b));
    s += frobenius_sq(sub(a.conv3_w, b.conv3_w));
    s += frobenius_sq(sub(a.conv3_b, b.conv3_b));
    s += frobenius_sq(sub(a.fc_w, b.fc_w));
    s += frobenius_sq(sub(a.fc_b, b.fc_b));
    return s;
}

/// Gradient-matching loss L_G = sum_p || backward(m, x, c)_p - target_p ||_F^2.
inline double grad_match_loss(const Model& m, const Tensor& x, std::size_t c,
                              const GradSet& target) {
    check_gradset_structure(m, target);
    return gradset_distance_sq(backward(m, x, c), target);
}

/// Soft-label variant of the gradient-matching loss.
inline double grad_match_loss_soft(const Model& m, const Tensor& x, const Tensor& soft_label,
                                   const GradSet& target) {
    check_gradset_structure(m, target);
    ForwardTrace t = forward(m, x);
    GradSet grads;
    detail::backward_from_logit_grad(m, t, detail::logit_grad_soft(t.logits, soft_label), grads);
    return gradset_distance_sq(grads, target);
}

/// Value and gradients of the gradient-matching loss.
struct GradMatchEval {
    double loss = 0.0;
    Tensor input_grad;  // d L_G / d x
    Tensor label_grad;  // d L_G / d soft_label; empty in one-hot mode
};

namespace detail {

// Second-order core. L_G(x) = ||G(x) - T||_F^2 with G the parameter-gradient
// map, so grad_x L_G = (dG/dx)^T u with u = 2 (G - T). By symmetry of mixed
// partials this equals the directional derivative, along u in parameter
// space, of the input-gradient map: run the whole forward+backward sweep
// once more in tangent (dual-number) form with parameter tangent u and input
// tangent 0, and read off the tangent of dx. The label gradient of the soft
// variant falls out of the same sweep: d loss / d p = lse(logits) - logits,
// whose tangent is <softmax, dlogits> - dlogits.
struct TangentLabelMode {
    bool soft = false;
    std::size_t onehot_class = 0;
    Tensor soft_label;  // used when soft
};

inline GradMatchEval grad_match_eval_impl(const Model& m, const Tensor& x,
                                          const TangentLabelMode& mode, const GradSet& target,
                                          bool want_label_grad) {
    check_gradset_structure(m, target);
    const ParamSet& p = m.params;

    // Primal forward + backward.
    ForwardTrace t = forward(m, x);
    Tensor g_logits = mode.soft ? logit_grad_soft(t.logits, mode.soft_label)
                                : logit_grad_onehot(t.logits, mode.onehot_class);
    GradSet grads;
    BackwardTrace bt = backward_from_logit_grad(m, t, std::move(g_logits), grads);

    GradMatchEval eval;
    eval.loss = gradset_distance_sq(grads, target);

    // Residual direction u = 2 (G - T), the parameter tangent.
    GradSet u;
    u.conv1_w = scaled(sub(grads.conv1_w, target.conv1_w), 2.0);
    u.conv1_b = scaled(sub(grads.conv1_b, target.conv1_b), 2.0);
    u.conv2_w = scaled(sub(grads.conv2_w, target.conv2_w), 2.0);
    u.conv2_b = scaled(sub(grads.conv2_b, target.conv2_b), 2.0);
    u.conv3_w = scaled(sub(grads.conv3_w, target.conv3_w), 2.0);
    u.conv3_b = scaled(sub(grads.conv3_b, target.conv3_b), 2.0);
    u.fc_w = scaled(sub(grads.fc_w, target.fc_w), 2.0);
    u.fc_b = scaled(sub(grads.fc_b, target.fc_b), 2.0);

    // Tangent forward sweep (input tangent is zero, so the conv term against
    // the input tangent drops out of the first layer).
    const Tensor& a1 = t.a1;
    const Tensor& a2 = t.a2;
    const Tensor& a3 = t.a3;
    Tensor tz1 = conv2d(t.input, u.conv1_w, u.conv1_b, 2, 2);
    Tensor ta1 = sigmoid_grad(a1, tz1);
    Tensor tz2 = add(conv2d(ta1, p.conv2_w, Tensor({kConvChannels}), 2, 2),
                     conv2d(a1, u.conv2_w, u.conv2_b, 2, 2));
    Tensor ta2 = sigmoid_grad(a2, tz2);
    Tensor tz3 = add(conv2d(ta2, p.conv3_w, Tensor({kConvChannels}), 1, 2),
                     conv2d(a2, u.conv3_w, u.conv3_b, 1, 2));
    Tensor ta3 = sigmoid_grad(a3, tz3);
    Tensor th = ta3.reshaped({kHiddenSize});
    Tensor tlogits = add(add(matvec(u.fc_w, t.hidden), matvec(p.fc_w, th)), u.fc_b);

    // Tangent of the logit gradient. softmax tangent: s .* (dy - <s, dy>).
    Tensor s = softmax(t.logits);
    const double s_dot_ty = dot(s, tlogits);
    Tensor tsoftmax = s;
    for (std::size_t j = 0; j < tsoftmax.size(); ++j) {
        tsoftmax[j] = s[j] * (tlogits[j] - s_dot_ty);
    }
    double psum = 1.0;
    if (mode.soft) {
        psum = 0.0;
        for (std::size_t j = 0; j < mode.soft_label.size(); ++j) psum += mode.soft_label[j];
    }
    Tensor tg_logits = scaled(tsoftmax, psum);

    // Tangent backward sweep. For each primal step v = f(args) we propagate
    // dv by the product rule; sigmoid_grad(out, up) has tangent
    // d_up .* out(1-out) + up .* d_out(1-2 out).
    auto sigmoid_grad_tangent = [](const Tensor& out, const Tensor& up, const Tensor& tout,
                                   const Tensor& tup) {
        Tensor r = tup;
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] = tup[i] * out[i] * (1.0 - out[i]) + up[i] * tout[i] * (1.0 - 2.0 * out[i]);
        }
        return r;
    };

    Tensor tdh = add(matvec_transposed(u.fc_w, bt.g_logits), matvec_transposed(p.fc_w, tg_logits));
    Tensor tda3 = tdh.reshaped(a3.shape());
    Tensor da3 = bt.dh.reshaped(a3.shape());
    Tensor tdz3 = sigmoid_grad_tangent(a3, da3, ta3, tda3);
    Tensor tda2 = add(conv2d_grad_input(u.conv3_w, bt.dz3, 1, 2, a2.extent(1), a2.extent(2)),
                      conv2d_grad_input(p.conv3_w, tdz3, 1, 2, a2.extent(1), a2.extent(2)));
    Tensor tdz2 = sigmoid_grad_tangent(a2, bt.da2, ta2, tda2);
    Tensor tda1 = add(conv2d_grad_input(u.conv2_w, bt.dz2, 2, 2, a1.extent(1), a1.extent(2)),
                      conv2d_grad_input(p.conv2_w, tdz2, 2, 2, a1.extent(1), a1.extent(2)));
    Tensor tdz1 = sigmoid_grad_tangent(a1, bt.da1, ta1, tda1);
    eval.input_grad =
        add(conv2d_grad_input(u.conv1_w, bt.dz1, 2, 2, x.extent(1), x.extent(2)),
            conv2d_grad_input(p.conv1_w, tdz1, 2, 2, x.extent(1), x.extent(2)));

    if (want_label_grad) {
        // d loss / d p = lse(logits) - logits; its tangent is <s, dy> - dy.
        Tensor lg({t.logits.size()});
        for (std::size_t j = 0; j < lg.size(); ++j) lg[j] = s_dot_ty - tlogits[j];
        eval.label_grad = std::move(lg);
    }
    return eval;
}

}  // namespace detail

/// Exact gradient of grad_match_loss w.r.t. the dummy input, by a tangent
/// sweep through the backward pass.
inline Tensor grad_match_input_grad(const Model& m, const Tensor& x, std::size_t c,
                                    const GradSet& target) {
    detail::TangentLabelMode mode;
    mode.onehot_class = c;
    if (c >= m.arch.num_classes) {
        throw IndexError("class index " + std::to_string(c) + " out of range for " +
                         std::to_string(m.arch.num_classes) + " classes");
    }
    return detail::grad_match_eval_impl(m, x, mode, target, false).input_grad;
}

/// Gradient of the soft-label gradient-matching loss w.r.t. the soft label.
inline Tensor grad_match_label_grad(const Model& m, const Tensor& x, const Tensor& soft_label,
                                    const GradSet& target) {
    if (soft_label.rank() != 1 || soft_label.size() != m.arch.num_classes) {
        throw DimensionError("soft label must be [" + std::to_string(m.arch.num_classes) +
                             "], got " + soft_label.shape_string());
    }
    detail::TangentLabelMode mode;
    mode.soft = true;
    mode.soft_label = soft_label;
    return detail::grad_match_eval_impl(m, x, mode, target, true).label_grad;
}

/// One-hot loss + input gradient in a single sweep (what the attack loop runs).
inline GradMatchEval grad_match_eval(const Model& m, const Tensor& x, std::size_t c,
                                     const GradSet& target) {
    detail::TangentLabelMode mode;
    mode.onehot_class = c;
    if (c >= m.arch.num_classes) {
        throw IndexError("class index " + std::to_string(c) + " out of range for " +
                         std::to_string(m.arch.num_classes) + " classes");
    }
    return detail::grad_match_eval_impl(m, x, mode, target, false);
}

/// Soft-label loss + input gradient + label gradient in a single sweep.
inline GradMatchEval grad_match_eval_soft(const Model& m, const Tensor& x, const Tensor& soft_label,
                                          const GradSet& target) {
    if (soft_label.rank() != 1 || soft_label.size() != m.arch.num_classes) {
        throw DimensionError("soft label must be [" + std::to_string(m.arch.num_classes) +
                             "], got " + soft_label.shape_string());
    }
    detail::TangentLabelMode mode;
    mode.soft = true;
    mode.soft_label = soft_label;
    return detail::grad_match_eval_impl(m, x, mode, target, true);
}

}  // namespace gradleak
