#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gradleak/errors.hpp"
#include "gradleak/leakage.hpp"
#include "gradleak/model.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

enum class Method { idlg, dlg };
enum class OptimizerKind { lbfgs, gd };

inline const char* method_name(Method m) { return m == Method::idlg ? "idlg" : "dlg"; }

inline Method parse_method(const std::string& s) {
    if (s == "idlg") return Method::idlg;
    if (s == "dlg") return Method::dlg;
    throw UsageError("unknown method '" + s + "' (expected idlg or dlg)");
}

inline OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "lbfgs") return OptimizerKind::lbfgs;
    if (s == "gd") return OptimizerKind::gd;
    throw UsageError("unknown optimizer '" + s + "' (expected lbfgs or gd)");
}

inline std::vector<double> default_mse_thresholds() { return {1e-1, 1e-2, 1e-3, 1e-4, 1e-5}; }

struct AttackConfig {
    Method method = Method::idlg;
    int iterations = 300;
    OptimizerKind optimizer = OptimizerKind::lbfgs;
    double learning_rate = 1.0;
    int lbfgs_history = 10;
    /// Inner two-loop updates per L-BFGS iteration. The default treats one
    /// iteration as exactly one update + line search, which keeps the DLG and
    /// iDLG baselines comparable at the standard 300-iteration budget; larger
    /// values emulate optimizers that run a whole inner cycle per step.
    int lbfgs_inner_iterations = 1;
    std::uint64_t seed = 0;
    int snapshot_every = 0;  // 0 = never
    std::vector<double> mse_thresholds = default_mse_thresholds();
    std::optional<Tensor> init_dummy;  // test hook: overrides the N(0,1) datum init

    void validate() const {
        if (iterations < 0) throw UsageError("iterations must be non-negative");
        if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
        if (lbfgs_history < 1) throw UsageError("lbfgs_history must be positive");
        if (lbfgs_inner_iterations < 1) throw UsageError("lbfgs_inner_iterations must be positive");
        if (snapshot_every < 0) throw UsageError("snapshot_every must be non-negative");
    }
};

struct AttackReport {
    std::size_t extracted_label = 0;
    bool label_exact = false;
    Tensor final_dummy;
    /// Loss before each update plus the final value (length iterations + 1).
    std::vector<double> loss_trajectory;
    /// Same convention; present only when ground truth was supplied.
    std::vector<double> mse_trajectory;
    std::vector<std::pair<int, Tensor>> snapshots;
    /// Threshold -> first state index whose MSE fell below it; absent if never.
    std::map<double, int> iterations_to_threshold;
    /// Optimizer steps that needed the gradient-descent fallback or exhausted
    /// the Armijo backtracking budget (1-based update indices).
    std::vector<int> fallback_iterations;
};

// ---- optimizers over flat coordinate vectors ----

using Vec = std::vector<double>;
using LossFn = std::function<double(const Vec&)>;

namespace detail {

inline double vdot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec vadd_scaled(const Vec& x, double alpha, const Vec& d) {
    Vec out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * d[i];
    return out;
}

inline Vec vsub(const Vec& a, const Vec& b) {
    Vec out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

}  // namespace detail

/// Plain gradient-descent update x - eta * grad.
inline Tensor gd_step(const Tensor& x, const Tensor& grad, double eta) {
    check_same_shape(x, grad, "gd_step");
    Tensor out = x;
    axpy(-eta, grad, out);
    return out;
}

/// Limited-memory BFGS state: curvature-pair history plus the previous point,
/// used to form the next pair. Pairs with s.y <= curvature_eps are discarded.
struct LbfgsState {
    explicit LbfgsState(int history = 10) : history_size(history) {}

    int history_size = 10;
    double c1 = 1e-4;
    int max_backtracks = 20;
    double curvature_eps = 1e-10;

    std::deque<std::pair<Vec, Vec>> pairs;  // (s, y), newest at back
    Vec prev_x, prev_grad;
    bool has_prev = false;
};

struct LbfgsStepResult {
    Vec x;
    double f = 0.0;
    double alpha = 0.0;
    double dir_dot_grad = 0.0;
    bool fallback = false;          // non-finite loss met in search; took gd with eta/10
    bool armijo_exhausted = false;  // backtracking budget spent; last step taken anyway
};

/// One L-BFGS update: record the curvature pair from the previous call,
/// build the two-loop-recursion direction, then backtrack from `eta`
/// (halving, Armijo with c1) until accepted or the budget runs out.
inline LbfgsStepResult lbfgs_step(LbfgsState& state, const Vec& x, double fx, const Vec& grad,
                                  const LossFn& loss_fn, double eta) {
    using detail::vadd_scaled;
    using detail::vdot;
    using detail::vsub;

    if (state.has_prev) {
        Vec s = vsub(x, state.prev_x);
        Vec y = vsub(grad, state.prev_grad);
        if (vdot(s, y) > state.curvature_eps) {
            state.pairs.emplace_back(std::move(s), std::move(y));
            while (static_cast<int>(state.pairs.size()) > state.history_size) {
                state.pairs.pop_front();
            }
        }
    }
    state.prev_x = x;
    state.prev_grad = grad;
    state.has_prev = true;

    // Two-loop recursion.
    Vec q = grad;
    const std::size_t h = state.pairs.size();
    std::vector<double> alpha_hist(h, 0.0);
    std::vector<double> rho(h, 0.0);
    for (std::size_t idx = h; idx-- > 0;) {
        const auto& [s, y] = state.pairs[idx];
        rho[idx] = 1.0 / vdot(y, s);
        alpha_hist[idx] = rho[idx] * vdot(s, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] -= alpha_hist[idx] * y[i];
    }
    if (h > 0) {
        const auto& [s, y] = state.pairs.back();
        const double gamma = vdot(s, y) / vdot(y, y);
        for (double& v : q) v *= gamma;
    }
    for (std::size_t idx = 0; idx < h; ++idx) {
        const auto& [s, y] = state.pairs[idx];
        const double beta = rho[idx] * vdot(y, q);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += s[i] * (alpha_hist[idx] - beta);
    }
    Vec d = q;
    for (double& v : d) v = -v;
    double gd = vdot(grad, d);
    if (gd > 0.0) {  // not a descent direction; restart from steepest descent
        d = grad;
        for (double& v : d) v = -v;
        gd = -vdot(grad, grad);
        state.pairs.clear();
    }

    LbfgsStepResult res;
    res.dir_dot_grad = gd;
    double alpha = eta;
    Vec cand;
    double fc = fx;
    for (int bt = 0;; ++bt) {
        cand = vadd_scaled(x, alpha, d);
        fc = loss_fn(cand);
        if (!std::isfinite(fc)) {
            res.fallback = true;
            res.alpha = eta / 10.0;
            res.x = vadd_scaled(x, -res.alpha, grad);
            res.f = loss_fn(res.x);
            return res;
        }
        if (fc <= fx + state.c1 * alpha * gd) break;
        if (bt >= state.max_backtracks) {
            res.armijo_exhausted = true;
            break;
        }
        alpha *= 0.5;
    }
    res.x = std::move(cand);
    res.f = fc;
    res.alpha = alpha;
    return res;
}

namespace detail {

struct AttackProblem {
    std::size_t dim = 0;
    std::function<void(const Vec&, double&, Vec&)> loss_and_grad;
    LossFn loss_only;
    std::function<Tensor(const Vec&)> datum;
};

inline std::map<double, int> thresholds_reached(const std::vector<double>& mse_trajectory,
                                                const std::vector<double>& thresholds) {
    std::map<double, int> reached;
    for (double tau : thresholds) {
        for (std::size_t i = 0; i < mse_trajectory.size(); ++i) {
            if (mse_trajectory[i] < tau) {
                reached[tau] = static_cast<int>(i);
                break;
            }
        }
    }
    return reached;
}

inline Vec run_attack_loop(const AttackProblem& problem, const AttackConfig& config,
                           const Vec& start, const Tensor* ground_truth, AttackReport& report) {
    Vec v = start;
    double loss = 0.0;
    Vec grad;
    problem.loss_and_grad(v, loss, grad);
    if (!std::isfinite(loss)) throw NonFiniteLossError(0, loss);

    auto record_state = [&](int state_idx) {
        report.loss_trajectory.push_back(loss);
        if (ground_truth) {
            report.mse_trajectory.push_back(mse(problem.datum(v), *ground_truth));
        }
        if (config.snapshot_every > 0 && (state_idx % config.snapshot_every == 0 ||
                                          state_idx == config.iterations)) {
            report.snapshots.emplace_back(state_idx, problem.datum(v));
        }
    };

    constexpr double kGradTolerance = 1e-7;
    constexpr double kChangeTolerance = 1e-9;
    auto linf = [](const Vec& a) {
        double m = 0.0;
        for (double x : a) m = std::max(m, std::fabs(x));
        return m;
    };

    LbfgsState lbfgs(config.lbfgs_history);
    for (int t = 1; t <= config.iterations; ++t) {
        record_state(t - 1);
        if (config.optimizer == OptimizerKind::gd) {
            v = detail::vadd_scaled(v, -config.learning_rate, grad);
            problem.loss_and_grad(v, loss, grad);
            if (!std::isfinite(loss)) throw NonFiniteLossError(t, loss);
        } else {
            for (int k = 0; k < config.lbfgs_inner_iterations; ++k) {
                if (linf(grad) <= kGradTolerance) break;
                LbfgsStepResult sr =
                    lbfgs_step(lbfgs, v, loss, grad, problem.loss_only, config.learning_rate);
                if ((sr.fallback || sr.armijo_exhausted) &&
                    (report.fallback_iterations.empty() ||
                     report.fallback_iterations.back() != t)) {
                    report.fallback_iterations.push_back(t);
                }
                const double step_change = linf(detail::vsub(sr.x, v));
                const double loss_change = std::fabs(sr.f - loss);
                v = std::move(sr.x);
                problem.loss_and_grad(v, loss, grad);
                if (!std::isfinite(loss)) throw NonFiniteLossError(t, loss);
                if (step_change <= kChangeTolerance || loss_change <= kChangeTolerance) break;
            }
        }
    }
    record_state(config.iterations);

    report.final_dummy = problem.datum(v);
    if (ground_truth) {
        report.iterations_to_threshold =
            thresholds_reached(report.mse_trajectory, config.mse_thresholds);
    }
    return v;
}

}  // namespace detail

/// iDLG: extract the label analytically from the shared last-layer gradient,
/// then optimize only the dummy datum against the gradient-matching loss.
inline AttackReport run_idlg(const Model& model, const GradSet& shared, const AttackConfig& config,
                             const Tensor* ground_truth = nullptr) {
    config.validate();
    check_gradset_structure(model, shared);

    LabelPrediction pred = extract_label(shared.fc_w);
    const std::size_t c = pred.label;

    Rng rng(config.seed);
    const std::vector<std::size_t> xshape = {model.arch.in_channels, model.arch.image_side,
                                             model.arch.image_side};
    Tensor x0 = sample_normal(rng, xshape);
    if (config.init_dummy) {
        check_same_shape(*config.init_dummy, x0, "init_dummy");
        x0 = *config.init_dummy;
    }

    detail::AttackProblem problem;
    problem.dim = x0.size();
    problem.datum = [xshape](const Vec& v) { return Tensor::from(xshape, v); };
    problem.loss_and_grad = [&model, &shared, c, xshape](const Vec& v, double& loss, Vec& grad) {
        GradMatchEval ev = grad_match_eval(model, Tensor::from(xshape, v), c, shared);
        loss = ev.loss;
        grad = std::move(ev.input_grad.values());
    };
    problem.loss_only = [&model, &shared, c, xshape](const Vec& v) {
        return grad_match_loss(model, Tensor::from(xshape, v), c, shared);
    };

    AttackReport report;
    report.extracted_label = pred.label;
    report.label_exact = pred.exact;
    detail::run_attack_loop(problem, config, x0.values(), ground_truth, report);
    return report;
}

/// DLG baseline: jointly optimize the dummy datum and free dummy label logits
/// against the soft-label gradient-matching loss; the label is the argmax of
/// the final logits.
inline AttackReport run_dlg(const Model& model, const GradSet& shared, const AttackConfig& config,
                            const Tensor* ground_truth = nullptr) {
    config.validate();
    check_gradset_structure(model, shared);

    Rng rng(config.seed);
    const std::vector<std::size_t> xshape = {model.arch.in_channels, model.arch.image_side,
                                             model.arch.image_side};
    const std::size_t num_classes = model.arch.num_classes;
    Tensor x0 = sample_normal(rng, xshape);
    Tensor z0 = sample_normal(rng, {num_classes});
    if (config.init_dummy) {
        check_same_shape(*config.init_dummy, x0, "init_dummy");
        x0 = *config.init_dummy;
    }

    const std::size_t xdim = x0.size();
    Vec start(xdim + num_classes);
    std::copy(x0.values().begin(), x0.values().end(), start.begin());
    std::copy(z0.values().begin(), z0.values().end(), start.begin() + xdim);

    auto split_datum = [xshape, xdim](const Vec& v) {
        return Tensor::from(xshape, Vec(v.begin(), v.begin() + xdim));
    };
    auto split_logits = [xdim, num_classes](const Vec& v) {
        return Tensor::from({num_classes}, Vec(v.begin() + xdim, v.end()));
    };
    auto argmax_label = [xdim](const Vec& v) {
        std::size_t best = 0;
        for (std::size_t j = 1; j + xdim < v.size(); ++j) {
            if (v[xdim + j] > v[xdim + best]) best = j;
        }
        return best;
    };

    detail::AttackProblem problem;
    problem.dim = start.size();
    problem.datum = split_datum;
    problem.loss_and_grad = [&model, &shared, split_datum, split_logits, xdim,
                             num_classes](const Vec& v, double& loss, Vec& grad) {
        Tensor x = split_datum(v);
        Tensor z = split_logits(v);
        Tensor p = softmax(z);
        GradMatchEval ev = grad_match_eval_soft(model, x, p, shared);
        loss = ev.loss;
        grad.resize(v.size());
        std::copy(ev.input_grad.values().begin(), ev.input_grad.values().end(), grad.begin());
        // Chain through softmax: dz = p .* (dp - <p, dp>).
        const double pg = dot(p, ev.label_grad);
        for (std::size_t j = 0; j < num_classes; ++j) {
            grad[xdim + j] = p[j] * (ev.label_grad[j] - pg);
        }
    };
    problem.loss_only = [&model, &shared, split_datum, split_logits](const Vec& v) {
        return grad_match_loss_soft(model, split_datum(v), softmax(split_logits(v)), shared);
    };

    AttackReport report;
    Vec final_v = detail::run_attack_loop(problem, config, start, ground_truth, report);
    report.extracted_label = argmax_label(final_v);
    report.label_exact = false;  // DLG gives no exactness guarantee
    return report;
}

}  // namespace gradleak
