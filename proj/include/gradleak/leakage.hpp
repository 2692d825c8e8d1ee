#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gradleak/errors.hpp"
#include "gradleak/tensor.hpp"

namespace gradleak {

/// Outcome of label extraction from a last-layer weight gradient.
/// `exact` is true when exactly one row satisfied the decision rule;
/// `witness` holds, for each row, the statistic the decision used
/// (max cross dot product for extract_label, max row entry for the sign rule).
struct LabelPrediction {
    std::size_t label = 0;
    bool exact = false;
    std::vector<double> witness;
};

/// Gradient of the one-hot cross-entropy loss w.r.t. each logit:
/// g_i = softmax(logits)_i - [i == c]. The true-class component is the only
/// negative one, which is what makes labels leak. It is computed from the
/// complementary exponential sum, g_c = -(sum_{j != c} e^{y_j - m}) / total,
/// not as softmax_c - 1: the subtraction cancels catastrophically once the
/// softmax saturates, flipping the label signal to an exact zero.
inline Tensor softmax_grad(const Tensor& logits, std::size_t c) {
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("softmax_grad expects a non-empty rank-1 tensor, got " +
                             logits.shape_string());
    }
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

/// Label from the last-layer weight gradient [num_classes x hidden]: the row
/// whose dot product with every other row is <= 0 names the true class. If no
/// row or several rows qualify, falls back to the row with the smallest
/// maximum cross dot product (ties broken by smaller row-entry sum) and
/// reports exact = false.
inline LabelPrediction extract_label(const Tensor& fc_w_grad) {
    if (fc_w_grad.rank() != 2) {
        throw DimensionError("extract_label expects a rank-2 gradient matrix, got " +
                             fc_w_grad.shape_string());
    }
    const std::size_t rows = fc_w_grad.extent(0);
    const std::size_t cols = fc_w_grad.extent(1);
    if (rows < 2) {
        throw DimensionError("extract_label needs at least 2 rows, got " +
                             fc_w_grad.shape_string());
    }
    const double* data = fc_w_grad.data();

    bool any_nonzero = false;
    for (std::size_t i = 0; i < rows * cols && !any_nonzero; ++i) {
        if (data[i] != 0.0) any_nonzero = true;
    }
    if (!any_nonzero) {
        throw DegenerateGradientError("all-zero last-layer gradient carries no label signal");
    }

    LabelPrediction pred;
    pred.witness.assign(rows, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < rows; ++i) {
        const double* ri = data + i * cols;
        for (std::size_t j = i + 1; j < rows; ++j) {
            const double* rj = data + j * cols;
            double d = 0.0;
            for (std::size_t k = 0; k < cols; ++k) d += ri[k] * rj[k];
            if (d > pred.witness[i]) pred.witness[i] = d;
            if (d > pred.witness[j]) pred.witness[j] = d;
        }
    }

    std::size_t qualifying = 0;
    std::size_t first_qualifier = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (pred.witness[i] <= 0.0) {
            if (qualifying == 0) first_qualifier = i;
            ++qualifying;
        }
    }
    if (qualifying == 1) {
        pred.label = first_qualifier;
        pred.exact = true;
        return pred;
    }

    // Degenerate: fall back to the most anti-correlated row.
    auto row_sum = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t k = 0; k < cols; ++k) s += data[i * cols + k];
        return s;
    };
    std::size_t best = 0;
    for (std::size_t i = 1; i < rows; ++i) {
        if (pred.witness[i] < pred.witness[best] ||
            (pred.witness[i] == pred.witness[best] && row_sum(i) < row_sum(best))) {
            best = i;
        }
    }
    pred.label = best;
    pred.exact = false;
    return pred;
}

/// Shortcut valid when the last hidden activation is non-negative (true for
/// this sigmoid architecture): the true class is the unique all-negative
/// gradient row, equivalently the unique negative bias-gradient entry.
inline LabelPrediction extract_label_sign_rule(const Tensor& fc_w_grad, const Tensor& fc_b_grad) {
    if (fc_w_grad.rank() != 2 || fc_b_grad.rank() != 1 ||
        fc_w_grad.extent(0) != fc_b_grad.extent(0)) {
        throw DimensionError("sign rule expects [K x hidden] weight grad and [K] bias grad, got " +
                             fc_w_grad.shape_string() + " and " + fc_b_grad.shape_string());
    }
    const std::size_t rows = fc_w_grad.extent(0);
    const std::size_t cols = fc_w_grad.extent(1);
    const double* data = fc_w_grad.data();

    LabelPrediction pred;
    pred.witness.assign(rows, 0.0);
    std::size_t negative_rows = 0;
    std::size_t row_candidate = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        double row_max = data[i * cols];
        for (std::size_t k = 1; k < cols; ++k) row_max = std::max(row_max, data[i * cols + k]);
        pred.witness[i] = row_max;
        if (row_max < 0.0) {
            if (negative_rows == 0) row_candidate = i;
            ++negative_rows;
        }
    }
    if (negative_rows == 1) {
        pred.label = row_candidate;
        pred.exact = true;
        return pred;
    }

    std::size_t negative_biases = 0;
    std::size_t bias_candidate = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (fc_b_grad[i] < 0.0) {
            if (negative_biases == 0) bias_candidate = i;
            ++negative_biases;
        }
    }
    if (negative_biases == 1) {
        pred.label = bias_candidate;
        pred.exact = true;
        pred.witness.assign(fc_b_grad.values().begin(), fc_b_grad.values().end());
        return pred;
    }
    throw DegenerateGradientError(
        "sign rule found no unique negative gradient row or bias entry (" +
        std::to_string(negative_rows) + " negative rows, " + std::to_string(negative_biases) +
        " negative bias entries)");
}

}  // namespace gradleak
