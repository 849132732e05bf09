#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "popdyn/util/errors.hpp"

namespace popdyn::lab {

// Normalised mean-squared error in percent: 100 / (N sigma_y^2) *
// sum (pred - obs)^2, with sigma_y the population standard deviation of
// the observations themselves. Predicting the observation mean scores
// exactly 100.
inline double nmse(std::span<const double> predictions, std::span<const double> observations) {
    const std::size_t n = observations.size();
    if (n < 2 || predictions.size() != n)
        throw DataError("nmse: need equal lengths >= 2");
    double mean = 0.0;
    for (double v : observations) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : observations) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) throw DataError("nmse: degenerate target set (zero variance)");
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = predictions[i] - observations[i];
        sq += d * d;
    }
    return 100.0 * sq / (static_cast<double>(n) * var);
}

// Multi-output reduction: mean of per-dimension NMSEs over row-major data.
inline double nmse_multi(std::span<const double> predictions, std::span<const double> observations,
                         std::size_t y_dim) {
    if (y_dim == 0 || observations.size() % y_dim != 0 ||
        predictions.size() != observations.size())
        throw DataError("nmse_multi: bad shapes");
    if (y_dim == 1) return nmse(predictions, observations);
    const std::size_t n = observations.size() / y_dim;
    std::vector<double> p(n), o(n);
    double total = 0.0;
    for (std::size_t j = 0; j < y_dim; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = predictions[i * y_dim + j];
            o[i] = observations[i * y_dim + j];
        }
        total += nmse(p, o);
    }
    return total / static_cast<double>(y_dim);
}

}  // namespace popdyn::lab
