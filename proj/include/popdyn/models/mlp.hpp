#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "popdyn/ad/grad.hpp"
#include "popdyn/ad/param_vector.hpp"
#include "popdyn/ad/tape.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::model {

// Three weight layers, tanh after each of them; targets are expected in
// (-1, 1) (see AffineScaler::fit_range).
struct MlpConfig {
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 40;
    std::size_t output_dim = 1;
};

inline ad::LayoutPtr mlp_layout(const MlpConfig& cfg) {
    auto layout = std::make_shared<ad::ParamLayout>();
    layout->add("w1", cfg.hidden_dim, cfg.input_dim);
    layout->add("b1", cfg.hidden_dim, 1);
    layout->add("w2", cfg.hidden_dim, cfg.hidden_dim);
    layout->add("b2", cfg.hidden_dim, 1);
    layout->add("w3", cfg.output_dim, cfg.hidden_dim);
    layout->add("b3", cfg.output_dim, 1);
    return layout;
}

// Gaussian weights with std 1/sqrt(fan_in), zero biases.
inline ad::ParamVector mlp_init(const MlpConfig& cfg, std::uint64_t seed) {
    ad::ParamVector theta(mlp_layout(cfg));
    util::Rng rng(seed);
    const auto& layout = *theta.layout();
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& s = layout.slice(i);
        auto vals = theta.slice(i);
        if (s.cols == 1 && s.name[0] == 'b') continue;  // biases stay zero
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(s.cols));
        for (auto& v : vals) v = rng.normal(0.0, std_dev);
    }
    return theta;
}

namespace detail {
inline void affine_tanh(std::span<const double> w, std::span<const double> b,
                        std::span<const double> x, std::size_t rows, std::size_t cols,
                        std::vector<double>& out) {
    out.resize(rows);
    for (std::size_t j = 0; j < rows; ++j) {
        double acc = b[j];
        const double* wrow = w.data() + j * cols;
        for (std::size_t p = 0; p < cols; ++p) acc += wrow[p] * x[p];
        out[j] = std::tanh(acc);
    }
}
}  // namespace detail

inline std::vector<double> mlp_forward(const ad::ParamVector& theta, const MlpConfig& cfg,
                                       std::span<const double> x) {
    if (x.size() != cfg.input_dim) throw DataError("mlp_forward: input dimension mismatch");
    if (theta.layout()->total_size() != mlp_layout(cfg)->total_size())
        throw DataError("mlp_forward: parameter count does not match config");
    std::vector<double> h1, h2, out;
    detail::affine_tanh(theta.slice(0), theta.slice(1), x, cfg.hidden_dim, cfg.input_dim, h1);
    detail::affine_tanh(theta.slice(2), theta.slice(3), h1, cfg.hidden_dim, cfg.hidden_dim, h2);
    detail::affine_tanh(theta.slice(4), theta.slice(5), h2, cfg.output_dim, cfg.hidden_dim, out);
    return out;
}

inline std::vector<double> mlp_forward_batch(const ad::ParamVector& theta, const MlpConfig& cfg,
                                             std::span<const double> x_rows, std::size_t n) {
    if (x_rows.size() != n * cfg.input_dim) throw DataError("mlp_forward_batch: bad batch shape");
    auto blocked = [n](std::span<const double> w, std::span<const double> b,
                       const double* in_rows, std::size_t rows, std::size_t cols,
                       std::vector<double>& out_rows) {
        out_rows.resize(n * rows);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = in_rows + i * cols;
            double* out = out_rows.data() + i * rows;
            for (std::size_t j = 0; j < rows; ++j) {
                double acc = b[j];
                const double* wrow = w.data() + j * cols;
                for (std::size_t p = 0; p < cols; ++p) acc += wrow[p] * x[p];
                out[j] = std::tanh(acc);
            }
        }
    };
    std::vector<double> h1, h2, out;
    blocked(theta.slice(0), theta.slice(1), x_rows.data(), cfg.hidden_dim, cfg.input_dim, h1);
    blocked(theta.slice(2), theta.slice(3), h1.data(), cfg.hidden_dim, cfg.hidden_dim, h2);
    blocked(theta.slice(4), theta.slice(5), h2.data(), cfg.output_dim, cfg.hidden_dim, out);
    return out;
}

// Loss builder: mean squared error of the MLP on a fixed batch. Works for
// both tape scalars, so the same object serves gradients and
// Hessian-vector products.
class MlpMseLoss {
public:
    MlpMseLoss(const MlpConfig& cfg, std::vector<double> x_rows, std::vector<double> y_rows)
        : cfg_(cfg), x_(std::move(x_rows)), neg_y_(std::move(y_rows)) {
        if (x_.size() % cfg_.input_dim != 0) throw DataError("MlpMseLoss: bad input batch");
        n_ = x_.size() / cfg_.input_dim;
        if (neg_y_.size() != n_ * cfg_.output_dim) throw DataError("MlpMseLoss: bad target batch");
        for (auto& v : neg_y_) v = -v;
    }

    std::size_t batch_size() const { return n_; }

    template <typename S>
    typename ad::Tape<S>::NodeId operator()(ad::Tape<S>& tape,
                                            const std::vector<typename ad::Tape<S>::NodeId>& p) const {
        auto x = tape.constant(x_, n_, cfg_.input_dim);
        auto a1 = tape.tanh_(tape.affine(p[0], p[1], x));
        auto a2 = tape.tanh_(tape.affine(p[2], p[3], a1));
        auto out = tape.tanh_(tape.affine(p[4], p[5], a2));
        auto diff = tape.add(out, tape.constant(neg_y_, n_, cfg_.output_dim));
        return tape.mean(tape.square(diff));
    }

private:
    MlpConfig cfg_;
    std::vector<double> x_;
    std::vector<double> neg_y_;
    std::size_t n_ = 0;
};

}  // namespace popdyn::model
