#pragma once

#include <algorithm>
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

// Conditional neural process: an encoder maps each context pair (x, y) to
// an r-dimensional embedding, the embeddings are averaged into a task
// vector, and the decoder predicts targets from (x_query, task vector).
// Both subnetworks have one tanh hidden layer; the encoder head is linear,
// the decoder head is tanh (targets live in (-1, 1)).
struct CnpConfig {
    std::size_t x_dim = 1;
    std::size_t y_dim = 1;
    std::size_t embedding_dim = 32;
    std::size_t width = 64;
};

inline ad::LayoutPtr cnp_layout(const CnpConfig& cfg) {
    auto layout = std::make_shared<ad::ParamLayout>();
    layout->add("enc_w1", cfg.width, cfg.x_dim + cfg.y_dim);
    layout->add("enc_b1", cfg.width, 1);
    layout->add("enc_w2", cfg.embedding_dim, cfg.width);
    layout->add("enc_b2", cfg.embedding_dim, 1);
    layout->add("dec_wx", cfg.width, cfg.x_dim);
    layout->add("dec_wt", cfg.width, cfg.embedding_dim);
    layout->add("dec_b1", cfg.width, 1);
    layout->add("dec_w2", cfg.y_dim, cfg.width);
    layout->add("dec_b2", cfg.y_dim, 1);
    return layout;
}

inline ad::ParamVector cnp_init(const CnpConfig& cfg, std::uint64_t seed) {
    ad::ParamVector theta(cnp_layout(cfg));
    util::Rng rng(seed);
    const auto& layout = *theta.layout();
    for (std::size_t i = 0; i < layout.count(); ++i) {
        const auto& s = layout.slice(i);
        if (s.cols == 1 && s.name.find("_b") != std::string::npos) continue;
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(s.cols));
        auto vals = theta.slice(i);
        for (auto& v : vals) v = rng.normal(0.0, std_dev);
    }
    return theta;
}

// Context canonicalisation: pairs are sorted lexicographically by their
// raw bits and exact duplicates collapse to a single observation, so the
// aggregated embedding is bitwise invariant to ordering and duplication.
inline void canonicalize_context(std::vector<double>& cx, std::vector<double>& cy,
                                 std::size_t x_dim, std::size_t y_dim) {
    const std::size_t n = x_dim == 0 ? 0 : cx.size() / x_dim;
    if (n == 0) throw DataError("cnp: empty context");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto pair_less = [&](std::size_t a, std::size_t b) {
        for (std::size_t j = 0; j < x_dim; ++j) {
            if (cx[a * x_dim + j] != cx[b * x_dim + j]) return cx[a * x_dim + j] < cx[b * x_dim + j];
        }
        for (std::size_t j = 0; j < y_dim; ++j) {
            if (cy[a * y_dim + j] != cy[b * y_dim + j]) return cy[a * y_dim + j] < cy[b * y_dim + j];
        }
        return false;
    };
    auto pair_equal = [&](std::size_t a, std::size_t b) {
        for (std::size_t j = 0; j < x_dim; ++j)
            if (cx[a * x_dim + j] != cx[b * x_dim + j]) return false;
        for (std::size_t j = 0; j < y_dim; ++j)
            if (cy[a * y_dim + j] != cy[b * y_dim + j]) return false;
        return true;
    };
    std::sort(order.begin(), order.end(), pair_less);
    std::vector<std::size_t> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (kept.empty() || !pair_equal(order[i], kept.back())) kept.push_back(order[i]);
    std::vector<double> nx(kept.size() * x_dim), ny(kept.size() * y_dim);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        for (std::size_t j = 0; j < x_dim; ++j) nx[i * x_dim + j] = cx[kept[i] * x_dim + j];
        for (std::size_t j = 0; j < y_dim; ++j) ny[i * y_dim + j] = cy[kept[i] * y_dim + j];
    }
    cx = std::move(nx);
    cy = std::move(ny);
}

namespace cnp_detail {
inline void affine(std::span<const double> w, std::span<const double> b,
                   std::span<const double> x, std::size_t rows, std::size_t cols,
                   std::vector<double>& out) {
    out.resize(rows);
    for (std::size_t j = 0; j < rows; ++j) {
        double acc = b[j];
        const double* wrow = w.data() + j * cols;
        for (std::size_t p = 0; p < cols; ++p) acc += wrow[p] * x[p];
        out[j] = acc;
    }
}
}  // namespace cnp_detail

// Aggregated task embedding from (already canonicalised) context pairs.
inline std::vector<double> cnp_embed(const ad::ParamVector& theta, const CnpConfig& cfg,
                                     std::span<const double> cx, std::span<const double> cy) {
    const std::size_t n = cx.size() / cfg.x_dim;
    std::vector<double> pair_in(cfg.x_dim + cfg.y_dim), hidden, emb;
    std::vector<double> task(cfg.embedding_dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cfg.x_dim; ++j) pair_in[j] = cx[i * cfg.x_dim + j];
        for (std::size_t j = 0; j < cfg.y_dim; ++j) pair_in[cfg.x_dim + j] = cy[i * cfg.y_dim + j];
        cnp_detail::affine(theta.slice(0), theta.slice(1), pair_in, cfg.width,
                           cfg.x_dim + cfg.y_dim, hidden);
        for (auto& h : hidden) h = std::tanh(h);
        cnp_detail::affine(theta.slice(2), theta.slice(3), hidden, cfg.embedding_dim, cfg.width,
                           emb);
        for (std::size_t j = 0; j < cfg.embedding_dim; ++j) task[j] += emb[j];
    }
    for (auto& t : task) t /= static_cast<double>(n);
    return task;
}

inline std::vector<double> cnp_decode(const ad::ParamVector& theta, const CnpConfig& cfg,
                                      std::span<const double> task,
                                      std::span<const double> query_x) {
    const std::size_t nq = query_x.size() / cfg.x_dim;
    std::vector<double> out(nq * cfg.y_dim);
    std::vector<double> hx, ht, head;
    for (std::size_t q = 0; q < nq; ++q) {
        cnp_detail::affine(theta.slice(4), theta.slice(6),
                           query_x.subspan(q * cfg.x_dim, cfg.x_dim), cfg.width, cfg.x_dim, hx);
        cnp_detail::affine(theta.slice(5), std::vector<double>(cfg.width, 0.0), task, cfg.width,
                           cfg.embedding_dim, ht);
        for (std::size_t j = 0; j < cfg.width; ++j) hx[j] = std::tanh(hx[j] + ht[j]);
        cnp_detail::affine(theta.slice(7), theta.slice(8), hx, cfg.y_dim, cfg.width, head);
        for (std::size_t j = 0; j < cfg.y_dim; ++j) out[q * cfg.y_dim + j] = std::tanh(head[j]);
    }
    return out;
}

// Prediction on raw (un-canonicalised) context.
inline std::vector<double> cnp_predict(const ad::ParamVector& theta, const CnpConfig& cfg,
                                       std::vector<double> context_x,
                                       std::vector<double> context_y,
                                       std::span<const double> query_x) {
    if (context_x.empty()) throw DataError("cnp_predict: empty context");
    if (context_x.size() % cfg.x_dim != 0 || context_y.size() % cfg.y_dim != 0 ||
        context_x.size() / cfg.x_dim != context_y.size() / cfg.y_dim)
        throw DataError("cnp_predict: context shape mismatch");
    canonicalize_context(context_x, context_y, cfg.x_dim, cfg.y_dim);
    const auto task = cnp_embed(theta, cfg, context_x, context_y);
    return cnp_decode(theta, cfg, task, query_x);
}

// Loss builder: mean squared error over query points for a batch of tasks,
// each conditioned on its own context set. Usable with both tape scalars.
class CnpMseLoss {
public:
    struct TaskBatch {
        std::vector<double> context_xy;  // n_ctx x (x_dim + y_dim)
        std::size_t n_ctx = 0;
        std::vector<double> query_x;     // n_q x x_dim
        std::vector<double> neg_query_y; // n_q x y_dim, negated
        std::size_t n_q = 0;
    };

    CnpMseLoss(const CnpConfig& cfg, std::vector<TaskBatch> tasks)
        : cfg_(cfg), tasks_(std::move(tasks)) {
        if (tasks_.empty()) throw DataError("CnpMseLoss: no tasks");
    }

    template <typename S>
    typename ad::Tape<S>::NodeId operator()(ad::Tape<S>& tape,
                                            const std::vector<typename ad::Tape<S>::NodeId>& p) const {
        using NodeId = typename ad::Tape<S>::NodeId;
        const std::vector<double> zero_bias(cfg_.width, 0.0);
        NodeId total = -1;
        for (const auto& t : tasks_) {
            auto ctx = tape.constant(t.context_xy, t.n_ctx, cfg_.x_dim + cfg_.y_dim);
            auto h = tape.tanh_(tape.affine(p[0], p[1], ctx));
            auto emb = tape.affine(p[2], p[3], h);  // n_ctx x r
            const std::vector<double> avg_row(t.n_ctx, 1.0 / static_cast<double>(t.n_ctx));
            auto task_vec = tape.matmul(tape.constant(avg_row, 1, t.n_ctx), emb);  // 1 x r
            const std::vector<double> ones(t.n_q, 1.0);
            auto bcast = tape.matmul(tape.constant(ones, t.n_q, 1), task_vec);  // n_q x r
            auto xq = tape.constant(t.query_x, t.n_q, cfg_.x_dim);
            auto zb = tape.constant(zero_bias, cfg_.width, 1);
            auto pre = tape.add(tape.affine(p[4], p[6], xq), tape.affine(p[5], zb, bcast));
            auto hd = tape.tanh_(pre);
            auto out = tape.tanh_(tape.affine(p[7], p[8], hd));
            auto diff = tape.add(out, tape.constant(t.neg_query_y, t.n_q, cfg_.y_dim));
            auto loss = tape.mean(tape.square(diff));
            total = total < 0 ? loss : tape.add(total, loss);
        }
        if (tasks_.size() > 1)
            total = tape.mul(total, tape.scalar_constant(1.0 / static_cast<double>(tasks_.size())));
        return total;
    }

private:
    CnpConfig cfg_;
    std::vector<TaskBatch> tasks_;
};

}  // namespace popdyn::model
