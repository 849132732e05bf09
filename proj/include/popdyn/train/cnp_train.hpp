#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "popdyn/ad/grad.hpp"
#include "popdyn/exp/nmse.hpp"
#include "popdyn/models/cnp.hpp"
#include "popdyn/models/dataset.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::meta {

struct CnpTrainConfig {
    std::size_t steps = 3000;
    std::size_t tasks_per_batch = 3;
    std::size_t max_context = 7;
    std::size_t queries_per_task = 16;
    double learning_rate = 1e-3;
    std::size_t probe_every = 25;       // validation cadence, 0 = never
    std::size_t val_context_size = 3;
    std::uint64_t seed = 0;
};

struct CnpStepStats {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_nmse = std::numeric_limits<double>::quiet_NaN();
};

struct CnpTrainResult {
    ad::ParamVector theta;   // best validation checkpoint (final when no probes)
    double val_nmse = std::numeric_limits<double>::quiet_NaN();
    std::size_t selected_step = 0;
    std::vector<CnpStepStats> history;
};

namespace detail {

class Adam {
public:
    Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        ++t_;
        const double b1c = 1.0 - std::pow(0.9, static_cast<double>(t_));
        const double b2c = 1.0 - std::pow(0.999, static_cast<double>(t_));
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m_[i] = 0.9 * m_[i] + 0.1 * grad[i];
            v_[i] = 0.999 * v_[i] + 0.001 * grad[i] * grad[i];
            theta[i] -= lr_ * (m_[i] / b1c) / (std::sqrt(v_[i] / b2c) + 1e-8);
        }
    }

private:
    double lr_;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace detail

// Conventional training across the population: every step samples a few
// tasks, a random context set for each, and a query batch, then takes one
// Adam step on the pooled query MSE. Tasks are standardised upstream.
inline CnpTrainResult cnp_train(const std::vector<model::TaskDataset>& tasks,
                                const model::CnpConfig& cnp_cfg, const CnpTrainConfig& cfg,
                                ad::ParamVector theta,
                                const model::TaskDataset* validation = nullptr) {
    if (tasks.empty()) throw DataError("cnp_train: no training tasks");
    for (const auto& t : tasks) t.check();

    // fixed validation split: context subset + unseen remainder
    std::vector<double> vcx, vcy, vux, vuy;
    if (validation && cfg.probe_every > 0) {
        util::Rng vr(util::derive_seed(cfg.seed, {0x7663ULL}));
        if (validation->size() <= cfg.val_context_size)
            throw DataError("cnp_train: validation task too small");
        const auto ctx_idx = vr.choose(validation->size(), cfg.val_context_size);
        std::vector<bool> in_ctx(validation->size(), false);
        for (auto i : ctx_idx) in_ctx[i] = true;
        std::vector<std::size_t> unseen;
        for (std::size_t i = 0; i < validation->size(); ++i)
            if (!in_ctx[i]) unseen.push_back(i);
        validation->gather(ctx_idx, vcx, vcy);
        validation->gather(unseen, vux, vuy);
    }

    CnpTrainResult result;
    result.theta = theta;
    result.history.reserve(cfg.steps / std::max<std::size_t>(1, cfg.probe_every) + 2);
    detail::Adam opt(theta.size(), cfg.learning_rate);
    double best_val = std::numeric_limits<double>::infinity();

    auto probe = [&](std::size_t step, double train_loss) {
        double score = std::numeric_limits<double>::quiet_NaN();
        if (validation && !vcx.empty()) {
            try {
                const auto pred = model::cnp_predict(theta, cnp_cfg, vcx, vcy, vux);
                score = lab::nmse_multi(pred, vuy, cnp_cfg.y_dim);
            } catch (const std::exception&) {
            }
            if (std::isfinite(score) && score < best_val) {
                best_val = score;
                result.theta = theta;
                result.val_nmse = score;
                result.selected_step = step;
            }
        }
        result.history.push_back({step, train_loss, score});
    };

    double last_loss = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        util::Rng rng(util::derive_seed(cfg.seed, {0x636eULL, step}));
        const std::size_t n_tasks = std::min(cfg.tasks_per_batch, tasks.size());
        std::vector<model::CnpMseLoss::TaskBatch> batch;
        batch.reserve(n_tasks);
        const auto chosen = rng.choose(tasks.size(), n_tasks);
        for (std::size_t task_i : chosen) {
            const auto& task = tasks[task_i];
            model::CnpMseLoss::TaskBatch tb;
            const std::size_t n_ctx =
                1 + static_cast<std::size_t>(rng.uniform_index(std::min(cfg.max_context, task.size())));
            const auto ctx_idx = rng.choose(task.size(), n_ctx);
            std::vector<double> cx, cy;
            task.gather(ctx_idx, cx, cy);
            model::canonicalize_context(cx, cy, cnp_cfg.x_dim, cnp_cfg.y_dim);
            tb.n_ctx = cx.size() / cnp_cfg.x_dim;
            tb.context_xy.resize(tb.n_ctx * (cnp_cfg.x_dim + cnp_cfg.y_dim));
            for (std::size_t i = 0; i < tb.n_ctx; ++i) {
                for (std::size_t j = 0; j < cnp_cfg.x_dim; ++j)
                    tb.context_xy[i * (cnp_cfg.x_dim + cnp_cfg.y_dim) + j] = cx[i * cnp_cfg.x_dim + j];
                for (std::size_t j = 0; j < cnp_cfg.y_dim; ++j)
                    tb.context_xy[i * (cnp_cfg.x_dim + cnp_cfg.y_dim) + cnp_cfg.x_dim + j] =
                        cy[i * cnp_cfg.y_dim + j];
            }
            const std::size_t n_q = std::min(cfg.queries_per_task, task.size());
            const auto q_idx = rng.choose(task.size(), n_q);
            std::vector<double> qx, qy;
            task.gather(q_idx, qx, qy);
            tb.n_q = n_q;
            tb.query_x = std::move(qx);
            tb.neg_query_y = std::move(qy);
            for (auto& v : tb.neg_query_y) v = -v;
            batch.push_back(std::move(tb));
        }

        model::CnpMseLoss loss(cnp_cfg, std::move(batch));
        double value = 0.0;
        const auto g = ad::grad(loss, theta, &value);
        if (!std::isfinite(value))
            throw NumericsError("cnp_train: non-finite loss at step " + std::to_string(step));
        last_loss = value;
        if (cfg.probe_every > 0 && step % cfg.probe_every == 0) probe(step, value);
        opt.step(theta.values(), g);
        theta.check_finite();
    }
    probe(cfg.steps, last_loss);
    if (!std::isfinite(result.val_nmse)) result.theta = theta;  // no usable probe: keep final
    return result;
}

}  // namespace popdyn::meta
