#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "popdyn/ad/grad.hpp"
#include "popdyn/exp/nmse.hpp"
#include "popdyn/models/dataset.hpp"
#include "popdyn/models/mlp.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::meta {

struct MamlConfig {
    double alpha = 1e-2;              // inner learning rate
    double beta = 1e-3;               // meta learning rate
    std::size_t k_inner = 1;          // inner steps per task
    std::size_t epochs = 2000;
    std::size_t batch = 0;            // tasks per meta-update, 0 = all
    std::size_t n_inner_samples = 10;
    std::size_t n_meta_samples = 10;
    bool second_order = true;
    std::uint64_t seed = 0;

    void check() const {
        if (!(alpha > 0.0) || !(beta > 0.0))
            throw ConfigError("MamlConfig: alpha and beta must be > 0");
        if (k_inner < 1) throw ConfigError("MamlConfig: k_inner must be >= 1");
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double meta_loss = 0.0;
    double val_nmse = std::numeric_limits<double>::quiet_NaN();
};

struct MetaTrainResult {
    ad::ParamVector theta;
    std::vector<EpochStats> history;
};

struct AdaptationResult {
    ad::ParamVector theta;
    std::vector<double> loss_history;  // length n_steps + 1
    std::size_t selected_step = 0;
    double query_nmse = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Tasks enter the trainer already standardised; batches are (x, y) row
// blocks drawn without replacement per epoch and task.
inline void draw_batches(const model::TaskDataset& task, std::size_t n_inner, std::size_t n_meta,
                         util::Rng& rng, std::vector<double>& xi, std::vector<double>& yi,
                         std::vector<double>& xm, std::vector<double>& ym) {
    const std::size_t n = task.size();
    if (n < n_inner + n_meta)
        throw DataError("meta_train: task " + task.task_id + " has " + std::to_string(n) +
                        " pairs; needs >= " + std::to_string(n_inner + n_meta));
    const auto idx = rng.choose(n, n_inner + n_meta);
    std::vector<std::size_t> inner_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_inner));
    std::vector<std::size_t> meta_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_inner), idx.end());
    task.gather(inner_idx, xi, yi);
    task.gather(meta_idx, xm, ym);
}

}  // namespace detail

// Algorithm: per epoch and task, k_inner gradient steps on the task's
// inner batch define theta_i'; the meta-update then descends the summed
// query losses with the gradient taken at the pre-update theta
// (second-order unless disabled).
//
// per_epoch, when set, observes (epoch, theta, meta_loss) after each
// meta-update and may record checkpoints.
inline MetaTrainResult meta_train(
    const std::vector<model::TaskDataset>& tasks, const model::MlpConfig& mlp_cfg,
    const MamlConfig& cfg, ad::ParamVector theta,
    const std::function<void(std::size_t, const ad::ParamVector&, double)>& per_epoch = {}) {
    cfg.check();
    if (tasks.empty()) throw DataError("meta_train: no training tasks");
    for (const auto& t : tasks) t.check();

    MetaTrainResult result;
    result.history.reserve(cfg.epochs);

    std::vector<double> xi, yi, xm, ym;
    std::vector<double> meta_grad(theta.size());
    const std::size_t n_batch = cfg.batch == 0 ? tasks.size() : std::min(cfg.batch, tasks.size());

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(meta_grad.begin(), meta_grad.end(), 0.0);
        double meta_loss = 0.0;

        // task subset for this epoch (all tasks when batch covers them)
        std::vector<std::size_t> task_ids(tasks.size());
        for (std::size_t i = 0; i < tasks.size(); ++i) task_ids[i] = i;
        if (n_batch < tasks.size()) {
            util::Rng pick(util::derive_seed(cfg.seed, {0x6261ULL, epoch}));
            task_ids = pick.choose(tasks.size(), n_batch);
        }

        for (std::size_t ti : task_ids) {
            util::Rng rng(util::derive_seed(cfg.seed, {0x6d62ULL, epoch, ti}));
            detail::draw_batches(tasks[ti], cfg.n_inner_samples, cfg.n_meta_samples, rng, xi, yi,
                                 xm, ym);
            model::MlpMseLoss inner(mlp_cfg, xi, yi);
            model::MlpMseLoss outer(mlp_cfg, xm, ym);

            // inner trajectory, then transposed-Jacobian chain (see ad::grad_through_update)
            std::vector<ad::ParamVector> trajectory;
            trajectory.reserve(cfg.k_inner + 1);
            trajectory.push_back(theta);
            for (std::size_t j = 0; j < cfg.k_inner; ++j) {
                const auto g = ad::grad(inner, trajectory.back());
                ad::ParamVector next = trajectory.back();
                next.axpy(-cfg.alpha, g);
                trajectory.push_back(std::move(next));
            }
            double task_loss = 0.0;
            std::vector<double> v = ad::grad(outer, trajectory.back(), &task_loss);
            if (cfg.second_order) {
                for (std::size_t j = cfg.k_inner; j-- > 0;) {
                    const auto hv = ad::hessian_vector_product(inner, trajectory[j], v);
                    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.alpha * hv[i];
                }
            }
            for (std::size_t i = 0; i < meta_grad.size(); ++i) meta_grad[i] += v[i];
            meta_loss += task_loss;  // sum over tasks, as in the meta objective
        }

        if (!std::isfinite(meta_loss))
            throw NumericsError("meta_train: non-finite meta loss at epoch " +
                                std::to_string(epoch));
        theta.axpy(-cfg.beta, meta_grad);
        theta.check_finite();

        result.history.push_back({epoch, meta_loss, std::numeric_limits<double>::quiet_NaN()});
        if (per_epoch) per_epoch(epoch, theta, meta_loss);
    }
    result.theta = std::move(theta);
    return result;
}

// Test-time adaptation: full-batch gradient descent on the context MSE,
// keeping the iterate with the lowest context loss.
inline AdaptationResult adapt(const ad::ParamVector& theta_star, const model::MlpConfig& mlp_cfg,
                              const std::vector<double>& context_x,
                              const std::vector<double>& context_y, double alpha,
                              std::size_t n_steps) {
    if (context_x.empty()) throw DataError("adapt: need at least one context sample");
    model::MlpMseLoss loss(mlp_cfg, context_x, context_y);

    AdaptationResult result;
    result.loss_history.reserve(n_steps + 1);
    ad::ParamVector theta = theta_star;
    ad::ParamVector best = theta;
    double best_loss = std::numeric_limits<double>::infinity();

    for (std::size_t step = 0; step <= n_steps; ++step) {
        double value = 0.0;
        const auto g = ad::grad(loss, theta, &value);
        if (!std::isfinite(value))
            throw NumericsError("adapt: non-finite context loss at step " + std::to_string(step));
        result.loss_history.push_back(value);
        if (value < best_loss) {
            best_loss = value;
            best = theta;
            result.selected_step = step;
        }
        if (step < n_steps) theta.axpy(-alpha, g);
    }
    result.theta = std::move(best);
    return result;
}

struct HyperSearchConfig {
    std::vector<std::size_t> hidden_sizes = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::size_t n_inits = 5;
    // candidate score: summed unseen-NMSE after adapting on nested context
    // prefixes of these sizes (scoring across sizes picks checkpoints that
    // hold up at every context budget)
    std::vector<std::size_t> val_context_sizes = {1, 3};
    std::size_t probe_adapt_steps = 25;
    std::size_t adapt_steps = 50;
    // checkpoints from the first fifth of the budget are not selectable:
    // barely-trained models can score deceptively well on an unlucky
    // validation draw while being far off across the population
    double min_select_fraction = 0.2;
};

struct HyperSearchResult {
    model::MlpConfig mlp;
    ad::ParamVector theta;   // meta-parameters at the selected epoch
    double val_nmse = std::numeric_limits<double>::infinity();
    std::size_t hidden = 0;
    std::size_t init_index = 0;
    std::size_t epoch = 0;
    std::vector<EpochStats> history;  // history of the selected candidate
};

// Grid search over hidden sizes and seeded initialisations. After every
// epoch a copy of the model is adapted on a fixed context subset of the
// validation task and scored on the remaining, unseen samples; the
// (size, init, epoch) checkpoint with the lowest unseen score wins.
inline HyperSearchResult select_hyperparameters(const std::vector<model::TaskDataset>& train_tasks,
                                                const model::TaskDataset& validation,
                                                const MamlConfig& cfg,
                                                const HyperSearchConfig& search,
                                                std::size_t input_dim, std::size_t output_dim) {
    if (train_tasks.empty()) throw DataError("select_hyperparameters: no training tasks");
    validation.check();
    if (search.val_context_sizes.empty())
        throw DataError("select_hyperparameters: no validation context sizes");
    std::size_t max_val_ctx = 0;
    for (auto c : search.val_context_sizes) max_val_ctx = std::max(max_val_ctx, c);
    if (validation.size() <= max_val_ctx)
        throw DataError("select_hyperparameters: validation task too small");

    // fixed context/unseen split of the validation structure; the probe
    // context sizes use nested prefixes of one draw
    util::Rng vr(util::derive_seed(cfg.seed, {0x7663ULL}));
    const auto ctx_idx = vr.choose(validation.size(), max_val_ctx);
    std::vector<bool> in_ctx(validation.size(), false);
    for (auto i : ctx_idx) in_ctx[i] = true;
    std::vector<std::size_t> unseen_idx;
    for (std::size_t i = 0; i < validation.size(); ++i)
        if (!in_ctx[i]) unseen_idx.push_back(i);
    std::vector<double> vcx, vcy, vux, vuy;
    validation.gather(ctx_idx, vcx, vcy);
    validation.gather(unseen_idx, vux, vuy);

    HyperSearchResult best;
    bool any_candidate = false;
    std::string last_error;

    for (std::size_t hi = 0; hi < search.hidden_sizes.size(); ++hi) {
        const std::size_t hidden = search.hidden_sizes[hi];
        model::MlpConfig mlp_cfg{input_dim, hidden, output_dim};
        for (std::size_t init = 0; init < search.n_inits; ++init) {
            MamlConfig run_cfg = cfg;
            run_cfg.seed = util::derive_seed(cfg.seed, {0x6873ULL, hidden, init});
            ad::ParamVector theta0 =
                model::mlp_init(mlp_cfg, util::derive_seed(run_cfg.seed, {0x696eULL}));

            struct Snapshot {
                double val = std::numeric_limits<double>::infinity();
                ad::ParamVector theta;
                std::size_t epoch = 0;
            } candidate_best;
            std::vector<EpochStats> history;
            history.reserve(run_cfg.epochs);

            try {
                meta_train(train_tasks, mlp_cfg, run_cfg, theta0,
                           [&](std::size_t epoch, const ad::ParamVector& theta, double meta_loss) {
                               double score = std::numeric_limits<double>::quiet_NaN();
                               try {
                                   double total = 0.0;
                                   for (auto n_ctx : search.val_context_sizes) {
                                       const std::vector<double> cx(vcx.begin(),
                                                                    vcx.begin() + static_cast<std::ptrdiff_t>(n_ctx * input_dim));
                                       const std::vector<double> cy(vcy.begin(),
                                                                    vcy.begin() + static_cast<std::ptrdiff_t>(n_ctx * output_dim));
                                       auto adapted = adapt(theta, mlp_cfg, cx, cy, run_cfg.alpha,
                                                            search.probe_adapt_steps);
                                       const auto pred = model::mlp_forward_batch(
                                           adapted.theta, mlp_cfg, vux, vux.size() / input_dim);
                                       total += lab::nmse_multi(pred, vuy, output_dim);
                                   }
                                   score = total / static_cast<double>(search.val_context_sizes.size());
                               } catch (const std::exception&) {
                                   // NaN score: this epoch is simply not selectable
                               }
                               history.push_back({epoch, meta_loss, score});
                               const auto min_epoch = static_cast<std::size_t>(
                                   search.min_select_fraction * static_cast<double>(run_cfg.epochs));
                               if (epoch + 1 >= min_epoch && std::isfinite(score) &&
                                   score < candidate_best.val) {
                                   candidate_best.val = score;
                                   candidate_best.theta = theta;
                                   candidate_best.epoch = epoch;
                               }
                           });
            } catch (const std::exception& e) {
                last_error = e.what();
                continue;  // diverged candidate: excluded
            }

            if (std::isfinite(candidate_best.val)) {
                any_candidate = true;
                if (candidate_best.val < best.val_nmse) {
                    best.val_nmse = candidate_best.val;
                    best.mlp = mlp_cfg;
                    best.theta = candidate_best.theta;
                    best.hidden = hidden;
                    best.init_index = init;
                    best.epoch = candidate_best.epoch;
                    best.history = history;
                }
            }
        }
    }
    if (!any_candidate)
        throw NumericsError("select_hyperparameters: every candidate failed" +
                            (last_error.empty() ? std::string() : "; last error: " + last_error));
    return best;
}

}  // namespace popdyn::meta
