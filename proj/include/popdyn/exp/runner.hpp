#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "popdyn/exp/nmse.hpp"
#include "popdyn/exp/population.hpp"
#include "popdyn/features/scaler.hpp"
#include "popdyn/models/cnp.hpp"
#include "popdyn/models/gp.hpp"
#include "popdyn/models/mlp.hpp"
#include "popdyn/train/cnp_train.hpp"
#include "popdyn/train/maml.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/parallel.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::lab {

struct CnpArchConfig {
    std::size_t embedding_dim = 32;
    std::size_t width = 64;
};

struct ExperimentConfig {
    std::vector<int> problems = {1, 2, 3};
    std::vector<std::string> methods = {"MAML", "CNP", "GP"};
    std::vector<std::size_t> n_train_list = {9};
    std::map<int, std::vector<std::size_t>> n_train_by_problem;
    std::size_t n_repetitions = 5;
    std::uint64_t seed = 42;
    std::size_t adapt_steps = 50;
    double target_span = 0.9;  // standardized-target half range
    DynamicsConfig dynamics;
    PopulationConfig population;
    meta::MamlConfig maml;
    meta::HyperSearchConfig search;
    CnpArchConfig cnp_arch;
    meta::CnpTrainConfig cnp;
    model::GpConfig gp;

    const std::vector<std::size_t>& n_train_for(int problem) const {
        auto it = n_train_by_problem.find(problem);
        return it == n_train_by_problem.end() ? n_train_list : it->second;
    }

    std::size_t max_n_train() const {
        std::size_t m = 1;
        for (auto v : n_train_list) m = std::max(m, v);
        for (const auto& [p, list] : n_train_by_problem)
            for (auto v : list) m = std::max(m, v);
        return m;
    }

    void check() const {
        if (problems.empty() || methods.empty()) throw ConfigError("experiment: empty problem/method list");
        for (int p : problems) problem_from_int(p);
        for (const auto& m : methods)
            if (m != "MAML" && m != "CNP" && m != "GP")
                throw ConfigError("experiment.methods: unknown method '" + m + "'");
        if (n_repetitions < 1) throw ConfigError("experiment.n_repetitions must be >= 1");
        for (int p : problems)
            for (auto v : n_train_for(p))
                if (v < 1) throw ConfigError("experiment.n_train entries must be >= 1");
        population.check();
    }
};

struct UnitKey {
    int problem = 1;
    std::size_t repetition = 0;
    std::string method;       // MAML | CNP | GP
    std::size_t n_train = 0;  // 0 for GP (population-independent)

    std::string id() const {
        return "p" + std::to_string(problem) + "_" + method + "_n" + std::to_string(n_train) +
               "_rep" + std::to_string(repetition);
    }
};

struct ContextCell {
    std::size_t n_context = 0;
    double nmse = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> per_structure;
    bool failed = false;
    std::string error;
};

struct ConvergencePoint {
    std::size_t step = 0;
    double train_loss = 0.0;
    double val_nmse = std::numeric_limits<double>::quiet_NaN();
};

struct FitPoint {
    std::size_t n_context = 0;
    std::string structure;
    double temperature = 0.0;
    double truth = 0.0;
    double prediction = 0.0;
};

struct UnitResult {
    UnitKey key;
    std::vector<ContextCell> contexts;
    std::vector<ConvergencePoint> convergence;
    std::vector<FitPoint> fit_rows;
};

namespace detail {

struct StandardizedTasks {
    std::vector<model::TaskDataset> train;
    model::TaskDataset validation;
    feat::AffineScaler x_scaler;
    feat::AffineScaler y_scaler;
};

inline StandardizedTasks standardize_training(const Population& pop, std::size_t n_train,
                                              double target_span = 0.9) {
    StandardizedTasks out;
    std::vector<double> all_x, all_y;
    for (std::size_t i = 0; i < n_train; ++i) {
        const auto& t = pop.train[i];
        all_x.insert(all_x.end(), t.x.begin(), t.x.end());
        all_y.insert(all_y.end(), t.y.begin(), t.y.end());
    }
    // inputs mapped to [-1, 1]: keeps the dense grid inside the tanh
    // layers' responsive region (z-scoring puts the grid ends at +-1.7,
    // where saturation was measurably hurting few-shot adaptation)
    out.x_scaler = feat::AffineScaler::fit_range(all_x, 1, 1.0);
    out.y_scaler = feat::AffineScaler::fit_range(all_y, pop.y_dim, target_span);
    for (std::size_t i = 0; i < n_train; ++i) {
        model::TaskDataset t = pop.train[i];
        out.x_scaler.apply(t.x);
        out.y_scaler.apply(t.y);
        out.train.push_back(std::move(t));
    }
    out.validation = pop.validation;
    out.x_scaler.apply(out.validation.x);
    out.y_scaler.apply(out.validation.y);
    return out;
}

// context prefix of size n_ctx and the query block, already standardised
struct TestSlices {
    std::vector<double> ctx_x, ctx_y;    // standardized
    std::vector<double> query_x;         // standardized
    std::vector<double> query_y;         // standardized
    std::vector<double> raw_ctx_x, raw_ctx_y;
    std::vector<double> raw_query_x, raw_query_y;
};

inline TestSlices slice_test_task(const model::TaskDataset& task, std::size_t n_ctx,
                                  const feat::AffineScaler& xs, const feat::AffineScaler& ys) {
    TestSlices s;
    const auto ctx_idx_all = task.indices_with(model::SplitTag::context);
    if (n_ctx > ctx_idx_all.size())
        throw DataError("slice_test_task: requested context larger than available");
    std::vector<std::size_t> ctx_idx(ctx_idx_all.begin(),
                                     ctx_idx_all.begin() + static_cast<std::ptrdiff_t>(n_ctx));
    task.gather(ctx_idx, s.raw_ctx_x, s.raw_ctx_y);
    task.gather(task.indices_with(model::SplitTag::query), s.raw_query_x, s.raw_query_y);
    s.ctx_x = xs.applied(s.raw_ctx_x);
    s.ctx_y = ys.applied(s.raw_ctx_y);
    s.query_x = xs.applied(s.raw_query_x);
    s.query_y = ys.applied(s.raw_query_y);
    return s;
}

}  // namespace detail

// Executes one independent unit of the sweep. Results depend only on
// (cfg, key), never on scheduling, so reruns and resumed runs agree
// bitwise.
inline UnitResult run_unit(const ExperimentConfig& cfg, const UnitKey& key) {
    const Problem problem = problem_from_int(key.problem);

    PopulationConfig pcfg = cfg.population;
    pcfg.n_train = cfg.max_n_train();
    pcfg.train_seed = util::derive_seed(cfg.population.train_seed, {key.repetition});
    pcfg.test_seed = util::derive_seed(cfg.population.test_seed, {key.repetition});
    Population pop = generate_population(problem, cfg.dynamics, pcfg);
    if (problem == Problem::full_frf) apply_pca_to_population(pop, pcfg);

    UnitResult result;
    result.key = key;
    const bool want_fit_rows = key.repetition == 0 && !pop.test.empty();
    const std::size_t fit_ctx = [&] {
        for (auto c : pcfg.context_sizes)
            if (c == 3) return c;
        return pcfg.context_sizes.front();
    }();

    auto fail_all = [&](const std::string& why) {
        result.contexts.clear();
        for (auto n_ctx : pcfg.context_sizes) {
            ContextCell cell;
            cell.n_context = n_ctx;
            cell.failed = true;
            cell.error = why;
            result.contexts.push_back(std::move(cell));
        }
    };

    try {
        if (key.method == "GP") {
            for (auto n_ctx : pcfg.context_sizes) {
                ContextCell cell;
                cell.n_context = n_ctx;
                for (std::size_t s = 0; s < pop.test.size(); ++s) {
                    const auto& task = pop.test[s];
                    const auto ctx_idx_all = task.indices_with(model::SplitTag::context);
                    std::vector<std::size_t> ctx_idx(
                        ctx_idx_all.begin(), ctx_idx_all.begin() + static_cast<std::ptrdiff_t>(n_ctx));
                    std::vector<double> cx, cy, qx, qy;
                    task.gather(ctx_idx, cx, cy);
                    task.gather(task.indices_with(model::SplitTag::query), qx, qy);
                    model::GpConfig gp_cfg = cfg.gp;
                    gp_cfg.seed = util::derive_seed(cfg.seed, {0x6770ULL, static_cast<std::uint64_t>(key.problem),
                                                               key.repetition, s, n_ctx});
                    const auto models = model::gp_fit_multi(cx, cy, pop.y_dim, gp_cfg);
                    std::vector<double> pred(qx.size() * pop.y_dim);
                    for (std::size_t j = 0; j < pop.y_dim; ++j) {
                        const auto p = model::gp_predict(models[j], qx);
                        for (std::size_t i = 0; i < qx.size(); ++i)
                            pred[i * pop.y_dim + j] = p.mean[i];
                    }
                    cell.per_structure.push_back(nmse_multi(pred, qy, pop.y_dim));
                    if (want_fit_rows && s == 0 && n_ctx == fit_ctx) {
                        const auto grid = detail::linspace(pcfg.t_min, pcfg.t_max, 100);
                        const auto p0 = model::gp_predict(models[0], grid);
                        for (std::size_t i = 0; i < grid.size(); ++i) {
                            const auto truth =
                                detail::raw_target(pop.test_specs[0], grid[i], problem, cfg.dynamics);
                            double truth0 = truth[0];
                            if (pop.has_pca) {
                                Eigen::MatrixXd row(1, static_cast<Eigen::Index>(truth.size()));
                                for (std::size_t j = 0; j < truth.size(); ++j)
                                    row(0, static_cast<Eigen::Index>(j)) = truth[j];
                                truth0 = feat::pca_transform(pop.pca, row)(0, 0);
                            }
                            result.fit_rows.push_back(
                                {n_ctx, task.task_id, grid[i], truth0, p0.mean[i]});
                        }
                    }
                }
                double total = 0.0;
                for (double v : cell.per_structure) total += v;
                cell.nmse = total / static_cast<double>(cell.per_structure.size());
                result.contexts.push_back(std::move(cell));
            }
            return result;
        }

        // population-informed methods need the training slice
        auto std_tasks = detail::standardize_training(pop, key.n_train, cfg.target_span);

        if (key.method == "MAML") {
            meta::MamlConfig mcfg = cfg.maml;
            mcfg.seed = util::derive_seed(cfg.seed, {0x6d6cULL, static_cast<std::uint64_t>(key.problem),
                                                     key.repetition, key.n_train});
            const auto best = meta::select_hyperparameters(std_tasks.train, std_tasks.validation,
                                                           mcfg, cfg.search, 1, pop.y_dim);
            for (const auto& h : best.history)
                result.convergence.push_back({h.epoch, h.meta_loss, h.val_nmse});

            for (auto n_ctx : pcfg.context_sizes) {
                ContextCell cell;
                cell.n_context = n_ctx;
                for (std::size_t s = 0; s < pop.test.size(); ++s) {
                    const auto slices = detail::slice_test_task(pop.test[s], n_ctx,
                                                                std_tasks.x_scaler, std_tasks.y_scaler);
                    const auto adapted = meta::adapt(best.theta, best.mlp, slices.ctx_x,
                                                     slices.ctx_y, mcfg.alpha, cfg.adapt_steps);
                    const auto pred = model::mlp_forward_batch(adapted.theta, best.mlp,
                                                               slices.query_x,
                                                               slices.query_x.size() / best.mlp.input_dim);
                    cell.per_structure.push_back(nmse_multi(pred, slices.query_y, pop.y_dim));
                    if (want_fit_rows && s == 0 && n_ctx == fit_ctx) {
                        auto grid = detail::linspace(pcfg.t_min, pcfg.t_max, 100);
                        auto grid_std = std_tasks.x_scaler.applied(grid);
                        const auto pg = model::mlp_forward_batch(adapted.theta, best.mlp, grid_std,
                                                                 grid.size());
                        for (std::size_t i = 0; i < grid.size(); ++i) {
                            std::vector<double> row(pg.begin() + static_cast<std::ptrdiff_t>(i * pop.y_dim),
                                                    pg.begin() + static_cast<std::ptrdiff_t>((i + 1) * pop.y_dim));
                            std_tasks.y_scaler.invert(row);
                            const auto truth =
                                detail::raw_target(pop.test_specs[0], grid[i], problem, cfg.dynamics);
                            double truth0 = truth[0];
                            if (pop.has_pca) {
                                Eigen::MatrixXd trow(1, static_cast<Eigen::Index>(truth.size()));
                                for (std::size_t j = 0; j < truth.size(); ++j)
                                    trow(0, static_cast<Eigen::Index>(j)) = truth[j];
                                truth0 = feat::pca_transform(pop.pca, trow)(0, 0);
                            }
                            result.fit_rows.push_back(
                                {n_ctx, pop.test[s].task_id, grid[i], truth0, row[0]});
                        }
                    }
                }
                double total = 0.0;
                for (double v : cell.per_structure) total += v;
                cell.nmse = total / static_cast<double>(cell.per_structure.size());
                result.contexts.push_back(std::move(cell));
            }
            return result;
        }

        // CNP
        model::CnpConfig arch;
        arch.x_dim = 1;
        arch.y_dim = pop.y_dim;
        arch.embedding_dim = cfg.cnp_arch.embedding_dim;
        arch.width = cfg.cnp_arch.width;
        meta::CnpTrainConfig ccfg = cfg.cnp;
        ccfg.seed = util::derive_seed(cfg.seed, {0x636eULL, static_cast<std::uint64_t>(key.problem),
                                                 key.repetition, key.n_train});
        ad::ParamVector theta0 = model::cnp_init(arch, util::derive_seed(ccfg.seed, {0x696eULL}));
        const auto trained =
            meta::cnp_train(std_tasks.train, arch, ccfg, theta0, &std_tasks.validation);
        for (const auto& h : trained.history)
            result.convergence.push_back({h.step, h.train_loss, h.val_nmse});

        for (auto n_ctx : pcfg.context_sizes) {
            ContextCell cell;
            cell.n_context = n_ctx;
            for (std::size_t s = 0; s < pop.test.size(); ++s) {
                const auto slices = detail::slice_test_task(pop.test[s], n_ctx,
                                                            std_tasks.x_scaler, std_tasks.y_scaler);
                const auto pred = model::cnp_predict(trained.theta, arch, slices.ctx_x,
                                                     slices.ctx_y, slices.query_x);
                cell.per_structure.push_back(nmse_multi(pred, slices.query_y, pop.y_dim));
                if (want_fit_rows && s == 0 && n_ctx == fit_ctx) {
                    auto grid = detail::linspace(pcfg.t_min, pcfg.t_max, 100);
                    auto grid_std = std_tasks.x_scaler.applied(grid);
                    const auto pg =
                        model::cnp_predict(trained.theta, arch, slices.ctx_x, slices.ctx_y, grid_std);
                    for (std::size_t i = 0; i < grid.size(); ++i) {
                        std::vector<double> row(pg.begin() + static_cast<std::ptrdiff_t>(i * pop.y_dim),
                                                pg.begin() + static_cast<std::ptrdiff_t>((i + 1) * pop.y_dim));
                        std_tasks.y_scaler.invert(row);
                        const auto truth =
                            detail::raw_target(pop.test_specs[0], grid[i], problem, cfg.dynamics);
                        double truth0 = truth[0];
                        if (pop.has_pca) {
                            Eigen::MatrixXd trow(1, static_cast<Eigen::Index>(truth.size()));
                            for (std::size_t j = 0; j < truth.size(); ++j)
                                trow(0, static_cast<Eigen::Index>(j)) = truth[j];
                            truth0 = feat::pca_transform(pop.pca, trow)(0, 0);
                        }
                        result.fit_rows.push_back(
                            {n_ctx, pop.test[s].task_id, grid[i], truth0, row[0]});
                    }
                }
            }
            double total = 0.0;
            for (double v : cell.per_structure) total += v;
            cell.nmse = total / static_cast<double>(cell.per_structure.size());
            result.contexts.push_back(std::move(cell));
        }
        return result;
    } catch (const std::exception& e) {
        fail_all(e.what());
        return result;
    }
}

inline std::vector<UnitKey> enumerate_units(const ExperimentConfig& cfg) {
    std::vector<UnitKey> units;
    for (int problem : cfg.problems) {
        for (const auto& method : cfg.methods) {
            if (method == "GP") {
                for (std::size_t rep = 0; rep < cfg.n_repetitions; ++rep)
                    units.push_back({problem, rep, method, 0});
            } else {
                for (auto n_train : cfg.n_train_for(problem))
                    for (std::size_t rep = 0; rep < cfg.n_repetitions; ++rep)
                        units.push_back({problem, rep, method, n_train});
            }
        }
    }
    return units;
}

}  // namespace popdyn::lab
