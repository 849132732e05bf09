#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "popdyn/dynamics/frf.hpp"
#include "popdyn/dynamics/structure.hpp"
#include "popdyn/features/pca.hpp"
#include "popdyn/models/dataset.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::lab {

// 1: FRF line at 1 Hz, 2: line at 50 Hz, 3: whole FRF via PCA coordinates.
enum class Problem : int { line_low = 1, line_high = 2, full_frf = 3 };

inline Problem problem_from_int(int p) {
    if (p < 1 || p > 3) throw ConfigError("problem must be 1, 2 or 3");
    return static_cast<Problem>(p);
}

struct DynamicsConfig {
    std::size_t n_dof = 5;
    double mass = 1.0;
    double damper = 20.0;  // ~10% modal damping: smooth FRFs like the target family
    dyn::TempLawMode temp_mode = dyn::TempLawMode::scaled;
    double law_a2 = -13.0;
    double law_a1 = 500.0;
    double law_a0 = 7200.0;
    double f_start = 0.25;
    double f_stop = 64.0;
    double f_step = 0.25;
    double line_low_hz = 1.0;
    double line_high_hz = 50.0;

    dyn::TemperatureLaw law(double t_min, double t_max) const {
        dyn::TemperatureLaw l;
        l.a2 = law_a2;
        l.a1 = law_a1;
        l.a0 = law_a0;
        l.mode = temp_mode;
        l.t_min = t_min;
        l.t_max = t_max;
        l.t_ref = t_min;
        if (!(l.q(t_min) > 0.0) || !(l.q(t_max) > 0.0))
            throw ConfigError("dynamics.law: q(T) must be positive over the valid range");
        return l;
    }
};

struct PopulationConfig {
    double k_min = 8000.0;
    double k_max = 12000.0;
    double t_min = 20.0;
    double t_max = 40.0;
    std::size_t n_train = 9;         // meta-training structures
    std::size_t n_validation = 1;
    std::size_t n_test = 200;
    std::size_t train_samples = 100; // dense grid per training structure
    std::size_t n_queries = 200;     // per test structure
    std::vector<std::size_t> context_sizes = {1, 3, 5, 7};
    std::size_t context_grid = 200;  // context temps drawn from this grid
    std::size_t pca_max_components = 10;
    double pca_variance_threshold = 0.999;
    std::uint64_t train_seed = 1;
    std::uint64_t test_seed = 2;

    void check() const {
        if (!(k_min > 0.0) || !(k_max > k_min)) throw ConfigError("population.k range invalid");
        if (!(t_min < t_max)) throw ConfigError("population.t range invalid");
        if (t_min < 20.0 - 1e-12 || t_max > 40.0 + 1e-12)
            throw ConfigError("population.t_range: temperatures must lie within [20, 40]");
        if (n_train < 1 || n_validation != 1) throw ConfigError("population: needs n_train >= 1 and one validation structure");
        if (n_test < 1 || train_samples < 2 || n_queries < 2)
            throw ConfigError("population: counts too small");
        if (context_sizes.empty()) throw ConfigError("population.context_sizes empty");
        for (auto c : context_sizes)
            if (c < 1 || c > context_grid) throw ConfigError("population.context_sizes out of range");
    }

    std::size_t max_context() const {
        std::size_t m = 1;
        for (auto c : context_sizes) m = std::max(m, c);
        return m;
    }
};

struct Population {
    std::vector<dyn::StructureSpec> train_specs;
    dyn::StructureSpec validation_spec;
    std::vector<dyn::StructureSpec> test_specs;
    std::vector<model::TaskDataset> train;  // raw targets, tag = train
    model::TaskDataset validation;
    std::vector<model::TaskDataset> test;   // context prefix + queries
    std::size_t y_dim = 1;
    feat::PcaBasis pca;                      // problem 3 only
    bool has_pca = false;
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

// Raw target for one structure at one temperature: a single spectral line
// or the whole FRF magnitude vector on the configured grid.
inline std::vector<double> raw_target(const dyn::StructureSpec& spec, double temperature,
                                      Problem problem, const DynamicsConfig& dcfg) {
    const auto mats = dyn::assemble_matrices(spec, temperature);
    switch (problem) {
        case Problem::line_low: {
            const auto curve = dyn::frf_direct(mats, 0, 0, {dcfg.line_low_hz});
            return {curve.magnitude[0]};
        }
        case Problem::line_high: {
            const auto curve = dyn::frf_direct(mats, 0, 0, {dcfg.line_high_hz});
            return {curve.magnitude[0]};
        }
        case Problem::full_frf: {
            const auto grid = dyn::frequency_grid(dcfg.f_start, dcfg.f_stop, dcfg.f_step);
            const auto curve = dyn::frf_direct(mats, 0, 0, grid);
            return curve.magnitude;
        }
    }
    throw ConfigError("raw_target: bad problem");
}

inline model::TaskDataset dense_task(const std::string& id, const dyn::StructureSpec& spec,
                                     Problem problem, const DynamicsConfig& dcfg,
                                     const std::vector<double>& temps) {
    model::TaskDataset task;
    task.task_id = id;
    task.x = temps;
    for (double t : temps) {
        const auto y = raw_target(spec, t, problem, dcfg);
        task.y_dim = y.size();
        task.y.insert(task.y.end(), y.begin(), y.end());
    }
    task.tag.assign(temps.size(), model::SplitTag::train);
    return task;
}

}  // namespace detail

// Draws the population and evaluates raw targets. Training and validation
// structures carry a dense, evenly spaced temperature grid; each test
// structure carries max_context context temperatures (a prefix-stable draw
// without replacement from an even grid, shared across methods) followed
// by uniformly sampled query temperatures.
//
// For problem 3 the targets are full FRF magnitudes here; the caller
// projects them onto a PCA basis fitted on training structures only (see
// apply_pca_to_population).
inline Population generate_population(Problem problem, const DynamicsConfig& dcfg,
                                      const PopulationConfig& pcfg) {
    pcfg.check();
    const auto law = dcfg.law(pcfg.t_min, pcfg.t_max);

    Population pop;
    util::Rng train_rng(pcfg.train_seed);
    for (std::size_t i = 0; i < pcfg.n_train; ++i) {
        const double k = train_rng.uniform(pcfg.k_min, pcfg.k_max);
        pop.train_specs.push_back(
            dyn::StructureSpec::chain(dcfg.n_dof, dcfg.mass, dcfg.damper, k, law));
    }
    pop.validation_spec = dyn::StructureSpec::chain(
        dcfg.n_dof, dcfg.mass, dcfg.damper, train_rng.uniform(pcfg.k_min, pcfg.k_max), law);
    util::Rng test_rng(pcfg.test_seed);
    for (std::size_t i = 0; i < pcfg.n_test; ++i) {
        const double k = test_rng.uniform(pcfg.k_min, pcfg.k_max);
        pop.test_specs.push_back(
            dyn::StructureSpec::chain(dcfg.n_dof, dcfg.mass, dcfg.damper, k, law));
    }

    const auto dense_temps = detail::linspace(pcfg.t_min, pcfg.t_max, pcfg.train_samples);
    for (std::size_t i = 0; i < pop.train_specs.size(); ++i)
        pop.train.push_back(detail::dense_task("train_" + std::to_string(i), pop.train_specs[i],
                                               problem, dcfg, dense_temps));
    pop.validation =
        detail::dense_task("validation_0", pop.validation_spec, problem, dcfg, dense_temps);

    const auto ctx_grid = detail::linspace(pcfg.t_min, pcfg.t_max, pcfg.context_grid);
    const std::size_t max_ctx = pcfg.max_context();
    for (std::size_t s = 0; s < pop.test_specs.size(); ++s) {
        model::TaskDataset task;
        task.task_id = "test_" + std::to_string(s);
        util::Rng ctx_rng(util::derive_seed(pcfg.test_seed, {0x637478ULL, s}));
        const auto ctx_pick = ctx_rng.choose(pcfg.context_grid, max_ctx);
        for (std::size_t i = 0; i < max_ctx; ++i) {
            task.x.push_back(ctx_grid[ctx_pick[i]]);
            task.tag.push_back(model::SplitTag::context);
        }
        util::Rng query_rng(util::derive_seed(pcfg.test_seed, {0x717279ULL, s}));
        for (std::size_t i = 0; i < pcfg.n_queries; ++i) {
            task.x.push_back(query_rng.uniform(pcfg.t_min, pcfg.t_max));
            task.tag.push_back(model::SplitTag::query);
        }
        for (double t : task.x) {
            const auto y = detail::raw_target(pop.test_specs[s], t, problem, dcfg);
            task.y_dim = y.size();
            task.y.insert(task.y.end(), y.begin(), y.end());
        }
        pop.test.push_back(std::move(task));
    }
    pop.y_dim = pop.train.front().y_dim;
    return pop;
}

namespace detail {
inline void project_task(model::TaskDataset& task, const feat::PcaBasis& basis) {
    const std::size_t n = task.size();
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(task.y_dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < task.y_dim; ++j)
            rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                task.y[i * task.y_dim + j];
    const Eigen::MatrixXd coords = feat::pca_transform(basis, rows);
    task.y_dim = static_cast<std::size_t>(coords.cols());
    task.y.resize(n * task.y_dim);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < task.y_dim; ++j)
            task.y[i * task.y_dim + j] =
                coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}
}  // namespace detail

// Problem 3: fit the basis on the training structures' FRFs (validation
// and test structures are projected with the frozen basis) and replace
// every task's targets with PCA coordinates.
inline void apply_pca_to_population(Population& pop, const PopulationConfig& pcfg) {
    const std::size_t d = pop.y_dim;
    std::size_t n_rows = 0;
    for (const auto& t : pop.train) n_rows += t.size();
    Eigen::MatrixXd samples(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(d));
    Eigen::Index row = 0;
    for (const auto& t : pop.train)
        for (std::size_t i = 0; i < t.size(); ++i, ++row)
            for (std::size_t j = 0; j < d; ++j)
                samples(row, static_cast<Eigen::Index>(j)) = t.y[i * d + j];

    const std::size_t r =
        feat::pca_rank_for_variance(samples, pcfg.pca_variance_threshold, pcfg.pca_max_components);
    pop.pca = feat::pca_fit(samples, r);
    pop.has_pca = true;
    for (auto& t : pop.train) detail::project_task(t, pop.pca);
    detail::project_task(pop.validation, pop.pca);
    for (auto& t : pop.test) detail::project_task(t, pop.pca);
    pop.y_dim = r;
}

}  // namespace popdyn::lab
