#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "popdyn/exp/runner.hpp"
#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::lab {

// Single configuration schema shared by every CLI command; each command
// reads the sections it needs. `preset` (desk | paper) fills defaults
// first, then explicit fields override.
struct RunConfig {
    ExperimentConfig experiment;
    int simulate_problem = 1;    // cmd_simulate target quantity
    std::size_t train_hidden = 40;  // cmd_train: single MLP hidden size
    std::string preset = "desk";
};

namespace cfgio {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const std::string& section, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + section + "." + key + "': " + e.what());
    }
}

inline void apply_preset(RunConfig& rc, const std::string& preset) {
    ExperimentConfig& e = rc.experiment;
    if (preset == "desk") {
        e.n_repetitions = 5;
        e.adapt_steps = 600;
        e.population.n_test = 50;
        e.search.hidden_sizes = {10, 40, 70, 100};
        e.search.n_inits = 2;
        e.maml.epochs = 2500;
        e.cnp.steps = 4000;
        e.n_train_list = {9};
        e.n_train_by_problem = {{1, {2, 3, 4, 5, 6, 7, 8, 9}}};
    } else if (preset == "paper") {
        e.n_repetitions = 50;
        e.adapt_steps = 600;
        e.population.n_test = 200;
        e.search.hidden_sizes = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
        e.search.n_inits = 5;
        e.maml.epochs = 2000;
        e.cnp.steps = 20000;
        e.n_train_list = {2, 3, 4, 5, 6, 7, 8, 9};
        e.n_train_by_problem.clear();
    } else {
        throw ConfigError("config field 'preset': unknown preset '" + preset +
                          "' (expected desk or paper)");
    }
    rc.preset = preset;
}

inline json experiment_to_json(const RunConfig& rc) {
    const ExperimentConfig& e = rc.experiment;
    json j;
    j["preset"] = rc.preset;
    j["seed"] = e.seed;
    j["problem"] = rc.simulate_problem;
    j["hidden"] = rc.train_hidden;
    j["problems"] = e.problems;
    j["methods"] = e.methods;
    j["n_train"] = e.n_train_list;
    json ntbp = json::object();
    for (const auto& [p, list] : e.n_train_by_problem) ntbp[std::to_string(p)] = list;
    j["n_train_by_problem"] = ntbp;
    j["n_repetitions"] = e.n_repetitions;
    j["adapt_steps"] = e.adapt_steps;
    j["target_span"] = e.target_span;
    j["dynamics"] = {{"n_dof", e.dynamics.n_dof},
                     {"mass", e.dynamics.mass},
                     {"damper", e.dynamics.damper},
                     {"temp_mode", e.dynamics.temp_mode == dyn::TempLawMode::scaled ? "scaled" : "absolute"},
                     {"law", {e.dynamics.law_a2, e.dynamics.law_a1, e.dynamics.law_a0}},
                     {"f_start", e.dynamics.f_start},
                     {"f_stop", e.dynamics.f_stop},
                     {"f_step", e.dynamics.f_step},
                     {"line_low_hz", e.dynamics.line_low_hz},
                     {"line_high_hz", e.dynamics.line_high_hz}};
    j["population"] = {{"k_min", e.population.k_min},
                       {"k_max", e.population.k_max},
                       {"t_min", e.population.t_min},
                       {"t_max", e.population.t_max},
                       {"n_train", e.population.n_train},
                       {"n_test", e.population.n_test},
                       {"train_samples", e.population.train_samples},
                       {"n_queries", e.population.n_queries},
                       {"context_sizes", e.population.context_sizes},
                       {"context_grid", e.population.context_grid},
                       {"pca_max_components", e.population.pca_max_components},
                       {"pca_variance_threshold", e.population.pca_variance_threshold},
                       {"train_seed", e.population.train_seed},
                       {"test_seed", e.population.test_seed}};
    j["maml"] = {{"alpha", e.maml.alpha},
                 {"beta", e.maml.beta},
                 {"k_inner", e.maml.k_inner},
                 {"epochs", e.maml.epochs},
                 {"batch", e.maml.batch},
                 {"n_inner_samples", e.maml.n_inner_samples},
                 {"n_meta_samples", e.maml.n_meta_samples},
                 {"second_order", e.maml.second_order}};
    j["search"] = {{"hidden_sizes", e.search.hidden_sizes},
                   {"n_inits", e.search.n_inits},
                   {"val_context_sizes", e.search.val_context_sizes},
                   {"probe_adapt_steps", e.search.probe_adapt_steps},
                   {"min_select_fraction", e.search.min_select_fraction}};
    j["cnp"] = {{"embedding_dim", e.cnp_arch.embedding_dim},
                {"width", e.cnp_arch.width},
                {"steps", e.cnp.steps},
                {"tasks_per_batch", e.cnp.tasks_per_batch},
                {"max_context", e.cnp.max_context},
                {"queries_per_task", e.cnp.queries_per_task},
                {"learning_rate", e.cnp.learning_rate},
                {"probe_every", e.cnp.probe_every},
                {"val_context_size", e.cnp.val_context_size}};
    j["gp"] = {{"restarts", e.gp.restarts},
               {"iterations", e.gp.iterations},
               {"learning_rate", e.gp.learning_rate},
               {"jitter", e.gp.jitter},
               {"jitter_max", e.gp.jitter_max},
               {"noise_floor_rel", e.gp.noise_floor_rel}};
    return j;
}

inline RunConfig experiment_from_json(const json& j) {
    RunConfig rc;
    std::string preset = "desk";
    read_field(j, "", "preset", preset);
    apply_preset(rc, preset);
    ExperimentConfig& e = rc.experiment;

    read_field(j, "", "seed", e.seed);
    read_field(j, "", "problem", rc.simulate_problem);
    read_field(j, "", "hidden", rc.train_hidden);
    read_field(j, "", "problems", e.problems);
    read_field(j, "", "methods", e.methods);
    read_field(j, "", "n_train", e.n_train_list);
    if (j.contains("n_train_by_problem")) {
        e.n_train_by_problem.clear();
        for (const auto& [key, val] : j.at("n_train_by_problem").items()) {
            try {
                e.n_train_by_problem[std::stoi(key)] = val.get<std::vector<std::size_t>>();
            } catch (const std::exception& ex) {
                throw ConfigError(std::string("config field 'n_train_by_problem': ") + ex.what());
            }
        }
    }
    read_field(j, "", "n_repetitions", e.n_repetitions);
    read_field(j, "", "adapt_steps", e.adapt_steps);
    read_field(j, "", "target_span", e.target_span);

    if (j.contains("dynamics")) {
        const auto& d = j.at("dynamics");
        read_field(d, "dynamics", "n_dof", e.dynamics.n_dof);
        read_field(d, "dynamics", "mass", e.dynamics.mass);
        read_field(d, "dynamics", "damper", e.dynamics.damper);
        std::string mode = e.dynamics.temp_mode == dyn::TempLawMode::scaled ? "scaled" : "absolute";
        read_field(d, "dynamics", "temp_mode", mode);
        if (mode == "scaled")
            e.dynamics.temp_mode = dyn::TempLawMode::scaled;
        else if (mode == "absolute")
            e.dynamics.temp_mode = dyn::TempLawMode::absolute;
        else
            throw ConfigError("config field 'dynamics.temp_mode': expected scaled or absolute");
        std::vector<double> law = {e.dynamics.law_a2, e.dynamics.law_a1, e.dynamics.law_a0};
        read_field(d, "dynamics", "law", law);
        if (law.size() != 3) throw ConfigError("config field 'dynamics.law': expected 3 coefficients");
        e.dynamics.law_a2 = law[0];
        e.dynamics.law_a1 = law[1];
        e.dynamics.law_a0 = law[2];
        read_field(d, "dynamics", "f_start", e.dynamics.f_start);
        read_field(d, "dynamics", "f_stop", e.dynamics.f_stop);
        read_field(d, "dynamics", "f_step", e.dynamics.f_step);
        read_field(d, "dynamics", "line_low_hz", e.dynamics.line_low_hz);
        read_field(d, "dynamics", "line_high_hz", e.dynamics.line_high_hz);
    }
    bool train_seed_given = false, test_seed_given = false;
    if (j.contains("population")) {
        const auto& p = j.at("population");
        read_field(p, "population", "k_min", e.population.k_min);
        read_field(p, "population", "k_max", e.population.k_max);
        read_field(p, "population", "t_min", e.population.t_min);
        read_field(p, "population", "t_max", e.population.t_max);
        read_field(p, "population", "n_train", e.population.n_train);
        read_field(p, "population", "n_test", e.population.n_test);
        read_field(p, "population", "train_samples", e.population.train_samples);
        read_field(p, "population", "n_queries", e.population.n_queries);
        read_field(p, "population", "context_sizes", e.population.context_sizes);
        read_field(p, "population", "context_grid", e.population.context_grid);
        read_field(p, "population", "pca_max_components", e.population.pca_max_components);
        read_field(p, "population", "pca_variance_threshold", e.population.pca_variance_threshold);
        train_seed_given = p.contains("train_seed");
        test_seed_given = p.contains("test_seed");
        read_field(p, "population", "train_seed", e.population.train_seed);
        read_field(p, "population", "test_seed", e.population.test_seed);
    }
    if (!train_seed_given) e.population.train_seed = util::derive_seed(e.seed, {1});
    if (!test_seed_given) e.population.test_seed = util::derive_seed(e.seed, {2});

    if (j.contains("maml")) {
        const auto& m = j.at("maml");
        read_field(m, "maml", "alpha", e.maml.alpha);
        read_field(m, "maml", "beta", e.maml.beta);
        read_field(m, "maml", "k_inner", e.maml.k_inner);
        read_field(m, "maml", "epochs", e.maml.epochs);
        read_field(m, "maml", "batch", e.maml.batch);
        read_field(m, "maml", "n_inner_samples", e.maml.n_inner_samples);
        read_field(m, "maml", "n_meta_samples", e.maml.n_meta_samples);
        read_field(m, "maml", "second_order", e.maml.second_order);
    }
    if (j.contains("search")) {
        const auto& s = j.at("search");
        read_field(s, "search", "hidden_sizes", e.search.hidden_sizes);
        read_field(s, "search", "n_inits", e.search.n_inits);
        read_field(s, "search", "val_context_sizes", e.search.val_context_sizes);
        read_field(s, "search", "probe_adapt_steps", e.search.probe_adapt_steps);
        read_field(s, "search", "min_select_fraction", e.search.min_select_fraction);
    }
    if (j.contains("cnp")) {
        const auto& c = j.at("cnp");
        read_field(c, "cnp", "embedding_dim", e.cnp_arch.embedding_dim);
        read_field(c, "cnp", "width", e.cnp_arch.width);
        read_field(c, "cnp", "steps", e.cnp.steps);
        read_field(c, "cnp", "tasks_per_batch", e.cnp.tasks_per_batch);
        read_field(c, "cnp", "max_context", e.cnp.max_context);
        read_field(c, "cnp", "queries_per_task", e.cnp.queries_per_task);
        read_field(c, "cnp", "learning_rate", e.cnp.learning_rate);
        read_field(c, "cnp", "probe_every", e.cnp.probe_every);
        read_field(c, "cnp", "val_context_size", e.cnp.val_context_size);
    }
    if (j.contains("gp")) {
        const auto& g = j.at("gp");
        read_field(g, "gp", "restarts", e.gp.restarts);
        read_field(g, "gp", "iterations", e.gp.iterations);
        read_field(g, "gp", "learning_rate", e.gp.learning_rate);
        read_field(g, "gp", "jitter", e.gp.jitter);
        read_field(g, "gp", "jitter_max", e.gp.jitter_max);
        read_field(g, "gp", "noise_floor_rel", e.gp.noise_floor_rel);
    }

    e.check();
    if (rc.simulate_problem < 1 || rc.simulate_problem > 3)
        throw ConfigError("config field 'problem': must be 1, 2 or 3");
    return rc;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return experiment_from_json(j);
}

}  // namespace cfgio

}  // namespace popdyn::lab
