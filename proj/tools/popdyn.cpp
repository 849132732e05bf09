// popdyn: population-informed few-shot regression laboratory for
// structural dynamics. Subcommands: simulate | train | experiment | report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "popdyn/exp/config.hpp"
#include "popdyn/exp/report.hpp"
#include "popdyn/exp/runner.hpp"
#include "popdyn/io/checkpoint.hpp"
#include "popdyn/io/dataset_io.hpp"
#include "popdyn/train/cnp_train.hpp"
#include "popdyn/train/maml.hpp"
#include "popdyn/util/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace popdyn;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string timestamp_utc() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::string preset;
    std::int64_t seed = -1;
    unsigned workers = 0;
};

lab::RunConfig load_run_config(const CommonArgs& args) {
    json j = json::object();
    if (!args.config_path.empty()) {
        std::ifstream in(args.config_path);
        if (!in) throw ConfigError("cannot open config file: " + args.config_path);
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("config parse error in " + args.config_path + ": " + e.what());
        }
    }
    if (!args.preset.empty()) j["preset"] = args.preset;
    if (args.seed >= 0) {
        j["seed"] = static_cast<std::uint64_t>(args.seed);
        // explicit seed supersedes any stored derived streams
        if (j.contains("population")) {
            j["population"].erase("train_seed");
            j["population"].erase("test_seed");
        }
    }
    return lab::cfgio::experiment_from_json(j);
}

std::string resolve_out_dir(const std::string& flag_value) {
    const char* env = std::getenv("POPDYN_OUT");
    return env && *env ? std::string(env) : flag_value;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

// ---- simulate -----------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
    const auto rc = load_run_config(args);
    const std::string out_dir = resolve_out_dir(args.out_dir);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    const auto problem = lab::problem_from_int(rc.simulate_problem);
    lab::Population pop =
        lab::generate_population(problem, rc.experiment.dynamics, rc.experiment.population);
    json basis;
    if (problem == lab::Problem::full_frf) {
        lab::apply_pca_to_population(pop, rc.experiment.population);
        write_json(dir / "pca_basis.json", io::pca_to_json(pop.pca));
    }

    json structures = json::array();
    auto dump_task = [&](const model::TaskDataset& task, const std::string& role,
                         const dyn::StructureSpec& spec, std::size_t n_ctx) {
        const std::string file = task.task_id + ".csv";
        write_text(dir / file, io::task_csv(task));
        json e = {{"file", file}, {"role", role}, {"base_stiffness", spec.base_stiffness}};
        if (n_ctx > 0) e["n_context"] = n_ctx;
        structures.push_back(std::move(e));
    };
    for (std::size_t i = 0; i < pop.train.size(); ++i)
        dump_task(pop.train[i], "train", pop.train_specs[i], 0);
    dump_task(pop.validation, "validation", pop.validation_spec, 0);
    const std::size_t max_ctx = rc.experiment.population.max_context();
    for (std::size_t i = 0; i < pop.test.size(); ++i)
        dump_task(pop.test[i], "test", pop.test_specs[i], max_ctx);

    json manifest = {{"command", "simulate"},
                     {"version", kVersion},
                     {"timestamp", timestamp_utc()},
                     {"config", lab::cfgio::experiment_to_json(rc)},
                     {"y_dim", pop.y_dim},
                     {"structures", structures},
                     {"output_dir", out_dir}};
    write_json(dir / "manifest.json", manifest);
    std::cout << "simulate: wrote " << structures.size() << " structure files to " << out_dir
              << "\n";
    return kExitOk;
}

// ---- train --------------------------------------------------------------

int cmd_train(const CommonArgs& args, const std::string& method, const std::string& data_dir) {
    const auto rc = load_run_config(args);
    const std::string out_dir = resolve_out_dir(args.out_dir);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    const auto data = io::load_dataset_dir(data_dir);
    const std::size_t y_dim = data.train.front().y_dim;

    // standardisation fitted on the training structures only
    std::vector<double> all_x, all_y;
    for (const auto& t : data.train) {
        all_x.insert(all_x.end(), t.x.begin(), t.x.end());
        all_y.insert(all_y.end(), t.y.begin(), t.y.end());
    }
    feat::AffineScaler xs = feat::AffineScaler::fit_range(all_x, 1, 1.0);
    feat::AffineScaler ys = feat::AffineScaler::fit_range(all_y, y_dim, 0.9);
    std::vector<model::TaskDataset> train = data.train;
    for (auto& t : train) {
        xs.apply(t.x);
        ys.apply(t.y);
    }
    std::optional<model::TaskDataset> validation;
    if (!data.validation.empty()) {
        validation = data.validation.front();
        xs.apply(validation->x);
        ys.apply(validation->y);
    }

    std::string log = "step,train_loss,val_nmse\n";
    io::Checkpoint ckpt;
    ckpt.x_scaler = xs;
    ckpt.y_scaler = ys;
    ckpt.seed = rc.experiment.seed;

    if (method == "maml") {
        model::MlpConfig mlp_cfg{1, rc.train_hidden, y_dim};
        meta::MamlConfig mcfg = rc.experiment.maml;
        mcfg.seed = util::derive_seed(rc.experiment.seed, {0x747261ULL});
        if (validation) {
            meta::HyperSearchConfig search = rc.experiment.search;
            search.hidden_sizes = {rc.train_hidden};
            search.n_inits = 1;
            const auto best = meta::select_hyperparameters(train, *validation, mcfg, search, 1, y_dim);
            for (const auto& h : best.history)
                log += std::to_string(h.epoch) + "," + util::format_double(h.meta_loss) + "," +
                       (std::isfinite(h.val_nmse) ? util::format_double(h.val_nmse) : "nan") + "\n";
            ckpt.theta = best.theta;
        } else {
            auto theta0 = model::mlp_init(mlp_cfg, util::derive_seed(mcfg.seed, {0x696eULL}));
            auto result = meta::meta_train(train, mlp_cfg, mcfg, theta0);
            for (const auto& h : result.history)
                log += std::to_string(h.epoch) + "," + util::format_double(h.meta_loss) + ",nan\n";
            ckpt.theta = result.theta;
        }
        ckpt.kind = "maml-mlp";
        ckpt.model_config = {{"input_dim", 1},
                             {"hidden_dim", rc.train_hidden},
                             {"output_dim", y_dim},
                             {"adapt_alpha", mcfg.alpha},
                             {"adapt_steps", rc.experiment.adapt_steps}};
    } else if (method == "cnp") {
        model::CnpConfig arch;
        arch.x_dim = 1;
        arch.y_dim = y_dim;
        arch.embedding_dim = rc.experiment.cnp_arch.embedding_dim;
        arch.width = rc.experiment.cnp_arch.width;
        meta::CnpTrainConfig ccfg = rc.experiment.cnp;
        ccfg.seed = util::derive_seed(rc.experiment.seed, {0x747263ULL});
        auto theta0 = model::cnp_init(arch, util::derive_seed(ccfg.seed, {0x696eULL}));
        const auto result =
            meta::cnp_train(train, arch, ccfg, theta0, validation ? &*validation : nullptr);
        for (const auto& h : result.history)
            log += std::to_string(h.step) + "," + util::format_double(h.train_loss) + "," +
                   (std::isfinite(h.val_nmse) ? util::format_double(h.val_nmse) : "nan") + "\n";
        ckpt.theta = result.theta;
        ckpt.kind = "cnp";
        ckpt.model_config = {{"x_dim", 1},
                             {"y_dim", y_dim},
                             {"embedding_dim", arch.embedding_dim},
                             {"width", arch.width}};
    } else {
        throw ConfigError("train: method must be maml or cnp");
    }

    io::save_checkpoint(ckpt, (dir / "checkpoint.json").string());
    write_text(dir / "training_log.csv", log);
    json manifest = {{"command", "train"},
                     {"version", kVersion},
                     {"timestamp", timestamp_utc()},
                     {"method", method},
                     {"data_dir", data_dir},
                     {"config", lab::cfgio::experiment_to_json(rc)},
                     {"output_dir", out_dir}};
    write_json(dir / "manifest.json", manifest);
    std::cout << "train: wrote checkpoint.json and training_log.csv to " << out_dir << "\n";
    return kExitOk;
}

// ---- experiment / report --------------------------------------------------

int cmd_experiment(const CommonArgs& args) {
    const auto rc = load_run_config(args);
    const std::string out_dir = resolve_out_dir(args.out_dir);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    const json cfg_json = lab::cfgio::experiment_to_json(rc);
    const std::uint64_t cfg_hash = fnv1a(cfg_json.dump());

    const fs::path manifest_path = dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        json existing;
        std::ifstream in(manifest_path);
        try {
            in >> existing;
        } catch (const json::exception&) {
            throw DataError("experiment: unreadable manifest in " + out_dir);
        }
        if (existing.value("config_hash", std::uint64_t{0}) != cfg_hash)
            throw DataError("experiment: output directory holds a different run; "
                            "use a fresh --out or matching config");
        std::cout << "experiment: resuming run in " << out_dir << "\n";
    } else {
        json manifest = {{"command", "experiment"}, {"version", kVersion},
                         {"timestamp", timestamp_utc()}, {"config", cfg_json},
                         {"config_hash", cfg_hash},      {"output_dir", out_dir}};
        write_json(manifest_path, manifest);
    }

    const unsigned workers = args.workers == 0 ? util::default_workers() : args.workers;
    const auto units = lab::enumerate_units(rc.experiment);
    std::mutex io_mutex;
    std::size_t done = 0;
    const auto report = lab::run_experiment(rc.experiment, workers, out_dir,
                                            [&](const lab::UnitKey& key, bool reused) {
                                                std::lock_guard<std::mutex> lock(io_mutex);
                                                ++done;
                                                std::cout << "[" << done << "/" << units.size()
                                                          << "] " << key.id()
                                                          << (reused ? " (cached)" : "") << "\n";
                                            });
    lab::emit_report(report, out_dir);
    std::cout << "experiment: report written to " << out_dir << "\n";
    return kExitOk;
}

int cmd_report(const std::string& results_dir) {
    lab::regenerate_summary(results_dir);
    std::cout << "report: regenerated summary.csv and charts in " << results_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"population-informed few-shot regression laboratory for structural dynamics"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string method, data_dir, results_dir;

    auto add_common = [&](CLI::App* cmd, bool with_config) {
        if (with_config) cmd->add_option("--config", args.config_path, "JSON configuration file");
        cmd->add_option("--out", args.out_dir, "output directory (env POPDYN_OUT overrides)");
        cmd->add_option("--seed", args.seed, "master seed override");
        cmd->add_option("--workers", args.workers, "worker threads (0 = hardware)");
        cmd->add_option("--preset", args.preset, "configuration preset: desk | paper")
            ->check(CLI::IsMember({"desk", "paper"}));
    };

    auto* sim = app.add_subcommand("simulate", "generate population datasets");
    add_common(sim, true);
    auto* train = app.add_subcommand("train", "train a population-informed model");
    add_common(train, true);
    train->add_option("method", method, "maml | cnp")->required()
        ->check(CLI::IsMember({"maml", "cnp"}));
    train->add_option("--data", data_dir, "dataset directory from `simulate`")->required();
    auto* exp = app.add_subcommand("experiment", "run the benchmark sweep");
    add_common(exp, true);
    auto* rep = app.add_subcommand("report", "regenerate summary/charts from results.csv");
    rep->add_option("--results", results_dir, "directory containing results.csv")->required();

    try {
        app.parse(argc, argv);
        if (sim->parsed()) return cmd_simulate(args);
        if (train->parsed()) return cmd_train(args, method, data_dir);
        if (exp->parsed()) return cmd_experiment(args);
        if (rep->parsed()) return cmd_report(results_dir);
        return kExitConfigError;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const NumericsError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumericsError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
