#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "popdyn/exp/config.hpp"
#include "popdyn/exp/runner.hpp"
#include "popdyn/util/csv.hpp"
#include "popdyn/util/parallel.hpp"
#include "popdyn/util/svg.hpp"

namespace popdyn::lab {

struct ExperimentReport {
    std::vector<UnitResult> units;  // canonical unit order
};

namespace detail {

using nlohmann::json;

inline json unit_to_json(const UnitResult& u) {
    json j;
    j["problem"] = u.key.problem;
    j["repetition"] = u.key.repetition;
    j["method"] = u.key.method;
    j["n_train"] = u.key.n_train;
    j["contexts"] = json::array();
    for (const auto& c : u.contexts) {
        json jc;
        jc["n_context"] = c.n_context;
        jc["nmse"] = c.failed ? json() : json(c.nmse);
        jc["per_structure"] = c.per_structure;
        jc["failed"] = c.failed;
        jc["error"] = c.error;
        j["contexts"].push_back(std::move(jc));
    }
    j["convergence"] = json::array();
    for (const auto& p : u.convergence)
        j["convergence"].push_back({p.step, p.train_loss,
                                    std::isfinite(p.val_nmse) ? json(p.val_nmse) : json()});
    j["fit_rows"] = json::array();
    for (const auto& f : u.fit_rows)
        j["fit_rows"].push_back({f.n_context, f.structure, f.temperature, f.truth, f.prediction});
    return j;
}

inline UnitResult unit_from_json(const json& j) {
    UnitResult u;
    u.key.problem = j.at("problem").get<int>();
    u.key.repetition = j.at("repetition").get<std::size_t>();
    u.key.method = j.at("method").get<std::string>();
    u.key.n_train = j.at("n_train").get<std::size_t>();
    for (const auto& jc : j.at("contexts")) {
        ContextCell c;
        c.n_context = jc.at("n_context").get<std::size_t>();
        c.failed = jc.at("failed").get<bool>();
        c.error = jc.at("error").get<std::string>();
        if (!jc.at("nmse").is_null()) c.nmse = jc.at("nmse").get<double>();
        c.per_structure = jc.at("per_structure").get<std::vector<double>>();
        u.contexts.push_back(std::move(c));
    }
    for (const auto& jp : j.at("convergence")) {
        ConvergencePoint p;
        p.step = jp.at(0).get<std::size_t>();
        p.train_loss = jp.at(1).get<double>();
        p.val_nmse = jp.at(2).is_null() ? std::numeric_limits<double>::quiet_NaN()
                                        : jp.at(2).get<double>();
        u.convergence.push_back(p);
    }
    for (const auto& jf : j.at("fit_rows")) {
        FitPoint f;
        f.n_context = jf.at(0).get<std::size_t>();
        f.structure = jf.at(1).get<std::string>();
        f.temperature = jf.at(2).get<double>();
        f.truth = jf.at(3).get<double>();
        f.prediction = jf.at(4).get<double>();
        u.fit_rows.push_back(f);
    }
    return u;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write file: " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Runs every unit of the sweep on `workers` threads. When out_dir is
// given, each finished unit is persisted under out_dir/parts/ and valid
// existing parts are reused, which makes interrupted sweeps resumable;
// unit seeding guarantees the reused and recomputed results agree.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, unsigned workers = 1,
                                       const std::string& out_dir = {},
                                       const std::function<void(const UnitKey&, bool)>& on_unit = {}) {
    cfg.check();
    const auto units = enumerate_units(cfg);
    ExperimentReport report;
    report.units.resize(units.size());

    std::filesystem::path parts_dir;
    if (!out_dir.empty()) {
        parts_dir = std::filesystem::path(out_dir) / "parts";
        std::filesystem::create_directories(parts_dir);
    }

    util::parallel_for(units.size(), workers, [&](std::size_t i) {
        const UnitKey& key = units[i];
        bool reused = false;
        if (!out_dir.empty()) {
            const auto part_path = parts_dir / (key.id() + ".json");
            if (std::filesystem::exists(part_path)) {
                try {
                    std::ifstream in(part_path);
                    nlohmann::json j;
                    in >> j;
                    report.units[i] = detail::unit_from_json(j);
                    reused = true;
                } catch (const std::exception&) {
                    reused = false;  // unreadable part: recompute
                }
            }
        }
        if (!reused) {
            report.units[i] = run_unit(cfg, key);
            if (!out_dir.empty()) {
                const auto part_path = parts_dir / (key.id() + ".json");
                detail::write_file_atomic(part_path, detail::unit_to_json(report.units[i]).dump(1));
            }
        }
        if (on_unit) on_unit(key, reused);
    });
    return report;
}

// ---- CSV emission -------------------------------------------------------

inline std::string results_csv(const ExperimentReport& report) {
    std::string out = "problem,method,n_train,n_context,repetition,nmse\n";
    for (const auto& u : report.units)
        for (const auto& c : u.contexts) {
            out += std::to_string(u.key.problem) + "," + u.key.method + "," +
                   std::to_string(u.key.n_train) + "," + std::to_string(c.n_context) + "," +
                   std::to_string(u.key.repetition) + "," +
                   (c.failed ? "nan" : util::format_double(c.nmse)) + "\n";
        }
    return out;
}

inline std::string structure_nmse_csv(const ExperimentReport& report) {
    std::string out = "problem,method,n_train,n_context,repetition,structure,nmse\n";
    for (const auto& u : report.units)
        for (const auto& c : u.contexts)
            for (std::size_t s = 0; s < c.per_structure.size(); ++s)
                out += std::to_string(u.key.problem) + "," + u.key.method + "," +
                       std::to_string(u.key.n_train) + "," + std::to_string(c.n_context) + "," +
                       std::to_string(u.key.repetition) + ",test_" + std::to_string(s) + "," +
                       util::format_double(c.per_structure[s]) + "\n";
    return out;
}

inline std::string convergence_csv(const ExperimentReport& report) {
    std::string out = "problem,method,n_train,repetition,step,train_loss,val_nmse\n";
    for (const auto& u : report.units)
        for (const auto& p : u.convergence)
            out += std::to_string(u.key.problem) + "," + u.key.method + "," +
                   std::to_string(u.key.n_train) + "," + std::to_string(u.key.repetition) + "," +
                   std::to_string(p.step) + "," + util::format_double(p.train_loss) + "," +
                   (std::isfinite(p.val_nmse) ? util::format_double(p.val_nmse) : "nan") + "\n";
    return out;
}

inline std::string fit_examples_csv(const ExperimentReport& report) {
    std::string out = "problem,method,n_train,n_context,structure,temperature,truth,prediction\n";
    for (const auto& u : report.units)
        for (const auto& f : u.fit_rows)
            out += std::to_string(u.key.problem) + "," + u.key.method + "," +
                   std::to_string(u.key.n_train) + "," + std::to_string(f.n_context) + "," +
                   f.structure + "," + util::format_double(f.temperature) + "," +
                   util::format_double(f.truth) + "," + util::format_double(f.prediction) + "\n";
    return out;
}

// A parsed results.csv row set; summaries and charts are derived from this
// text-level representation so that regeneration from the file is
// idempotent.
struct ResultRow {
    int problem;
    std::string method;
    std::size_t n_train;
    std::size_t n_context;
    std::size_t repetition;
    double nmse;  // NaN = failed cell
};

inline std::vector<ResultRow> parse_results_csv(const std::string& text) {
    std::vector<ResultRow> rows;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = util::split_csv_line(line);
        if (f.size() != 6) throw DataError("results.csv: malformed row '" + line + "'");
        ResultRow r;
        r.problem = std::stoi(f[0]);
        r.method = f[1];
        r.n_train = static_cast<std::size_t>(std::stoul(f[2]));
        r.n_context = static_cast<std::size_t>(std::stoul(f[3]));
        r.repetition = static_cast<std::size_t>(std::stoul(f[4]));
        r.nmse = f[5] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                               : util::parse_double(f[5], "results.csv");
        rows.push_back(std::move(r));
    }
    return rows;
}

struct SummaryRow {
    int problem;
    std::string method;
    std::size_t n_train;
    std::size_t n_context;
    double mean_nmse;
    double std_nmse;  // population convention over repetitions
    std::size_t n_ok;
    std::size_t n_failed;
};

inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
    std::map<std::tuple<int, std::string, std::size_t, std::size_t>, std::vector<double>> groups;
    std::map<std::tuple<int, std::string, std::size_t, std::size_t>, std::size_t> failures;
    std::vector<std::tuple<int, std::string, std::size_t, std::size_t>> order;
    for (const auto& r : rows) {
        const auto key = std::make_tuple(r.problem, r.method, r.n_train, r.n_context);
        if (groups.find(key) == groups.end() && failures.find(key) == failures.end())
            order.push_back(key);
        if (std::isfinite(r.nmse))
            groups[key].push_back(r.nmse);
        else
            ++failures[key];
    }
    std::vector<SummaryRow> out;
    for (const auto& key : order) {
        SummaryRow s;
        std::tie(s.problem, s.method, s.n_train, s.n_context) = key;
        const auto& vals = groups[key];
        s.n_ok = vals.size();
        s.n_failed = failures.count(key) ? failures[key] : 0;
        if (vals.empty()) {
            s.mean_nmse = std::numeric_limits<double>::quiet_NaN();
            s.std_nmse = std::numeric_limits<double>::quiet_NaN();
        } else {
            double mean = 0.0;
            for (double v : vals) mean += v;
            mean /= static_cast<double>(vals.size());
            double var = 0.0;
            for (double v : vals) var += (v - mean) * (v - mean);
            var /= static_cast<double>(vals.size());
            s.mean_nmse = mean;
            s.std_nmse = std::sqrt(var);
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
    std::string out = "problem,method,n_train,n_context,mean_nmse,std_nmse,n_ok,n_failed\n";
    for (const auto& s : rows)
        out += std::to_string(s.problem) + "," + s.method + "," + std::to_string(s.n_train) + "," +
               std::to_string(s.n_context) + "," +
               (std::isfinite(s.mean_nmse) ? util::format_double(s.mean_nmse) : "nan") + "," +
               (std::isfinite(s.std_nmse) ? util::format_double(s.std_nmse) : "nan") + "," +
               std::to_string(s.n_ok) + "," + std::to_string(s.n_failed) + "\n";
    return out;
}

inline std::string problem_svg(const std::vector<SummaryRow>& summary, int problem) {
    std::vector<util::SvgSeries> series;
    std::map<std::pair<std::string, std::size_t>, std::size_t> index;
    for (const auto& s : summary) {
        if (s.problem != problem) continue;
        const auto key = std::make_pair(s.method, s.n_train);
        if (!index.count(key)) {
            index[key] = series.size();
            util::SvgSeries sv;
            sv.label = s.method + (s.method == "GP" ? "" : " (" + std::to_string(s.n_train) + " structures)");
            series.push_back(std::move(sv));
        }
        auto& sv = series[index[key]];
        sv.x.push_back(static_cast<double>(s.n_context));
        sv.mean.push_back(s.mean_nmse);
        sv.stddev.push_back(std::isfinite(s.std_nmse) ? s.std_nmse : 0.0);
    }
    return util::svg_errorbar_chart("Problem " + std::to_string(problem) +
                                        ": NMSE vs available samples",
                                    "context samples per testing structure", "NMSE [%]", series);
}

// Writes every report artifact. summary.csv and the charts are computed
// from the written results.csv text, so `popdyn report` on the output
// directory reproduces them byte for byte.
inline void emit_report(const ExperimentReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    const std::string results = results_csv(report);
    detail::write_file_atomic(dir / "results.csv", results);
    detail::write_file_atomic(dir / "structure_nmse.csv", structure_nmse_csv(report));
    detail::write_file_atomic(dir / "convergence.csv", convergence_csv(report));
    detail::write_file_atomic(dir / "fit_examples.csv", fit_examples_csv(report));

    const auto rows = parse_results_csv(results);
    const auto summary = summarize(rows);
    detail::write_file_atomic(dir / "summary.csv", summary_csv(summary));

    std::vector<int> problems;
    for (const auto& r : rows)
        if (std::find(problems.begin(), problems.end(), r.problem) == problems.end())
            problems.push_back(r.problem);
    for (int p : problems)
        detail::write_file_atomic(dir / ("problem" + std::to_string(p) + "_errorbars.svg"),
                                  problem_svg(summary, p));
}

// Regenerates summary.csv and the charts from an existing results.csv.
inline void regenerate_summary(const std::string& results_dir) {
    namespace fs = std::filesystem;
    const fs::path dir(results_dir);
    std::ifstream in(dir / "results.csv", std::ios::binary);
    if (!in) throw DataError("report: missing results.csv in " + results_dir);
    std::stringstream buf;
    buf << in.rdbuf();
    const auto rows = parse_results_csv(buf.str());
    const auto summary = summarize(rows);
    detail::write_file_atomic(dir / "summary.csv", summary_csv(summary));
    std::vector<int> problems;
    for (const auto& r : rows)
        if (std::find(problems.begin(), problems.end(), r.problem) == problems.end())
            problems.push_back(r.problem);
    for (int p : problems)
        detail::write_file_atomic(dir / ("problem" + std::to_string(p) + "_errorbars.svg"),
                                  problem_svg(summary, p));
}

}  // namespace popdyn::lab
