// Acceptance suite: exercises every acceptance criterion end to end and
// prints one PASS/FAIL line per criterion. Exit code is the number of
// failed criteria. The benchmark sweep (criteria 5-7) uses the desk preset
// and caches its unit results under --out so interrupted runs resume.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "popdyn/ad/grad.hpp"
#include "popdyn/dynamics/frf.hpp"
#include "popdyn/dynamics/rk4.hpp"
#include "popdyn/dynamics/structure.hpp"
#include "popdyn/dynamics/welch.hpp"
#include "popdyn/exp/config.hpp"
#include "popdyn/exp/nmse.hpp"
#include "popdyn/exp/report.hpp"
#include "popdyn/features/pca.hpp"
#include "popdyn/models/cnp.hpp"
#include "popdyn/models/gp.hpp"
#include "popdyn/models/mlp.hpp"
#include "popdyn/util/parallel.hpp"
#include "popdyn/util/rng.hpp"
#include "../oracles/dense_gp.hpp"
#include "../oracles/dense_linalg.hpp"
#include "../oracles/fd.hpp"
#include "../oracles/modal.hpp"

namespace fs = std::filesystem;
using namespace popdyn;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << name;
    if (!detail.empty()) std::cout << " -- " << detail;
    std::cout << std::endl;
    if (!ok) ++g_failures;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(4);
    ss << v;
    return ss.str();
}

// ---- criterion 1 ----------------------------------------------------------

void criterion_1() {
    util::Rng rng(1001);
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(200);
        std::vector<double> y(n);
        for (auto& v : y) v = rng.normal(rng.uniform(-5.0, 5.0), rng.uniform(0.1, 3.0));
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(n);
        const std::vector<double> pred(n, mean);
        double value;
        try {
            value = lab::nmse(pred, y);
        } catch (const std::exception&) {
            ok = false;
            break;
        }
        worst = std::max(worst, std::fabs(value - 100.0));
    }
    ok = ok && worst < 1e-9;
    report(1, "constant-mean predictor scores exactly 100%", ok,
           "max |NMSE - 100| = " + fmt(worst));
}

// ---- criterion 2 ----------------------------------------------------------

struct TrialMlp {
    model::MlpConfig cfg;
    ad::ParamVector theta;
    model::MlpMseLoss loss;
};

TrialMlp random_trial(util::Rng& rng, std::uint64_t seed) {
    model::MlpConfig cfg{1 + rng.uniform_index(2), 3 + rng.uniform_index(6), 1};
    std::vector<double> x, y;
    const std::size_t n = 4 + rng.uniform_index(6);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < cfg.input_dim; ++d) x.push_back(rng.uniform(-1.5, 1.5));
        y.push_back(rng.uniform(-0.8, 0.8));
    }
    return {cfg, model::mlp_init(cfg, seed), model::MlpMseLoss(cfg, x, y)};
}

void criterion_2() {
    util::Rng rng(2002);
    double worst_first = 0.0, worst_meta = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        auto t = random_trial(rng, 5000 + static_cast<std::uint64_t>(trial));
        const auto g = ad::grad(t.loss, t.theta);
        auto f = [&](const std::vector<double>& v) {
            return ad::eval_loss(t.loss, ad::ParamVector(t.theta.layout(), v));
        };
        const auto fd = oracles::fd_gradient(f, t.theta.values(), 1e-5);
        double scale = 1e-8;
        for (double v : fd) scale = std::max(scale, std::fabs(v));
        for (std::size_t i = 0; i < g.size(); ++i)
            worst_first = std::max(worst_first, std::fabs(g[i] - fd[i]) / scale);
    }
    for (int trial = 0; trial < 100; ++trial) {
        auto inner = random_trial(rng, 7000 + static_cast<std::uint64_t>(trial));
        model::MlpConfig cfg = inner.cfg;
        std::vector<double> x, y;
        const std::size_t n = 4 + rng.uniform_index(6);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t d = 0; d < cfg.input_dim; ++d) x.push_back(rng.uniform(-1.5, 1.5));
            y.push_back(rng.uniform(-0.8, 0.8));
        }
        model::MlpMseLoss outer(cfg, x, y);
        const double alpha = 0.05;
        const auto mg = ad::grad_through_update(outer, inner.loss, inner.theta, alpha, 1, false);
        auto composed = [&](const std::vector<double>& v) {
            ad::ParamVector th(inner.theta.layout(), v);
            const auto gi = ad::grad(inner.loss, th);
            th.axpy(-alpha, gi);
            return ad::eval_loss(outer, th);
        };
        const auto fd = oracles::fd_gradient(composed, inner.theta.values(), 1e-5);
        double scale = 1e-8;
        for (double v : fd) scale = std::max(scale, std::fabs(v));
        for (std::size_t i = 0; i < mg.size(); ++i)
            worst_meta = std::max(worst_meta, std::fabs(mg[i] - fd[i]) / scale);
    }
    const bool ok = worst_first < 1e-6 && worst_meta < 1e-4;
    report(2, "autodiff matches finite differences", ok,
           "first-order " + fmt(worst_first) + " (<1e-6), through-update " + fmt(worst_meta) +
               " (<1e-4)");
}

// ---- criterion 3 ----------------------------------------------------------

void criterion_3() {
    util::Rng rng(3003);
    double worst_post = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.uniform_index(7);
        std::vector<double> x, y;
        for (std::size_t i = 0; i < n; ++i) {
            x.push_back(rng.uniform(-4.0, 4.0));
            y.push_back(std::sin(x.back()) + 0.02 * rng.normal());
        }
        model::GpHyper h{0.5 + rng.uniform(), 0.5 + 2.0 * rng.uniform(),
                         0.005 + 0.02 * rng.uniform()};
        model::GpConfig cfg;
        cfg.iterations = 0;
        const auto m = model::gp_fit(x, y, cfg, &h);
        std::vector<double> queries;
        for (int q = 0; q < 6; ++q) queries.push_back(rng.uniform(-4.0, 4.0));
        const auto p = model::gp_predict(m, queries);
        const auto oracle = oracles::dense_gp_solve(x, y, queries, m.hyper.sf2, m.hyper.ell,
                                                    m.hyper.sn2 + m.jitter_used);
        for (std::size_t i = 0; i < queries.size(); ++i) {
            worst_post = std::max(worst_post, std::fabs(p.mean[i] - oracle.mean[i]));
            worst_post = std::max(worst_post, std::fabs(p.variance[i] - oracle.variance[i]));
        }
    }

    model::GpConfig floor_cfg;
    floor_cfg.optimize_noise = false;
    floor_cfg.noise_floor_rel = 1e-9;
    model::GpHyper init{4.0, 2.0, 1e-12};
    const auto m1 = model::gp_fit({3.0}, {1.7}, floor_cfg, &init);
    const double interp_err = std::fabs(model::gp_predict(m1, {3.0}).mean[0] - 1.7);

    std::vector<double> gx, gy;
    for (int i = 0; i < 6; ++i) {
        gx.push_back(rng.uniform(0.0, 8.0));
        gy.push_back(std::cos(gx.back()));
    }
    const model::GpHyper h{1.2, 1.7, 0.03};
    const auto analytic = model::gp_detail::log_marginal_gradient(gx, gy, h, 1e-12, 1e-6);
    auto lml = [&](const std::vector<double>& logs) {
        model::GpHyper hh{std::exp(logs[0]), std::exp(logs[1]), std::exp(logs[2])};
        return model::gp_detail::log_marginal_gradient(gx, gy, hh, 1e-12, 1e-6).value;
    };
    const auto fd =
        oracles::fd_gradient(lml, {std::log(h.sf2), std::log(h.ell), std::log(h.sn2)}, 1e-6);
    double worst_lml = 0.0;
    const double grads[3] = {analytic.d_log_sf2, analytic.d_log_ell, analytic.d_log_sn2};
    for (int i = 0; i < 3; ++i)
        worst_lml = std::max(worst_lml,
                             std::fabs(grads[i] - fd[i]) / std::max(std::fabs(fd[i]), 1e-8));

    const bool ok = worst_post < 1e-8 && interp_err < 1e-6 && worst_lml < 1e-6;
    report(3, "gp posterior, interpolation and likelihood gradient", ok,
           "posterior vs oracle " + fmt(worst_post) + " (<1e-8), interpolation " +
               fmt(interp_err) + " (<1e-6), lml gradient " + fmt(worst_lml) + " (<1e-6)");
}

// ---- criterion 4 ----------------------------------------------------------

void criterion_4() {
    // natural frequencies of the default 5-DOF member vs the oracle
    auto spec = dyn::StructureSpec::chain(5, 1.0, 2.0, 10000.0);
    const auto mats = dyn::assemble_matrices(spec, 25.0);
    oracles::RMat k(5, oracles::RVec(5)), m(5, oracles::RVec(5));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            k[i][j] = mats.K(i, j);
            m[i][j] = mats.M(i, j);
        }
    const auto freqs = dyn::natural_frequencies_hz(mats);
    const auto oracle = oracles::modal_frequencies(k, m);
    double worst_freq = 0.0;
    for (std::size_t i = 0; i < freqs.size(); ++i)
        worst_freq = std::max(worst_freq, std::fabs(freqs[i] - oracle[i]) / oracle[i]);

    // RK4 order check on the analytic oscillator
    auto one = dyn::StructureSpec::chain(1, 1.0, 0.0, 10000.0);
    one.temp_affected_springs.clear();
    const auto m1 = dyn::assemble_matrices(one, 30.0);
    const double w = std::sqrt(10000.0);
    const double period = 2.0 * std::numbers::pi / w;
    Eigen::VectorXd z0(2);
    z0 << 1.0, 0.0;
    auto final_error = [&](double dt) {
        const std::size_t steps = static_cast<std::size_t>(std::llround(5.0 * period / dt));
        std::vector<double> force(steps + 1, 0.0);
        const auto hist = dyn::simulate_time_domain(m1, force, 0, dt, &z0);
        return std::fabs(hist.displacement(hist.displacement.rows() - 1, 0) -
                         std::cos(w * dt * static_cast<double>(steps)));
    };
    const double ratio = final_error(period / 100.0) / final_error(period / 200.0);

    // H1 vs direct at 128 averages, away from resonance
    auto damped = dyn::StructureSpec::chain(1, 1.0, 2.0, 10000.0);
    damped.temp_affected_springs.clear();
    const auto md = dyn::assemble_matrices(damped, 30.0);
    const double f_res = w / (2.0 * std::numbers::pi);
    const double dt = 1e-3;
    const std::size_t seg = 4096;
    const std::size_t n = seg + 127 * seg / 2;
    util::Rng rng(4242);
    std::vector<double> force(n + 1);
    for (auto& v : force) v = rng.normal();
    const auto hist = dyn::simulate_time_domain(md, force, 0, dt);
    std::vector<double> response(n + 1);
    for (std::size_t i = 0; i <= n; ++i)
        response[i] = hist.displacement(static_cast<Eigen::Index>(i), 0);
    const auto h1 = dyn::estimate_frf_h1(force, response, dt, {seg, 0.5});
    std::vector<double> line_freqs;
    for (double f : h1.freqs_hz)
        if (f >= 1.0 && f <= 40.0 && std::fabs(f - f_res) > 0.25 * f_res) line_freqs.push_back(f);
    const auto direct = dyn::frf_direct(md, 0, 0, line_freqs);
    double worst_h1 = 0.0;
    std::size_t li = 0;
    for (std::size_t i = 0; i < h1.freqs_hz.size() && li < line_freqs.size(); ++i) {
        if (h1.freqs_hz[i] != line_freqs[li]) continue;
        worst_h1 = std::max(worst_h1, std::fabs(h1.magnitude[i] - direct.magnitude[li]) /
                                          direct.magnitude[li]);
        ++li;
    }

    const bool ok = worst_freq < 1e-8 && ratio >= 12.0 && worst_h1 < 0.05;
    report(4, "physics: modal frequencies, rk4 order, h1 estimator", ok,
           "freq err " + fmt(worst_freq) + " (<1e-8), rk4 ratio " + fmt(ratio) +
               " (>=12), h1 dev " + fmt(worst_h1) + " (<0.05)");
}

// ---- criterion 8 ----------------------------------------------------------

void criterion_8() {
    model::CnpConfig cfg;
    cfg.x_dim = 1;
    cfg.y_dim = 1;
    cfg.embedding_dim = 16;
    cfg.width = 32;
    const auto theta = model::cnp_init(cfg, 8008);
    const std::vector<double> queries = {-0.7, 0.0, 0.4, 1.2};
    std::vector<double> cx = {0.3, -0.5, 0.9, 0.1, -0.2};
    std::vector<double> cy = {0.5, -0.1, 0.3, 0.8, -0.6};
    const auto base = model::cnp_predict(theta, cfg, cx, cy, queries);

    bool perm_ok = true;
    util::Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = rng.permutation(cx.size());
        std::vector<double> px(cx.size()), py(cy.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            px[i] = cx[p[i]];
            py[i] = cy[p[i]];
        }
        if (model::cnp_predict(theta, cfg, px, py, queries) != base) perm_ok = false;
    }
    std::vector<double> dup_x, dup_y;
    for (int copy = 0; copy < 3; ++copy) {
        dup_x.insert(dup_x.end(), cx.begin(), cx.end());
        dup_y.insert(dup_y.end(), cy.begin(), cy.end());
    }
    const bool dup_ok = model::cnp_predict(theta, cfg, dup_x, dup_y, queries) == base;
    bool empty_ok = false;
    try {
        model::cnp_predict(theta, cfg, {}, {}, queries);
    } catch (const DataError&) {
        empty_ok = true;
    }
    report(8, "cnp permutation/duplication invariance and empty-context rejection",
           perm_ok && dup_ok && empty_ok,
           std::string("permutation ") + (perm_ok ? "bitwise" : "BROKEN") + ", duplication " +
               (dup_ok ? "bitwise" : "BROKEN") + ", empty " + (empty_ok ? "rejected" : "ACCEPTED"));
}

// ---- criterion 10 ---------------------------------------------------------

void criterion_10() {
    lab::DynamicsConfig dcfg;
    lab::PopulationConfig pcfg;
    pcfg.n_train = 6;
    pcfg.n_test = 4;
    pcfg.train_samples = 40;
    pcfg.n_queries = 25;
    pcfg.context_sizes = {1};
    pcfg.train_seed = 12100;
    pcfg.test_seed = 12200;
    const auto pop = lab::generate_population(lab::Problem::full_frf, dcfg, pcfg);
    const std::size_t d = pop.y_dim;
    std::size_t rows = 0;
    for (const auto& t : pop.train) rows += t.size();
    Eigen::MatrixXd train(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
    Eigen::Index row = 0;
    for (const auto& t : pop.train)
        for (std::size_t i = 0; i < t.size(); ++i, ++row)
            for (std::size_t j = 0; j < d; ++j)
                train(row, static_cast<Eigen::Index>(j)) = t.y[i * d + j];

    const std::size_t r = feat::pca_rank_for_variance(
        train, 0.999, static_cast<std::size_t>(std::min<Eigen::Index>(
                          static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d))));
    const auto basis = feat::pca_fit(train, r);
    const Eigen::MatrixXd gram = basis.components.transpose() * basis.components -
                                 Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(r),
                                                           static_cast<Eigen::Index>(r));
    const double ortho = gram.cwiseAbs().maxCoeff();

    double worst_recon = 0.0;
    for (const auto& task : pop.test) {
        for (std::size_t i = 0; i < task.size(); ++i) {
            Eigen::MatrixXd one(1, static_cast<Eigen::Index>(d));
            for (std::size_t j = 0; j < d; ++j)
                one(0, static_cast<Eigen::Index>(j)) = task.y[i * d + j];
            const auto recon = feat::pca_inverse(basis, feat::pca_transform(basis, one));
            std::vector<double> pred(d), truth(d);
            for (std::size_t j = 0; j < d; ++j) {
                pred[j] = recon(0, static_cast<Eigen::Index>(j));
                truth[j] = one(0, static_cast<Eigen::Index>(j));
            }
            worst_recon = std::max(worst_recon, lab::nmse(pred, truth));
        }
    }

    const auto again = feat::pca_fit(train, r);
    const bool deterministic = again.mean == basis.mean && again.components == basis.components;

    const bool ok = ortho < 1e-10 && worst_recon < 1.0 && deterministic;
    report(10, "pca orthonormality, held-out reconstruction, determinism", ok,
           "orthonormality " + fmt(ortho) + " (<1e-10), reconstruction nmse " + fmt(worst_recon) +
               "% (<1%), rank " + std::to_string(r) + ", repeat fit " +
               (deterministic ? "bitwise" : "BROKEN"));
}

// ---- criterion 9 ----------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_9(const std::string& cli, const fs::path& work) {
    if (cli.empty()) {
        report(9, "determinism and reproducibility", false, "no --cli path given");
        return;
    }
    bool ok = true;
    std::string detail;
    const fs::path dir = work / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "sim.json");
        cfg << R"({"seed": 77, "problem": 1,
                   "population": {"n_train": 2, "n_test": 2, "context_sizes": [1, 3]}})";
    }
    {
        std::ofstream cfg(dir / "exp.json");
        cfg << R"({"seed": 78, "problems": [1], "methods": ["MAML", "CNP", "GP"],
                   "n_train": [2], "n_train_by_problem": {}, "n_repetitions": 2,
                   "population": {"n_test": 3, "train_samples": 24, "n_queries": 16,
                                   "context_sizes": [1]},
                   "maml": {"epochs": 6},
                   "search": {"hidden_sizes": [6], "n_inits": 1, "probe_adapt_steps": 4},
                   "cnp": {"steps": 60, "probe_every": 20},
                   "gp": {"restarts": 2, "iterations": 25}})";
    }
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };

    if (run("simulate --config " + (dir / "sim.json").string() + " --out " +
            (dir / "sim_a").string()) != 0 ||
        run("simulate --config " + (dir / "sim.json").string() + " --out " +
            (dir / "sim_b").string()) != 0) {
        ok = false;
        detail = "simulate failed";
    } else {
        for (const auto& f : {"train_0.csv", "train_1.csv", "validation_0.csv", "test_0.csv"})
            if (slurp(dir / "sim_a" / f) != slurp(dir / "sim_b" / f)) ok = false;
        if (!ok) detail = "simulate rerun differs";
    }

    if (ok) {
        if (run("experiment --config " + (dir / "exp.json").string() + " --out " +
                (dir / "exp_w1").string() + " --workers 1") != 0 ||
            run("experiment --config " + (dir / "exp.json").string() + " --out " +
                (dir / "exp_w2").string() + " --workers 2") != 0) {
            ok = false;
            detail = "experiment failed";
        } else {
            for (const auto& f : {"results.csv", "summary.csv", "structure_nmse.csv"})
                if (slurp(dir / "exp_w1" / f) != slurp(dir / "exp_w2" / f)) ok = false;
            if (!ok) detail = "worker counts disagree";
        }
    }

    if (ok) {
        // resume: drop parts and final csvs, rerun into the same directory
        fs::remove(dir / "exp_w2" / "results.csv");
        std::size_t removed = 0;
        for (const auto& entry : fs::directory_iterator(dir / "exp_w2" / "parts")) {
            if (removed >= 2) break;
            fs::remove(entry.path());
            ++removed;
        }
        if (run("experiment --config " + (dir / "exp.json").string() + " --out " +
                (dir / "exp_w2").string() + " --workers 2") != 0 ||
            slurp(dir / "exp_w1" / "results.csv") != slurp(dir / "exp_w2" / "results.csv")) {
            ok = false;
            detail = "resume differs";
        }
    }
    report(9, "determinism and reproducibility (rerun, workers, resume)", ok, detail);
}

// ---- criteria 5-7: the desk benchmark --------------------------------------

struct CellStats {
    double mean = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> pooled;  // per-structure values pooled over repetitions
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto rank = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    const auto rx = rank(xs);
    const auto ry = rank(ys);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

void criteria_5_6_7(const fs::path& work) {
    lab::RunConfig rc;
    lab::cfgio::apply_preset(rc, "desk");
    rc.experiment.seed = 42;
    rc.experiment.population.train_seed = util::derive_seed(42, {1});
    rc.experiment.population.test_seed = util::derive_seed(42, {2});

    const fs::path out = work / "desk_run";
    fs::create_directories(out);
    std::cout << "running the desk benchmark (cached under " << out.string() << ") ..."
              << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    std::mutex m;
    std::size_t done = 0;
    const std::size_t total = lab::enumerate_units(rc.experiment).size();
    const auto rep = lab::run_experiment(rc.experiment, util::default_workers(), out.string(),
                                         [&](const lab::UnitKey& key, bool reused) {
                                             std::lock_guard<std::mutex> lock(m);
                                             ++done;
                                             std::cout << "  [" << done << "/" << total << "] "
                                                       << key.id() << (reused ? " (cached)" : "")
                                                       << std::endl;
                                         });
    const double minutes = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t0).count() / 60.0;
    std::cout << "desk benchmark finished in " << fmt(minutes) << " min" << std::endl;
    lab::emit_report(rep, out.string());

    // collect cell statistics
    auto cell = [&](int problem, const std::string& method, std::size_t n_train,
                    std::size_t n_ctx) {
        CellStats s;
        double total_nmse = 0.0;
        std::size_t count = 0;
        for (const auto& u : rep.units) {
            if (u.key.problem != problem || u.key.method != method || u.key.n_train != n_train)
                continue;
            for (const auto& c : u.contexts) {
                if (c.n_context != n_ctx || c.failed) continue;
                total_nmse += c.nmse;
                ++count;
                s.pooled.insert(s.pooled.end(), c.per_structure.begin(), c.per_structure.end());
            }
        }
        if (count > 0) s.mean = total_nmse / static_cast<double>(count);
        return s;
    };

    // criterion 5
    const auto cnp1 = cell(1, "CNP", 9, 1);
    const auto maml3 = cell(1, "MAML", 9, 3);
    const double cnp_median = cnp1.pooled.empty() ? 1e300 : median(cnp1.pooled);
    const double maml_median = maml3.pooled.empty() ? 1e300 : median(maml3.pooled);
    report(5, "problem-1 few-shot headline (9 training structures)",
           cnp_median < 5.0 && maml_median < 5.0,
           "CNP@1ctx median " + fmt(cnp_median) + "% (<5%), MAML@3ctx median " +
               fmt(maml_median) + "% (<5%)");

    // criterion 6
    bool order_ok = true;
    std::string order_detail;
    for (int problem : {1, 3}) {
        for (std::size_t ctx : {1UL, 3UL}) {
            const double gp = cell(problem, "GP", 0, ctx).mean;
            const double maml = cell(problem, "MAML", 9, ctx).mean;
            const double cnp = cell(problem, "CNP", 9, ctx).mean;
            if (!(maml < gp) || !(cnp < gp)) order_ok = false;
            order_detail += "p" + std::to_string(problem) + "@" + std::to_string(ctx) + " maml " +
                            fmt(maml) + " cnp " + fmt(cnp) + " gp " + fmt(gp) + "; ";
        }
    }
    for (std::size_t ctx : {1UL, 3UL}) {
        const double gp = cell(2, "GP", 0, ctx).mean;
        const double maml = cell(2, "MAML", 9, ctx).mean;
        const double cnp = cell(2, "CNP", 9, ctx).mean;
        if (!(std::min(maml, cnp) < gp)) order_ok = false;
        order_detail += "p2@" + std::to_string(ctx) + " best-meta " + fmt(std::min(maml, cnp)) +
                        " gp " + fmt(gp) + "; ";
    }
    report(6, "meta methods beat the per-structure gp at small context", order_ok, order_detail);

    // criterion 7
    bool trend_ok = true;
    std::string trend_detail;
    for (const std::string& method : {std::string("MAML"), std::string("CNP")}) {
        std::vector<double> ns, means;
        for (std::size_t n_train = 2; n_train <= 9; ++n_train) {
            double total_over_ctx = 0.0;
            std::size_t cnt = 0;
            for (std::size_t ctx : {1UL, 3UL, 5UL, 7UL}) {
                const auto s = cell(1, method, n_train, ctx);
                if (std::isfinite(s.mean)) {
                    total_over_ctx += s.mean;
                    ++cnt;
                }
            }
            if (cnt > 0) {
                ns.push_back(static_cast<double>(n_train));
                means.push_back(total_over_ctx / static_cast<double>(cnt));
            }
        }
        const double rho = ns.size() >= 3 ? spearman(ns, means) : 1.0;
        if (!(rho < 0.0)) trend_ok = false;
        trend_detail += method + " rho " + fmt(rho) + "; ";
    }
    report(7, "error decreases with the training-population size (problem 1)", trend_ok,
           trend_detail);
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    std::string out = "acceptance_work";
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--cli") cli = argv[i + 1];
        if (flag == "--out") out = argv[i + 1];
    }
    const fs::path work(out);
    fs::create_directories(work);

    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_8();
    criterion_10();
    criterion_9(cli, work);
    criteria_5_6_7(work);

    std::cout << (g_failures == 0 ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED") << " ("
              << (10 - g_failures) << "/10 criteria)" << std::endl;
    return g_failures;
}
