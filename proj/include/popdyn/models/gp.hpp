#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "popdyn/util/errors.hpp"
#include "popdyn/util/rng.hpp"

namespace popdyn::model {

// Squared-exponential kernel hyperparameters, stored in log space during
// optimisation: k(a, b) = sf2 * exp(-(a-b)^2 / (2 ell^2)).
struct GpHyper {
    double sf2 = 1.0;   // signal variance
    double ell = 1.0;   // length-scale
    double sn2 = 1e-4;  // noise variance
};

struct GpConfig {
    std::size_t restarts = 10;
    std::size_t iterations = 200;
    double learning_rate = 0.1;
    double jitter = 1e-9;
    double jitter_max = 1e-5;
    double noise_floor_rel = 1e-6;  // lower bound on sn2 / sf2
    bool optimize_noise = true;     // when false, sn2 stays at its initial value
    std::uint64_t seed = 1;
};

struct GpModel {
    GpHyper hyper;
    std::vector<double> train_x;
    std::vector<double> train_y;
    Eigen::MatrixXd chol_lower;  // L with L L^T = K + sn2 I (+ jitter)
    Eigen::VectorXd alpha;       // (K + sn2 I)^-1 y
    double jitter_used = 0.0;
    double log_marginal = 0.0;
};

namespace gp_detail {

inline Eigen::MatrixXd kernel_matrix(const std::vector<double>& x, const GpHyper& h) {
    const Eigen::Index n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd k(n, n);
    const double inv2l2 = 0.5 / (h.ell * h.ell);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double d = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
            const double v = h.sf2 * std::exp(-d * d * inv2l2);
            k(i, j) = v;
            k(j, i) = v;
        }
    return k;
}

// Cholesky of K + sn2 I with escalating jitter; returns the jitter used.
inline double robust_cholesky(const Eigen::MatrixXd& k, double sn2, double jitter0,
                              double jitter_max, Eigen::LLT<Eigen::MatrixXd>& llt) {
    const Eigen::Index n = k.rows();
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd a = k;
        a.diagonal().array() += sn2 + jitter;
        llt.compute(a);
        if (llt.info() == Eigen::Success) return jitter;
        jitter = jitter == 0.0 ? jitter0 : jitter * 10.0;
        if (jitter > jitter_max)
            throw NumericsError("gp: Cholesky failed after jitter escalation (n=" +
                                std::to_string(n) + ")");
    }
}

struct LmlResult {
    double value = 0.0;
    double d_log_sf2 = 0.0;
    double d_log_ell = 0.0;
    double d_log_sn2 = 0.0;
};

// Log marginal likelihood and its analytic gradient in log-space
// parameters: d LML / d phi = 0.5 tr((alpha alpha^T - K^-1) dK/dphi).
inline LmlResult log_marginal_gradient(const std::vector<double>& x,
                                       const std::vector<double>& y, const GpHyper& h,
                                       double jitter0, double jitter_max) {
    const Eigen::Index n = static_cast<Eigen::Index>(x.size());
    const Eigen::MatrixXd k_noiseless = kernel_matrix(x, h);
    Eigen::LLT<Eigen::MatrixXd> llt;
    robust_cholesky(k_noiseless, h.sn2, jitter0, jitter_max, llt);
    const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    const Eigen::VectorXd alpha = llt.solve(yv);

    LmlResult res;
    res.value = -0.5 * yv.dot(alpha) -
                Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);

    const Eigen::MatrixXd k_inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd w = alpha * alpha.transpose() - k_inv;

    // dK/dlog(sf2) = K_noiseless; dK/dlog(sn2) = sn2 I;
    // dK/dlog(ell) = K_noiseless .* D2 / ell^2
    double tr_sf = 0.0, tr_ell = 0.0, tr_sn = 0.0;
    const double inv_l2 = 1.0 / (h.ell * h.ell);
    for (Eigen::Index i = 0; i < n; ++i) {
        tr_sn += w(i, i) * h.sn2;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
            tr_sf += w(i, j) * k_noiseless(j, i);
            tr_ell += w(i, j) * k_noiseless(j, i) * d * d * inv_l2;
        }
    }
    res.d_log_sf2 = 0.5 * tr_sf;
    res.d_log_ell = 0.5 * tr_ell;
    res.d_log_sn2 = 0.5 * tr_sn;
    return res;
}

}  // namespace gp_detail

// Maximum-likelihood fit via multi-start gradient ascent in log space.
// The best hyperparameters over every iterate of every restart win.
inline GpModel gp_fit(const std::vector<double>& x, const std::vector<double>& y,
                      const GpConfig& cfg = {}, const GpHyper* init = nullptr) {
    if (x.empty() || x.size() != y.size()) throw DataError("gp_fit: bad training data");
    const std::size_t n = x.size();

    double x_lo = x[0], x_hi = x[0], y_scale = 0.0;
    for (double v : x) {
        x_lo = std::min(x_lo, v);
        x_hi = std::max(x_hi, v);
    }
    // prior mean is zero, so the second moment about zero sets the scale
    for (double v : y) y_scale += v * v;
    y_scale = std::sqrt(y_scale / static_cast<double>(n));
    if (!(y_scale > 0.0)) y_scale = 1.0;
    const double x_span = x_hi > x_lo ? x_hi - x_lo : 1.0;

    util::Rng rng(cfg.seed);
    double best_lml = -std::numeric_limits<double>::infinity();
    GpHyper best;
    bool found = false;

    const std::size_t n_starts = init ? 1 : std::max<std::size_t>(1, cfg.restarts);
    for (std::size_t start = 0; start < n_starts; ++start) {
        GpHyper h;
        if (init) {
            h = *init;
        } else {
            h.sf2 = y_scale * y_scale * std::exp(rng.normal(0.0, 1.0));
            h.ell = x_span * std::exp(rng.uniform(-2.5, 0.5));
            h.sn2 = h.sf2 * std::exp(rng.uniform(std::log(1e-6), std::log(1e-1)));
        }
        double log_sf2 = std::log(h.sf2), log_ell = std::log(h.ell), log_sn2 = std::log(h.sn2);
        for (std::size_t it = 0; it <= cfg.iterations; ++it) {
            GpHyper cur{std::exp(log_sf2), std::exp(log_ell), std::exp(log_sn2)};
            // keep the noise above its relative floor
            const double floor = cur.sf2 * cfg.noise_floor_rel;
            if (cur.sn2 < floor) {
                cur.sn2 = floor;
                log_sn2 = std::log(cur.sn2);
            }
            gp_detail::LmlResult r;
            try {
                r = gp_detail::log_marginal_gradient(x, y, cur, cfg.jitter, cfg.jitter_max);
            } catch (const NumericsError&) {
                break;  // this trajectory went degenerate; keep what we have
            }
            if (std::isfinite(r.value) && r.value > best_lml) {
                best_lml = r.value;
                best = cur;
                found = true;
            }
            if (it == cfg.iterations) break;
            const double lr = cfg.learning_rate;
            auto clamp_step = [](double g) { return std::max(-50.0, std::min(50.0, g)); };
            log_sf2 += lr * clamp_step(r.d_log_sf2);
            log_ell += lr * clamp_step(r.d_log_ell);
            if (cfg.optimize_noise) log_sn2 += lr * clamp_step(r.d_log_sn2);
            log_sf2 = std::max(std::log(1e-12 * y_scale * y_scale), std::min(std::log(1e12 * y_scale * y_scale), log_sf2));
            log_ell = std::max(std::log(1e-4 * x_span), std::min(std::log(1e4 * x_span), log_ell));
        }
    }
    if (!found) throw NumericsError("gp_fit: no restart produced a finite likelihood");

    GpModel model;
    model.hyper = best;
    model.train_x = x;
    model.train_y = y;
    Eigen::LLT<Eigen::MatrixXd> llt;
    model.jitter_used = gp_detail::robust_cholesky(gp_detail::kernel_matrix(x, best), best.sn2,
                                                   cfg.jitter, cfg.jitter_max, llt);
    model.chol_lower = llt.matrixL();
    model.alpha = llt.solve(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n)));
    model.log_marginal = best_lml;
    return model;
}

struct GpPrediction {
    std::vector<double> mean;
    std::vector<double> variance;
};

inline GpPrediction gp_predict(const GpModel& model, const std::vector<double>& queries) {
    const Eigen::Index n = static_cast<Eigen::Index>(model.train_x.size());
    GpPrediction out;
    out.mean.resize(queries.size());
    out.variance.resize(queries.size());
    const double inv2l2 = 0.5 / (model.hyper.ell * model.hyper.ell);
    Eigen::VectorXd kstar(n);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = queries[q] - model.train_x[static_cast<std::size_t>(i)];
            kstar(i) = model.hyper.sf2 * std::exp(-d * d * inv2l2);
        }
        out.mean[q] = kstar.dot(model.alpha);
        const Eigen::VectorXd v =
            model.chol_lower.triangularView<Eigen::Lower>().solve(kstar);
        out.variance[q] = std::max(0.0, model.hyper.sf2 - v.squaredNorm());
    }
    return out;
}

// Independent 1-D GPs per output dimension.
inline std::vector<GpModel> gp_fit_multi(const std::vector<double>& x,
                                         const std::vector<double>& y_rows, std::size_t y_dim,
                                         const GpConfig& cfg = {}) {
    if (y_dim == 0 || y_rows.size() != x.size() * y_dim)
        throw DataError("gp_fit_multi: bad target shape");
    std::vector<GpModel> models;
    models.reserve(y_dim);
    for (std::size_t j = 0; j < y_dim; ++j) {
        std::vector<double> col(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) col[i] = y_rows[i * y_dim + j];
        GpConfig c = cfg;
        c.seed = util::derive_seed(cfg.seed, {0x6770ULL, j});
        models.push_back(gp_fit(x, col, c));
    }
    return models;
}

}  // namespace popdyn::model
