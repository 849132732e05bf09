#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "popdyn/dynamics/structure.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::dyn {

struct FrfCurve {
    std::vector<double> freqs_hz;   // strictly increasing
    std::vector<double> magnitude;  // |H| of the observed DOF, finite and > 0
    std::size_t observed_dof = 0;   // 0-based
    std::size_t excited_dof = 0;    // 0-based
};

// Receptance via the closed-form complex solve (-w^2 M + i w C + K) h = e.
inline FrfCurve frf_direct(const SystemMatrices& mats, std::size_t excited_dof,
                           std::size_t observed_dof, const std::vector<double>& freqs_hz) {
    const std::size_t n = static_cast<std::size_t>(mats.M.rows());
    if (freqs_hz.empty()) throw DataError("frf_direct: empty frequency list");
    if (excited_dof >= n || observed_dof >= n)
        throw DataError("frf_direct: DOF index out of range");
    for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
        if (freqs_hz[i] < 0.0) throw DataError("frf_direct: negative frequency");
        if (i > 0 && !(freqs_hz[i] > freqs_hz[i - 1]))
            throw DataError("frf_direct: frequencies must be strictly increasing");
    }

    using Cplx = std::complex<double>;
    Eigen::MatrixXcd dynamic_stiffness(n, n);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
    rhs(static_cast<Eigen::Index>(excited_dof)) = Cplx(1.0, 0.0);

    FrfCurve curve;
    curve.freqs_hz = freqs_hz;
    curve.magnitude.resize(freqs_hz.size());
    curve.observed_dof = observed_dof;
    curve.excited_dof = excited_dof;

    for (std::size_t fi = 0; fi < freqs_hz.size(); ++fi) {
        const double w = 2.0 * std::numbers::pi * freqs_hz[fi];
        dynamic_stiffness = (-w * w * mats.M + mats.K).cast<Cplx>();
        dynamic_stiffness += Cplx(0.0, w) * mats.C.cast<Cplx>();
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(dynamic_stiffness);
        const Eigen::VectorXcd h = lu.solve(rhs);
        const double mag = std::abs(h(static_cast<Eigen::Index>(observed_dof)));
        if (!std::isfinite(mag) || !(mag > 0.0))
            throw NumericsError("frf_direct: singular system at f=" +
                                std::to_string(freqs_hz[fi]) + " Hz");
        curve.magnitude[fi] = mag;
    }
    return curve;
}

// Magnitude at the grid line nearest to f_target; ties break toward the
// lower frequency.
inline double spectral_line(const FrfCurve& curve, double f_target) {
    if (curve.freqs_hz.empty()) throw DataError("spectral_line: empty curve");
    if (f_target < curve.freqs_hz.front() || f_target > curve.freqs_hz.back())
        throw DataError("spectral_line: target frequency " + std::to_string(f_target) +
                        " outside curve range");
    std::size_t best = 0;
    double best_dist = std::abs(curve.freqs_hz[0] - f_target);
    for (std::size_t i = 1; i < curve.freqs_hz.size(); ++i) {
        const double d = std::abs(curve.freqs_hz[i] - f_target);
        if (d < best_dist) {
            best = i;
            best_dist = d;
        }
    }
    return curve.magnitude[best];
}

inline std::vector<double> frequency_grid(double f_start, double f_stop, double df) {
    if (!(df > 0.0) || !(f_stop > f_start))
        throw ConfigError("frequency_grid: need df > 0 and f_stop > f_start");
    std::vector<double> freqs;
    const std::size_t count = static_cast<std::size_t>(std::llround((f_stop - f_start) / df)) + 1;
    freqs.reserve(count);
    for (std::size_t i = 0; i < count; ++i) freqs.push_back(f_start + static_cast<double>(i) * df);
    return freqs;
}

}  // namespace popdyn::dyn
