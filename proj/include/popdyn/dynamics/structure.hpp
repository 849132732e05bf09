#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "popdyn/util/errors.hpp"

namespace popdyn::dyn {

// Quadratic stiffness-temperature law q(T) = a2*T^2 + a1*T + a0 [N/m],
// valid on [t_min, t_max]. `scaled` mode multiplies a structure's own
// stiffness by q(T)/q(t_ref) so that members of the population stay
// distinguishable at every temperature; `absolute` substitutes q(T) itself.
enum class TempLawMode { scaled, absolute };

struct TemperatureLaw {
    double a2 = -13.0;
    double a1 = 500.0;
    double a0 = 7200.0;
    TempLawMode mode = TempLawMode::scaled;
    double t_min = 20.0;
    double t_max = 40.0;
    double t_ref = 20.0;

    double q(double t) const { return (a2 * t + a1) * t + a0; }

    bool in_range(double t) const { return t >= t_min && t <= t_max; }

    double spring_stiffness(double base_k, double t) const {
        if (mode == TempLawMode::absolute) return q(t);
        return base_k * q(t) / q(t_ref);
    }
};

// One member of the population: a grounded chain of point masses connected
// in series by springs and viscous dampers. Spring/damper i joins mass i to
// mass i-1 (mass 1 to ground).
struct StructureSpec {
    std::size_t n_dof = 5;
    std::vector<double> mass;        // per DOF [kg]
    std::vector<double> damper;      // per connection [N*s/m]
    double base_stiffness = 10000.0; // k [N/m]
    std::vector<std::size_t> temp_affected_springs = {1, 2, 3};  // 1-based
    TemperatureLaw temp_law;

    static StructureSpec chain(std::size_t n_dof, double mass_each, double damper_each,
                               double k, TemperatureLaw law = {}) {
        StructureSpec s;
        s.n_dof = n_dof;
        s.mass.assign(n_dof, mass_each);
        s.damper.assign(n_dof, damper_each);
        s.base_stiffness = k;
        s.temp_law = law;
        if (n_dof < 3) {
            s.temp_affected_springs.clear();
            for (std::size_t i = 1; i <= n_dof; ++i) s.temp_affected_springs.push_back(i);
        }
        return s;
    }

    void validate() const {
        if (n_dof < 1) throw DataError("StructureSpec: n_dof must be >= 1");
        if (mass.size() != n_dof || damper.size() != n_dof)
            throw DataError("StructureSpec: mass/damper size must equal n_dof");
        for (double m : mass)
            if (!(m > 0.0)) throw DataError("StructureSpec: all masses must be > 0");
        for (double c : damper)
            if (c < 0.0) throw DataError("StructureSpec: dampers must be >= 0");
        if (!(base_stiffness > 0.0)) throw DataError("StructureSpec: base stiffness must be > 0");
        for (std::size_t idx : temp_affected_springs)
            if (idx < 1 || idx > n_dof)
                throw DataError("StructureSpec: temp-affected spring index out of range: " +
                                std::to_string(idx));
    }
};

struct SystemMatrices {
    Eigen::MatrixXd M;
    Eigen::MatrixXd C;
    Eigen::MatrixXd K;
};

// Chain assembly at temperature T. Spring i (1-based) contributes k_i to
// K[i-1][i-1], and spring i+1 couples DOFs i-1 and i. Springs listed in
// temp_affected_springs take their stiffness from the temperature law.
inline SystemMatrices assemble_matrices(const StructureSpec& spec, double temperature) {
    spec.validate();
    if (!spec.temp_law.in_range(temperature))
        throw DataError("assemble_matrices: temperature " + std::to_string(temperature) +
                        " outside valid range [" + std::to_string(spec.temp_law.t_min) + ", " +
                        std::to_string(spec.temp_law.t_max) + "]");

    const std::size_t n = spec.n_dof;
    std::vector<bool> affected(n + 1, false);
    for (std::size_t idx : spec.temp_affected_springs) affected[idx] = true;

    std::vector<double> k(n + 1, 0.0);  // k[1..n], spring i
    for (std::size_t i = 1; i <= n; ++i) {
        k[i] = affected[i] ? spec.temp_law.spring_stiffness(spec.base_stiffness, temperature)
                           : spec.base_stiffness;
        if (!(k[i] > 0.0))
            throw DataError("assemble_matrices: non-positive stiffness " + std::to_string(k[i]) +
                            " for spring " + std::to_string(i) + " at T=" +
                            std::to_string(temperature));
    }

    SystemMatrices mats;
    mats.M = Eigen::MatrixXd::Zero(n, n);
    mats.C = Eigen::MatrixXd::Zero(n, n);
    mats.K = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        mats.M(i, i) = spec.mass[i];
        mats.K(i, i) = k[i + 1] + (i + 1 < n ? k[i + 2] : 0.0);
        mats.C(i, i) = spec.damper[i] + (i + 1 < n ? spec.damper[i + 1] : 0.0);
        if (i + 1 < n) {
            mats.K(i, i + 1) = -k[i + 2];
            mats.K(i + 1, i) = -k[i + 2];
            mats.C(i, i + 1) = -spec.damper[i + 1];
            mats.C(i + 1, i) = -spec.damper[i + 1];
        }
    }
    return mats;
}

// Undamped natural frequencies [Hz] from the generalized symmetric
// eigenproblem K v = w^2 M v, ascending.
inline std::vector<double> natural_frequencies_hz(const SystemMatrices& mats) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(mats.K, mats.M);
    if (solver.info() != Eigen::Success)
        throw NumericsError("natural_frequencies_hz: eigensolver failed");
    std::vector<double> freqs;
    freqs.reserve(static_cast<std::size_t>(solver.eigenvalues().size()));
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
        const double lambda = solver.eigenvalues()(i);
        if (lambda < 0.0) throw NumericsError("natural_frequencies_hz: negative eigenvalue");
        freqs.push_back(std::sqrt(lambda) / (2.0 * 3.14159265358979323846));
    }
    return freqs;
}

}  // namespace popdyn::dyn
