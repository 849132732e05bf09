#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "popdyn/dynamics/structure.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::dyn {

struct TimeHistory {
    double dt = 0.0;
    Eigen::MatrixXd displacement;  // n_steps+1 x n_dof
    Eigen::MatrixXd velocity;      // n_steps+1 x n_dof
};

// Classical RK4 on the first-order form z' = A z + B x(t) with
// z = [y; y'], A = [[0, I], [-M^-1 K, -M^-1 C]]. The sampled excitation is
// interpolated linearly between samples for the half-step evaluations.
// excitation[k] is the force at t = k*dt applied at excited_dof; the state
// starts at rest unless an initial state is supplied.
inline TimeHistory simulate_time_domain(const SystemMatrices& mats,
                                        const std::vector<double>& excitation,
                                        std::size_t excited_dof, double dt,
                                        const Eigen::VectorXd* initial_state = nullptr) {
    const std::size_t n = static_cast<std::size_t>(mats.M.rows());
    if (!(dt > 0.0)) throw ConfigError("simulate_time_domain: dt must be > 0");
    if (excitation.size() < 2) throw DataError("simulate_time_domain: need >= 2 excitation samples");
    if (excited_dof >= n) throw DataError("simulate_time_domain: excited_dof out of range");

    // stability guard: dt * w_max < 0.5
    {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(mats.K, mats.M);
        if (solver.info() == Eigen::Success) {
            const double w_max = std::sqrt(solver.eigenvalues().maxCoeff());
            if (dt * w_max >= 0.5)
                throw ConfigError("simulate_time_domain: dt*w_max = " +
                                  std::to_string(dt * w_max) + " >= 0.5; reduce dt");
        }
    }

    const Eigen::MatrixXd minv_k = mats.M.ldlt().solve(mats.K);
    const Eigen::MatrixXd minv_c = mats.M.ldlt().solve(mats.C);
    const Eigen::VectorXd minv_col = mats.M.ldlt().solve(
        Eigen::VectorXd::Unit(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(excited_dof)));

    const std::size_t n_steps = excitation.size() - 1;
    TimeHistory hist;
    hist.dt = dt;
    hist.displacement.resize(static_cast<Eigen::Index>(n_steps + 1), static_cast<Eigen::Index>(n));
    hist.velocity.resize(static_cast<Eigen::Index>(n_steps + 1), static_cast<Eigen::Index>(n));

    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (initial_state) {
        y = initial_state->head(static_cast<Eigen::Index>(n));
        v = initial_state->tail(static_cast<Eigen::Index>(n));
    }
    hist.displacement.row(0) = y.transpose();
    hist.velocity.row(0) = v.transpose();

    Eigen::VectorXd ky1(n), kv1(n), ky2(n), kv2(n), ky3(n), kv3(n), ky4(n), kv4(n), yt(n), vt(n);
    auto accel = [&](const Eigen::VectorXd& yy, const Eigen::VectorXd& vv, double force) {
        return (-(minv_k * yy) - minv_c * vv + force * minv_col).eval();
    };

    for (std::size_t k = 0; k < n_steps; ++k) {
        const double f0 = excitation[k];
        const double f1 = excitation[k + 1];
        const double fh = 0.5 * (f0 + f1);

        ky1 = v;
        kv1 = accel(y, v, f0);
        yt = y + 0.5 * dt * ky1;
        vt = v + 0.5 * dt * kv1;
        ky2 = vt;
        kv2 = accel(yt, vt, fh);
        yt = y + 0.5 * dt * ky2;
        vt = v + 0.5 * dt * kv2;
        ky3 = vt;
        kv3 = accel(yt, vt, fh);
        yt = y + dt * ky3;
        vt = v + dt * kv3;
        ky4 = vt;
        kv4 = accel(yt, vt, f1);

        y += (dt / 6.0) * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4);
        v += (dt / 6.0) * (kv1 + 2.0 * kv2 + 2.0 * kv3 + kv4);

        const double amp = std::max(y.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff());
        if (!std::isfinite(amp) || amp > 1e12)
            throw NumericsError("simulate_time_domain: divergence at step " + std::to_string(k + 1));

        hist.displacement.row(static_cast<Eigen::Index>(k + 1)) = y.transpose();
        hist.velocity.row(static_cast<Eigen::Index>(k + 1)) = v.transpose();
    }
    return hist;
}

}  // namespace popdyn::dyn
