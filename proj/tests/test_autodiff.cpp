#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "popdyn/ad/grad.hpp"
#include "popdyn/models/mlp.hpp"
#include "popdyn/util/rng.hpp"
#include "oracles/fd.hpp"

using namespace popdyn;
using Catch::Approx;

namespace {

ad::ParamVector flat_params(std::vector<double> values) {
    auto layout = std::make_shared<ad::ParamLayout>();
    layout->add("theta", values.size(), 1);
    return ad::ParamVector(layout, std::move(values));
}

// loss builders usable with both tape scalars
struct SumSquares {
    template <typename S>
    typename ad::Tape<S>::NodeId operator()(ad::Tape<S>& t,
                                            const std::vector<typename ad::Tape<S>::NodeId>& p) const {
        return t.sum(t.square(p[0]));
    }
};

struct HalfSumSquares {
    template <typename S>
    typename ad::Tape<S>::NodeId operator()(ad::Tape<S>& t,
                                            const std::vector<typename ad::Tape<S>::NodeId>& p) const {
        return t.mul(t.sum(t.square(p[0])), t.scalar_constant(0.5));
    }
};

struct ConstantLoss {
    template <typename S>
    typename ad::Tape<S>::NodeId operator()(ad::Tape<S>& t,
                                            const std::vector<typename ad::Tape<S>::NodeId>&) const {
        return t.scalar_constant(3.5);
    }
};

model::MlpConfig random_mlp_cfg() { return {2, 6, 1}; }

struct MlpCase {
    model::MlpConfig cfg;
    ad::ParamVector theta;
    model::MlpMseLoss loss;
};

MlpCase make_mlp_case(std::uint64_t seed) {
    const model::MlpConfig cfg = random_mlp_cfg();
    util::Rng rng(seed);
    std::vector<double> x, y;
    for (int i = 0; i < 8; ++i) {
        x.push_back(rng.uniform(-1.0, 1.0));
        x.push_back(rng.uniform(-1.0, 1.0));
        y.push_back(0.7 * std::sin(x[2 * i]) - 0.2 * x[2 * i + 1]);
    }
    return {cfg, model::mlp_init(cfg, seed + 77), model::MlpMseLoss(cfg, x, y)};
}

double eval_at(const model::MlpMseLoss& loss, const ad::ParamVector& proto,
               const std::vector<double>& values) {
    ad::ParamVector theta(proto.layout(), values);
    return ad::eval_loss(loss, theta);
}

}  // namespace

TEST_CASE("gradient of a quadratic") {
    auto theta = flat_params({1.0, -2.0});
    const auto g = ad::grad(SumSquares{}, theta);
    REQUIRE(g[0] == Approx(2.0).margin(1e-15));
    REQUIRE(g[1] == Approx(-4.0).margin(1e-15));
}

TEST_CASE("tanh slope at zero is one") {
    auto theta = flat_params({0.0});
    auto loss = [](auto& t, const auto& p) { return t.sum(t.tanh_(p[0])); };
    const auto g = ad::grad(loss, theta);
    REQUIRE(g[0] == Approx(1.0).margin(1e-15));
}

TEST_CASE("mlp gradient matches central finite differences") {
    for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        auto c = make_mlp_case(seed);
        const auto g = ad::grad(c.loss, c.theta);
        auto f = [&](const std::vector<double>& v) { return eval_at(c.loss, c.theta, v); };
        const auto fd = oracles::fd_gradient(f, c.theta.values(), 1e-5);
        double scale = 0.0;
        for (double v : fd) scale = std::max(scale, std::fabs(v));
        for (std::size_t i = 0; i < g.size(); ++i)
            REQUIRE(std::fabs(g[i] - fd[i]) / std::max(scale, 1e-8) < 1e-6);
    }
}

TEST_CASE("grad through update with constant inner loss is a plain gradient") {
    auto theta = flat_params({0.3, -1.1, 0.4});
    const auto mg = ad::grad_through_update(SumSquares{}, ConstantLoss{}, theta, 0.05, 1, false);
    const auto g = ad::grad(SumSquares{}, theta);
    for (std::size_t i = 0; i < g.size(); ++i) REQUIRE(mg[i] == Approx(g[i]).margin(1e-15));
}

TEST_CASE("grad through update quadratic closed form") {
    const double alpha = 0.1;
    auto theta = flat_params({1.0, -2.0, 0.5});
    const auto mg = ad::grad_through_update(HalfSumSquares{}, HalfSumSquares{}, theta, alpha, 1, false);
    // inner H = I: meta-gradient is (1 - alpha)^2 theta
    const double factor = (1.0 - alpha) * (1.0 - alpha);
    for (std::size_t i = 0; i < mg.size(); ++i)
        REQUIRE(mg[i] == Approx(factor * theta.values()[i]).epsilon(1e-12));
}

TEST_CASE("meta gradient matches finite differences of the composed objective") {
    for (std::uint64_t seed : {21ULL, 22ULL}) {
        auto inner_case = make_mlp_case(seed);
        auto outer_case = make_mlp_case(seed + 1000);  // different batch, same layout
        const double alpha = 0.05;

        const auto mg = ad::grad_through_update(outer_case.loss, inner_case.loss,
                                                inner_case.theta, alpha, 1, false);
        auto composed = [&](const std::vector<double>& v) {
            ad::ParamVector th(inner_case.theta.layout(), v);
            const auto g = ad::grad(inner_case.loss, th);
            ad::ParamVector updated = th;
            updated.axpy(-alpha, g);
            return ad::eval_loss(outer_case.loss, updated);
        };
        const auto fd = oracles::fd_gradient(composed, inner_case.theta.values(), 1e-5);
        double scale = 0.0;
        for (double v : fd) scale = std::max(scale, std::fabs(v));
        for (std::size_t i = 0; i < mg.size(); ++i)
            REQUIRE(std::fabs(mg[i] - fd[i]) / std::max(scale, 1e-8) < 1e-4);
    }
}

TEST_CASE("first order flag stops the gradient at the inner update") {
    auto c = make_mlp_case(31);
    auto outer = make_mlp_case(32);
    const double alpha = 0.05;
    const auto fo = ad::grad_through_update(outer.loss, c.loss, c.theta, alpha, 1, true);
    // reference: plain gradient of the outer loss at theta'
    const auto g_inner = ad::grad(c.loss, c.theta);
    ad::ParamVector updated = c.theta;
    updated.axpy(-alpha, g_inner);
    const auto g_ref = ad::grad(outer.loss, updated);
    for (std::size_t i = 0; i < fo.size(); ++i) REQUIRE(fo[i] == Approx(g_ref[i]).margin(1e-12));
}

TEST_CASE("gradient is linear in the loss") {
    auto c1 = make_mlp_case(41);
    auto c2 = make_mlp_case(42);
    const double a = 1.7, b = -0.6;
    auto combined = [&](auto& t, const auto& p) {
        auto l1 = c1.loss(t, p);
        auto l2 = c2.loss(t, p);
        return t.add(t.mul(l1, t.scalar_constant(a)), t.mul(l2, t.scalar_constant(b)));
    };
    const auto g = ad::grad(combined, c1.theta);
    const auto g1 = ad::grad(c1.loss, c1.theta);
    const auto g2 = ad::grad(c2.loss, c1.theta);
    for (std::size_t i = 0; i < g.size(); ++i)
        REQUIRE(g[i] == Approx(a * g1[i] + b * g2[i]).margin(1e-12));
}

TEST_CASE("identical tapes produce bit-identical gradients") {
    auto c = make_mlp_case(51);
    const auto g1 = ad::grad(c.loss, c.theta);
    const auto g2 = ad::grad(c.loss, c.theta);
    REQUIRE(g1 == g2);
    const auto m1 = ad::grad_through_update(c.loss, c.loss, c.theta, 0.05, 2, false);
    const auto m2 = ad::grad_through_update(c.loss, c.loss, c.theta, 0.05, 2, false);
    REQUIRE(m1 == m2);
}

TEST_CASE("non-finite intermediates name the primitive") {
    auto theta = flat_params({-1.0});
    auto loss = [](auto& t, const auto& p) { return t.sum(t.log_(p[0])); };
    try {
        ad::grad(loss, theta);
        FAIL("expected a numerics error");
    } catch (const NumericsError& e) {
        REQUIRE(std::string(e.what()).find("log") != std::string::npos);
    }
}

TEST_CASE("multi-step inner updates match finite differences") {
    auto inner_case = make_mlp_case(61);
    auto outer_case = make_mlp_case(62);
    const double alpha = 0.03;
    const int k = 3;
    const auto mg = ad::grad_through_update(outer_case.loss, inner_case.loss, inner_case.theta,
                                            alpha, k, false);
    auto composed = [&](const std::vector<double>& v) {
        ad::ParamVector th(inner_case.theta.layout(), v);
        for (int j = 0; j < k; ++j) {
            const auto g = ad::grad(inner_case.loss, th);
            th.axpy(-alpha, g);
        }
        return ad::eval_loss(outer_case.loss, th);
    };
    const auto fd = oracles::fd_gradient(composed, inner_case.theta.values(), 1e-5);
    double scale = 0.0;
    for (double v : fd) scale = std::max(scale, std::fabs(v));
    for (std::size_t i = 0; i < mg.size(); ++i)
        REQUIRE(std::fabs(mg[i] - fd[i]) / std::max(scale, 1e-8) < 1e-4);
}
