#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "popdyn/io/checkpoint.hpp"
#include "popdyn/models/mlp.hpp"
#include "popdyn/util/rng.hpp"

using namespace popdyn;
using Catch::Approx;

namespace {

// independent straightforward re-implementation of the forward pass
std::vector<double> naive_forward(const ad::ParamVector& theta, const model::MlpConfig& cfg,
                                  const std::vector<double>& x) {
    auto layer = [](const std::span<const double> w, const std::span<const double> b,
                    const std::vector<double>& in, std::size_t rows, std::size_t cols) {
        std::vector<double> out(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * in[c];
            out[r] = std::tanh(s + b[r]);
        }
        return out;
    };
    auto h1 = layer(theta.slice(0), theta.slice(1), x, cfg.hidden_dim, cfg.input_dim);
    auto h2 = layer(theta.slice(2), theta.slice(3), h1, cfg.hidden_dim, cfg.hidden_dim);
    return layer(theta.slice(4), theta.slice(5), h2, cfg.output_dim, cfg.hidden_dim);
}

}  // namespace

TEST_CASE("zero parameters give zero output") {
    const model::MlpConfig cfg{2, 5, 3};
    ad::ParamVector theta(model::mlp_layout(cfg));
    const auto y = model::mlp_forward(theta, cfg, std::vector<double>{0.4, -0.7});
    for (double v : y) REQUIRE(v == 0.0);
}

TEST_CASE("unit 1-1-1 network composes three tanh applications") {
    const model::MlpConfig cfg{1, 1, 1};
    ad::ParamVector theta(model::mlp_layout(cfg));
    for (auto& v : theta.values()) v = 0.0;
    theta.values()[0] = 1.0;  // w1
    theta.values()[2] = 1.0;  // w2
    theta.values()[4] = 1.0;  // w3
    const double x = 0.8;
    const auto y = model::mlp_forward(theta, cfg, std::vector<double>{x});
    REQUIRE(y[0] == Approx(std::tanh(std::tanh(std::tanh(x)))).margin(1e-15));
}

TEST_CASE("forward pass matches a duplicate evaluation") {
    const model::MlpConfig cfg{3, 17, 2};
    const auto theta = model::mlp_init(cfg, 99);
    util::Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x = {rng.normal(), rng.normal(), rng.normal()};
        const auto a = model::mlp_forward(theta, cfg, x);
        const auto b = naive_forward(theta, cfg, x);
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == Approx(b[i]).margin(1e-12));
    }
}

TEST_CASE("tape forward agrees with the plain forward") {
    const model::MlpConfig cfg{1, 9, 1};
    const auto theta = model::mlp_init(cfg, 5);
    std::vector<double> x = {0.25};
    std::vector<double> y = {0.0};
    model::MlpMseLoss loss(cfg, x, y);
    // with target 0 the loss equals mean(out^2)
    ad::Tape<double> tape;
    auto ids = ad::make_param_nodes(tape, theta, nullptr);
    const auto node = loss(tape, ids);
    const double tape_loss = tape.value(node)[0];
    const auto out = model::mlp_forward(theta, cfg, x);
    REQUIRE(tape_loss == Approx(out[0] * out[0]).margin(1e-15));
}

TEST_CASE("output is bounded by the final layer weights") {
    const model::MlpConfig cfg{1, 30, 2};
    const auto theta = model::mlp_init(cfg, 7);
    std::vector<double> bound(cfg.output_dim, 0.0);
    const auto w3 = theta.slice(4);
    const auto b3 = theta.slice(5);
    for (std::size_t r = 0; r < cfg.output_dim; ++r) {
        double s = std::fabs(b3[r]);
        for (std::size_t c = 0; c < cfg.hidden_dim; ++c) s += std::fabs(w3[r * cfg.hidden_dim + c]);
        bound[r] = s;
    }
    util::Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto y = model::mlp_forward(theta, cfg, std::vector<double>{rng.uniform(-50.0, 50.0)});
        for (std::size_t r = 0; r < y.size(); ++r) {
            REQUIRE(std::fabs(y[r]) <= 1.0);
            REQUIRE(std::fabs(y[r]) <= bound[r]);
        }
    }
}

TEST_CASE("dimension mismatch is rejected") {
    const model::MlpConfig cfg{2, 4, 1};
    const auto theta = model::mlp_init(cfg, 1);
    REQUIRE_THROWS_AS(model::mlp_forward(theta, cfg, std::vector<double>{1.0}), DataError);
}

TEST_CASE("layout covers the vector exactly once") {
    const model::MlpConfig cfg{2, 4, 3};
    const auto layout = model::mlp_layout(cfg);
    std::size_t expected_offset = 0;
    for (const auto& s : layout->slices()) {
        REQUIRE(s.offset == expected_offset);
        expected_offset += s.size();
    }
    REQUIRE(expected_offset == layout->total_size());
    REQUIRE(layout->total_size() == 2 * 4 + 4 + 4 * 4 + 4 + 3 * 4 + 3);
}

TEST_CASE("checkpoint round-trip is exact") {
    const model::MlpConfig cfg{1, 11, 2};
    io::Checkpoint ckpt;
    ckpt.kind = "maml-mlp";
    ckpt.theta = model::mlp_init(cfg, 314159);
    ckpt.seed = 314159;
    ckpt.model_config = {{"input_dim", 1}, {"hidden_dim", 11}, {"output_dim", 2}};
    ckpt.x_scaler = feat::AffineScaler{{30.0}, {5.7}};
    ckpt.y_scaler = feat::AffineScaler{{1e-4, 2e-4}, {3e-5, 4e-5}};

    const auto dir = std::filesystem::temp_directory_path() / "popdyn_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "ckpt.json").string();
    io::save_checkpoint(ckpt, path);
    const auto back = io::load_checkpoint(path);

    REQUIRE(back.kind == ckpt.kind);
    REQUIRE(back.seed == ckpt.seed);
    REQUIRE(back.theta.values() == ckpt.theta.values());
    REQUIRE(*back.theta.layout() == *ckpt.theta.layout());
    REQUIRE(back.x_scaler.shift == ckpt.x_scaler.shift);
    REQUIRE(back.x_scaler.scale == ckpt.x_scaler.scale);
    REQUIRE(back.y_scaler.shift == ckpt.y_scaler.shift);
    REQUIRE(back.y_scaler.scale == ckpt.y_scaler.scale);
    std::filesystem::remove_all(dir);
}
