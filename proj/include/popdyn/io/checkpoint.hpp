#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "popdyn/ad/param_vector.hpp"
#include "popdyn/features/pca.hpp"
#include "popdyn/features/scaler.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::io {

using nlohmann::json;

// Model checkpoint: layout header, flat parameter values, model config,
// seed and the fitted data transforms. JSON doubles round-trip exactly.
struct Checkpoint {
    std::string kind;  // "maml-mlp" | "cnp"
    ad::ParamVector theta;
    json model_config;
    std::uint64_t seed = 0;
    feat::AffineScaler x_scaler;
    feat::AffineScaler y_scaler;
    bool has_pca = false;
    feat::PcaBasis pca;
};

inline json scaler_to_json(const feat::AffineScaler& s) {
    return json{{"shift", s.shift}, {"scale", s.scale}};
}

inline feat::AffineScaler scaler_from_json(const json& j) {
    feat::AffineScaler s;
    s.shift = j.at("shift").get<std::vector<double>>();
    s.scale = j.at("scale").get<std::vector<double>>();
    s.check();
    return s;
}

inline json pca_to_json(const feat::PcaBasis& b) {
    std::vector<double> mean(b.mean.data(), b.mean.data() + b.mean.size());
    std::vector<double> comps(b.components.data(),
                              b.components.data() + b.components.size());  // column-major
    return json{{"mean", mean},
                {"components", comps},
                {"rows", b.components.rows()},
                {"cols", b.components.cols()},
                {"explained_ratio", b.explained_ratio}};
}

inline feat::PcaBasis pca_from_json(const json& j) {
    feat::PcaBasis b;
    const auto mean = j.at("mean").get<std::vector<double>>();
    b.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto comps = j.at("components").get<std::vector<double>>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(comps.size()) != rows * cols)
        throw DataError("checkpoint: malformed pca basis");
    b.components = Eigen::Map<const Eigen::MatrixXd>(comps.data(), rows, cols);
    b.explained_ratio = j.at("explained_ratio").get<std::vector<double>>();
    return b;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json j;
    j["kind"] = ckpt.kind;
    j["seed"] = ckpt.seed;
    j["layout"] = json::array();
    for (const auto& s : ckpt.theta.layout()->slices())
        j["layout"].push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
    j["values"] = ckpt.theta.values();
    j["model_config"] = ckpt.model_config;
    j["x_scaler"] = scaler_to_json(ckpt.x_scaler);
    j["y_scaler"] = scaler_to_json(ckpt.y_scaler);
    if (ckpt.has_pca) j["pca"] = pca_to_json(ckpt.pca);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("checkpoint parse error in " + path + ": " + e.what());
    }
    Checkpoint ckpt;
    ckpt.kind = j.at("kind").get<std::string>();
    ckpt.seed = j.at("seed").get<std::uint64_t>();
    auto layout = std::make_shared<ad::ParamLayout>();
    for (const auto& js : j.at("layout"))
        layout->add(js.at("name").get<std::string>(), js.at("rows").get<std::size_t>(),
                    js.at("cols").get<std::size_t>());
    ckpt.theta = ad::ParamVector(layout, j.at("values").get<std::vector<double>>());
    ckpt.model_config = j.at("model_config");
    ckpt.x_scaler = scaler_from_json(j.at("x_scaler"));
    ckpt.y_scaler = scaler_from_json(j.at("y_scaler"));
    if (j.contains("pca")) {
        ckpt.has_pca = true;
        ckpt.pca = pca_from_json(j.at("pca"));
    }
    return ckpt;
}

}  // namespace popdyn::io
