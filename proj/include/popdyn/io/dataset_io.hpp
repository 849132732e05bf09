#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "popdyn/exp/population.hpp"
#include "popdyn/models/dataset.hpp"
#include "popdyn/util/csv.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::io {

// One CSV per structure: header `temperature,target` (or target_0.. for
// vector targets), one row per pair. Test-structure files list the
// context rows first, then the queries; counts live in the manifest.
inline std::string task_csv(const model::TaskDataset& task) {
    std::string out = "temperature";
    if (task.y_dim == 1) {
        out += ",target";
    } else {
        for (std::size_t j = 0; j < task.y_dim; ++j) out += ",target_" + std::to_string(j);
    }
    out += "\n";
    for (std::size_t i = 0; i < task.size(); ++i) {
        out += util::format_double(task.x[i]);
        for (std::size_t j = 0; j < task.y_dim; ++j)
            out += "," + util::format_double(task.y[i * task.y_dim + j]);
        out += "\n";
    }
    return out;
}

inline model::TaskDataset task_from_csv(const std::string& path, const std::string& task_id,
                                        std::size_t n_context = 0) {
    const auto table = util::read_csv(path);
    if (table.header.empty() || table.header[0] != "temperature")
        throw DataError("dataset csv " + path + ": expected 'temperature' as first column");
    model::TaskDataset task;
    task.task_id = task_id;
    task.y_dim = table.header.size() - 1;
    if (task.y_dim < 1) throw DataError("dataset csv " + path + ": no target columns");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        if (row.size() != table.header.size())
            throw DataError("dataset csv " + path + ": ragged row " + std::to_string(i + 2));
        task.x.push_back(util::parse_double(row[0], path));
        for (std::size_t j = 1; j < row.size(); ++j)
            task.y.push_back(util::parse_double(row[j], path));
        task.tag.push_back(i < n_context ? model::SplitTag::context : model::SplitTag::query);
    }
    if (n_context == 0) task.tag.assign(task.x.size(), model::SplitTag::train);
    task.check();
    return task;
}

struct DatasetDir {
    std::vector<model::TaskDataset> train;
    std::vector<model::TaskDataset> validation;
    std::vector<model::TaskDataset> test;
    nlohmann::json manifest;
};

inline DatasetDir load_dataset_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path))
        throw DataError("dataset directory " + dir + " has no manifest.json");
    DatasetDir out;
    {
        std::ifstream in(manifest_path);
        try {
            in >> out.manifest;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset manifest parse error: " + std::string(e.what()));
        }
    }
    const auto& files = out.manifest.at("structures");
    for (const auto& entry : files) {
        const std::string name = entry.at("file").get<std::string>();
        const std::string role = entry.at("role").get<std::string>();
        const std::size_t n_ctx =
            entry.contains("n_context") ? entry.at("n_context").get<std::size_t>() : 0;
        auto task = task_from_csv((root / name).string(), name.substr(0, name.size() - 4), n_ctx);
        if (role == "train")
            out.train.push_back(std::move(task));
        else if (role == "validation")
            out.validation.push_back(std::move(task));
        else if (role == "test")
            out.test.push_back(std::move(task));
        else
            throw DataError("dataset manifest: unknown role '" + role + "'");
    }
    if (out.train.empty()) throw DataError("dataset directory " + dir + " has no training structures");
    return out;
}

}  // namespace popdyn::io
