#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "popdyn/util/errors.hpp"

namespace popdyn::model {

enum class SplitTag : unsigned char { train, context, query };

// Per-structure regression dataset: temperature in, target vector out.
struct TaskDataset {
    std::string task_id;
    std::size_t y_dim = 1;
    std::vector<double> x;     // temperatures [deg C]
    std::vector<double> y;     // row-major, size() == x.size() * y_dim
    std::vector<SplitTag> tag; // one per pair

    std::size_t size() const { return x.size(); }

    void check() const {
        if (y.size() != x.size() * y_dim || tag.size() != x.size())
            throw DataError("TaskDataset: inconsistent sizes in task " + task_id);
    }

    std::vector<std::size_t> indices_with(SplitTag t) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < tag.size(); ++i)
            if (tag[i] == t) out.push_back(i);
        return out;
    }

    void gather(const std::vector<std::size_t>& idx, std::vector<double>& xs,
                std::vector<double>& ys) const {
        xs.clear();
        ys.clear();
        xs.reserve(idx.size());
        ys.reserve(idx.size() * y_dim);
        for (std::size_t i : idx) {
            xs.push_back(x[i]);
            for (std::size_t j = 0; j < y_dim; ++j) ys.push_back(y[i * y_dim + j]);
        }
    }
};

}  // namespace popdyn::model
