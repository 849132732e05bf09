#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "popdyn/util/errors.hpp"

namespace popdyn::ad {

struct ParamSlice {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return rows * cols; }
};

// Named, contiguous partition of a flat parameter vector. Offsets are
// assigned in declaration order, so the slices cover the vector exactly
// once by construction.
class ParamLayout {
public:
    ParamLayout() = default;
    ParamLayout(std::initializer_list<std::tuple<std::string, std::size_t, std::size_t>> specs) {
        for (const auto& [name, rows, cols] : specs) add(name, rows, cols);
    }

    void add(const std::string& name, std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) throw DataError("ParamLayout: empty slice " + name);
        slices_.push_back({name, rows, cols, total_});
        total_ += rows * cols;
    }

    const std::vector<ParamSlice>& slices() const { return slices_; }
    std::size_t total_size() const { return total_; }

    const ParamSlice& slice(std::size_t i) const { return slices_.at(i); }
    std::size_t count() const { return slices_.size(); }

    const ParamSlice& by_name(const std::string& name) const {
        for (const auto& s : slices_)
            if (s.name == name) return s;
        throw DataError("ParamLayout: no slice named " + name);
    }

    bool operator==(const ParamLayout& o) const {
        if (slices_.size() != o.slices_.size() || total_ != o.total_) return false;
        for (std::size_t i = 0; i < slices_.size(); ++i) {
            const auto& a = slices_[i];
            const auto& b = o.slices_[i];
            if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
        }
        return true;
    }

private:
    std::vector<ParamSlice> slices_;
    std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat trainable-parameter store with a shared layout.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(LayoutPtr layout)
        : layout_(std::move(layout)), values_(layout_->total_size(), 0.0) {}
    ParamVector(LayoutPtr layout, std::vector<double> values)
        : layout_(std::move(layout)), values_(std::move(values)) {
        if (values_.size() != layout_->total_size())
            throw DataError("ParamVector: value count does not match layout");
    }

    const LayoutPtr& layout() const { return layout_; }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    std::span<const double> slice(std::size_t i) const {
        const auto& s = layout_->slice(i);
        return {values_.data() + s.offset, s.size()};
    }
    std::span<double> slice(std::size_t i) {
        const auto& s = layout_->slice(i);
        return {values_.data() + s.offset, s.size()};
    }

    void check_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) throw NumericsError("ParamVector: non-finite parameter value");
    }

    // theta -= step * direction
    void axpy(double step, const std::vector<double>& direction) {
        if (direction.size() != values_.size())
            throw DataError("ParamVector::axpy: size mismatch");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += step * direction[i];
    }

private:
    LayoutPtr layout_;
    std::vector<double> values_;
};

}  // namespace popdyn::ad
