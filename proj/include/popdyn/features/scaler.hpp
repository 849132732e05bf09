#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "popdyn/util/errors.hpp"

namespace popdyn::feat {

// Per-dimension affine transform z = (v - shift) / scale.
struct AffineScaler {
    std::vector<double> shift;
    std::vector<double> scale;

    std::size_t dim() const { return shift.size(); }

    void check() const {
        if (shift.size() != scale.size()) throw DataError("AffineScaler: size mismatch");
        for (double s : scale)
            if (!(s > 0.0)) throw DataError("AffineScaler: scale entries must be > 0");
    }

    void apply(std::span<double> rows) const {
        const std::size_t d = dim();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t j = i % d;
            rows[i] = (rows[i] - shift[j]) / scale[j];
        }
    }

    void invert(std::span<double> rows) const {
        const std::size_t d = dim();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t j = i % d;
            rows[i] = rows[i] * scale[j] + shift[j];
        }
    }

    std::vector<double> applied(std::vector<double> rows) const {
        apply(rows);
        return rows;
    }
    std::vector<double> inverted(std::vector<double> rows) const {
        invert(rows);
        return rows;
    }

    static AffineScaler identity(std::size_t d) {
        AffineScaler s;
        s.shift.assign(d, 0.0);
        s.scale.assign(d, 1.0);
        return s;
    }

    // zero mean / unit variance per dimension
    static AffineScaler fit_standardize(std::span<const double> rows, std::size_t d) {
        const std::size_t n = rows.size() / d;
        if (n == 0) throw DataError("AffineScaler: no data");
        AffineScaler s;
        s.shift.assign(d, 0.0);
        s.scale.assign(d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) s.shift[j] += rows[i * d + j];
        for (std::size_t j = 0; j < d; ++j) s.shift[j] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                const double c = rows[i * d + j] - s.shift[j];
                s.scale[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            s.scale[j] = std::sqrt(s.scale[j] / static_cast<double>(n));
            if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;  // degenerate dimension
        }
        return s;
    }

    // maps the observed [min, max] per dimension onto [-span, span]
    static AffineScaler fit_range(std::span<const double> rows, std::size_t d, double span = 0.9) {
        const std::size_t n = rows.size() / d;
        if (n == 0) throw DataError("AffineScaler: no data");
        std::vector<double> lo(d, rows[0]), hi(d, rows[0]);
        for (std::size_t j = 0; j < d; ++j) lo[j] = hi[j] = rows[j];
        for (std::size_t i = 1; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                lo[j] = std::min(lo[j], rows[i * d + j]);
                hi[j] = std::max(hi[j], rows[i * d + j]);
            }
        AffineScaler s;
        s.shift.resize(d);
        s.scale.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            s.shift[j] = 0.5 * (lo[j] + hi[j]);
            const double half = 0.5 * (hi[j] - lo[j]);
            s.scale[j] = half > 0.0 ? half / span : 1.0;  // degenerate dimension
        }
        return s;
    }
};

}  // namespace popdyn::feat
