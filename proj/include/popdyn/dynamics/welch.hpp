#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "popdyn/dynamics/frf.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::dyn {

// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw ConfigError("fft_radix2: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> t = a[i + j + len / 2] * w;
                a[i + j] = u + t;
                a[i + j + len / 2] = u - t;
                w *= wlen;
            }
        }
    }
}

struct WelchConfig {
    std::size_t segment_length = 16384;  // power of two
    double overlap = 0.5;                // fraction of segment_length
};

// Welch H1 estimator: S_xy / S_xx from Hann-windowed overlapped segments.
// Window and scaling constants cancel in the ratio, so none are applied.
// Lines where S_xx vanishes are excluded from the output.
inline FrfCurve estimate_frf_h1(const std::vector<double>& input,
                                const std::vector<double>& output, double dt,
                                const WelchConfig& cfg = {}) {
    if (input.size() != output.size()) throw DataError("estimate_frf_h1: signal lengths differ");
    if (!(dt > 0.0)) throw ConfigError("estimate_frf_h1: dt must be > 0");
    const std::size_t len = cfg.segment_length;
    if (len == 0 || (len & (len - 1)) != 0)
        throw ConfigError("estimate_frf_h1: segment_length must be a power of two");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0))
        throw ConfigError("estimate_frf_h1: overlap must be in [0, 1)");
    const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(
        std::llround(static_cast<double>(len) * (1.0 - cfg.overlap))));
    if (input.size() < len + hop)
        throw DataError("estimate_frf_h1: signals too short for two segments");

    std::vector<double> window(len);
    for (std::size_t i = 0; i < len; ++i)
        window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(len)));

    const std::size_t n_lines = len / 2 + 1;
    std::vector<double> s_xx(n_lines, 0.0);
    std::vector<std::complex<double>> s_xy(n_lines, {0.0, 0.0});
    std::vector<std::complex<double>> xf(len), yf(len);

    std::size_t n_segments = 0;
    for (std::size_t start = 0; start + len <= input.size(); start += hop) {
        for (std::size_t i = 0; i < len; ++i) {
            xf[i] = {input[start + i] * window[i], 0.0};
            yf[i] = {output[start + i] * window[i], 0.0};
        }
        fft_radix2(xf);
        fft_radix2(yf);
        for (std::size_t i = 0; i < n_lines; ++i) {
            s_xx[i] += std::norm(xf[i]);
            s_xy[i] += std::conj(xf[i]) * yf[i];
        }
        ++n_segments;
    }
    if (n_segments < 2) throw DataError("estimate_frf_h1: fewer than two segments");

    FrfCurve curve;
    curve.freqs_hz.reserve(n_lines);
    curve.magnitude.reserve(n_lines);
    const double df = 1.0 / (static_cast<double>(len) * dt);
    for (std::size_t i = 0; i < n_lines; ++i) {
        if (s_xx[i] == 0.0) continue;  // flagged line: no excitation power
        const double mag = std::abs(s_xy[i]) / s_xx[i];
        if (!std::isfinite(mag) || !(mag > 0.0)) continue;
        curve.freqs_hz.push_back(static_cast<double>(i) * df);
        curve.magnitude.push_back(mag);
    }
    if (curve.freqs_hz.empty()) throw NumericsError("estimate_frf_h1: no usable spectral lines");
    return curve;
}

}  // namespace popdyn::dyn
