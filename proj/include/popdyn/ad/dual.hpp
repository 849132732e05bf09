#pragma once

#include <cmath>

namespace popdyn::ad {

// First-order dual number; drives forward-over-reverse Hessian-vector
// products when used as the tape scalar.
struct Dual {
    double v = 0.0;  // value
    double d = 0.0;  // tangent

    Dual() = default;
    Dual(double value) : v(value), d(0.0) {}
    Dual(double value, double tangent) : v(value), d(tangent) {}

    Dual& operator+=(const Dual& o) {
        v += o.v;
        d += o.d;
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        v -= o.v;
        d -= o.d;
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        d = d * o.v + v * o.d;
        v *= o.v;
        return *this;
    }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual operator/(const Dual& a, const Dual& b) {
    const double inv = 1.0 / b.v;
    return {a.v * inv, (a.d - a.v * b.d * inv) * inv};
}

inline Dual tanh(const Dual& a) {
    const double t = std::tanh(a.v);
    return {t, (1.0 - t * t) * a.d};
}
inline Dual exp(const Dual& a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }

inline bool isfinite(const Dual& a) { return std::isfinite(a.v) && std::isfinite(a.d); }
inline bool isfinite(double a) { return std::isfinite(a); }

// Uniform accessors so the tape can be written once for both scalars.
inline double value_part(double x) { return x; }
inline double value_part(const Dual& x) { return x.v; }
inline double tangent_part(double) { return 0.0; }
inline double tangent_part(const Dual& x) { return x.d; }

template <typename S>
inline S make_scalar(double value, double tangent);
template <>
inline double make_scalar<double>(double value, double) {
    return value;
}
template <>
inline Dual make_scalar<Dual>(double value, double tangent) {
    return {value, tangent};
}

}  // namespace popdyn::ad
