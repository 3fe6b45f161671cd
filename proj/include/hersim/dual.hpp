#pragma once

#include <cmath>

namespace hersim {

// Forward-mode dual number: value + epsilon * derivative.
template <typename T>
struct Dual
{
    T value{};
    T deriv{};

    constexpr Dual() = default;
    constexpr Dual(T v) : value(v) {}  // NOLINT: implicit lift of constants
    constexpr Dual(T v, T d) : value(v), deriv(d) {}

    static constexpr Dual variable(T v) { return {v, T(1)}; }

    Dual& operator+=(const Dual& o) { value += o.value; deriv += o.deriv; return *this; }
    Dual& operator-=(const Dual& o) { value -= o.value; deriv -= o.deriv; return *this; }
    Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
    Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

    friend constexpr Dual operator+(const Dual& a, const Dual& b) { return {a.value + b.value, a.deriv + b.deriv}; }
    friend constexpr Dual operator-(const Dual& a, const Dual& b) { return {a.value - b.value, a.deriv - b.deriv}; }
    friend constexpr Dual operator-(const Dual& a) { return {-a.value, -a.deriv}; }
    friend constexpr Dual operator*(const Dual& a, const Dual& b)
    {
        return {a.value * b.value, a.deriv * b.value + a.value * b.deriv};
    }
    friend constexpr Dual operator/(const Dual& a, const Dual& b)
    {
        return {a.value / b.value, (a.deriv * b.value - a.value * b.deriv) / (b.value * b.value)};
    }
};

template <typename T>
Dual<T> sqrt(const Dual<T>& x)
{
    const T s = std::sqrt(x.value);
    return {s, x.deriv / (T(2) * s)};
}

inline double value_of(double x) { return x; }
template <typename T>
T value_of(const Dual<T>& x) { return x.value; }

// Bessel functions of the first kind / modified second kind, orders 0 and 1,
// lifted to dual numbers through J0' = -J1, J1' = J0 - J1/x, K0' = -K1,
// K1' = -K0 - K1/x.
inline double bessel_j0(double x) { return std::cyl_bessel_j(0.0, x); }
inline double bessel_j1(double x) { return std::cyl_bessel_j(1.0, x); }
inline double bessel_k0(double x) { return std::cyl_bessel_k(0.0, x); }
inline double bessel_k1(double x) { return std::cyl_bessel_k(1.0, x); }

inline Dual<double> bessel_j0(const Dual<double>& x)
{
    return {bessel_j0(x.value), -bessel_j1(x.value) * x.deriv};
}
inline Dual<double> bessel_j1(const Dual<double>& x)
{
    const double j0 = bessel_j0(x.value);
    const double j1 = bessel_j1(x.value);
    return {j1, (j0 - j1 / x.value) * x.deriv};
}
inline Dual<double> bessel_k0(const Dual<double>& x)
{
    return {bessel_k0(x.value), -bessel_k1(x.value) * x.deriv};
}
inline Dual<double> bessel_k1(const Dual<double>& x)
{
    const double k0 = bessel_k0(x.value);
    const double k1 = bessel_k1(x.value);
    return {k1, (-k0 - k1 / x.value) * x.deriv};
}

}  // namespace hersim
