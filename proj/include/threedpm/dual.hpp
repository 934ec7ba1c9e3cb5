#pragma once

#include <cmath>
#include <type_traits>

namespace threedpm {

/// Forward-mode dual number v + d*eps with eps^2 = 0.
template <class T>
struct Dual {
    T v{};
    T d{};

    constexpr Dual() = default;
    constexpr Dual(T value) : v(value) {}  // NOLINT: implicit lift of constants
    constexpr Dual(T value, T tangent) : v(value), d(tangent) {}

    constexpr Dual& operator+=(const Dual& o) {
        v += o.v;
        d += o.d;
        return *this;
    }
    constexpr Dual& operator-=(const Dual& o) {
        v -= o.v;
        d -= o.d;
        return *this;
    }
    constexpr Dual& operator*=(const Dual& o) {
        d = d * o.v + v * o.d;
        v *= o.v;
        return *this;
    }
    constexpr Dual& operator/=(const Dual& o) {
        const T inv = T(1) / o.v;
        d = (d - v * inv * o.d) * inv;
        v *= inv;
        return *this;
    }
};

template <class T> constexpr Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> constexpr Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> constexpr Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> constexpr Dual<T> operator/(Dual<T> a, const Dual<T>& b) { return a /= b; }
template <class T> constexpr Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }

template <class T> constexpr Dual<T> operator+(Dual<T> a, T b) { return a += Dual<T>(b); }
template <class T> constexpr Dual<T> operator+(T a, const Dual<T>& b) { return Dual<T>(a) + b; }
template <class T> constexpr Dual<T> operator-(Dual<T> a, T b) { return a -= Dual<T>(b); }
template <class T> constexpr Dual<T> operator-(T a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <class T> constexpr Dual<T> operator*(const Dual<T>& a, T b) { return {a.v * b, a.d * b}; }
template <class T> constexpr Dual<T> operator*(T a, const Dual<T>& b) { return {a * b.v, a * b.d}; }
template <class T> constexpr Dual<T> operator/(const Dual<T>& a, T b) { return {a.v / b, a.d / b}; }
template <class T> constexpr Dual<T> operator/(T a, const Dual<T>& b) { return Dual<T>(a) / b; }

template <class T> constexpr bool operator<(const Dual<T>& a, const Dual<T>& b) { return a.v < b.v; }
template <class T> constexpr bool operator>(const Dual<T>& a, const Dual<T>& b) { return a.v > b.v; }

template <class T> Dual<T> sqrt(const Dual<T>& a) {
    const T s = std::sqrt(a.v);
    return {s, a.d / (T(2) * s)};
}
template <class T> Dual<T> exp(const Dual<T>& a) {
    const T e = std::exp(a.v);
    return {e, a.d * e};
}
template <class T> Dual<T> log(const Dual<T>& a) { return {std::log(a.v), a.d / a.v}; }

template <class T> struct is_dual : std::false_type {};
template <class T> struct is_dual<Dual<T>> : std::true_type {};

/// Primal value of a plain or dual scalar.
template <class T> constexpr auto value_of(const T& x) {
    if constexpr (is_dual<T>::value)
        return x.v;
    else
        return x;
}

}  // namespace threedpm
