#pragma once

// Forward-mode dual numbers, single tangent direction. Nesting
// Dual<Dual<double>> yields second derivatives, which the stabilization
// term needs when differentiating through the constraint Jacobian.

#include <cmath>
#include <type_traits>

namespace snde {

template <class T>
struct Dual {
    T v{};  ///< primal value
    T d{};  ///< tangent

    Dual() = default;
    Dual(T value) : v(value) {}
    Dual(T value, T tangent) : v(value), d(tangent) {}
};

template <class T> Dual<T> operator+(Dual<T> a, Dual<T> b) { return {a.v + b.v, a.d + b.d}; }
template <class T> Dual<T> operator-(Dual<T> a, Dual<T> b) { return {a.v - b.v, a.d - b.d}; }
template <class T> Dual<T> operator-(Dual<T> a) { return {-a.v, -a.d}; }
template <class T> Dual<T> operator*(Dual<T> a, Dual<T> b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
template <class T> Dual<T> operator/(Dual<T> a, Dual<T> b) {
    T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
}

template <class T> Dual<T> operator+(Dual<T> a, double b) { return {a.v + b, a.d}; }
template <class T> Dual<T> operator+(double a, Dual<T> b) { return {a + b.v, b.d}; }
template <class T> Dual<T> operator-(Dual<T> a, double b) { return {a.v - b, a.d}; }
template <class T> Dual<T> operator-(double a, Dual<T> b) { return {a - b.v, -b.d}; }
template <class T> Dual<T> operator*(Dual<T> a, double b) { return {a.v * b, a.d * b}; }
template <class T> Dual<T> operator*(double a, Dual<T> b) { return {a * b.v, a * b.d}; }
template <class T> Dual<T> operator/(Dual<T> a, double b) { return {a.v / b, a.d / b}; }
template <class T> Dual<T> operator/(double a, Dual<T> b) { return Dual<T>(a) / b; }

template <class T> Dual<T>& operator+=(Dual<T>& a, Dual<T> b) { a = a + b; return a; }
template <class T> Dual<T>& operator-=(Dual<T>& a, Dual<T> b) { a = a - b; return a; }
template <class T> Dual<T>& operator*=(Dual<T>& a, Dual<T> b) { a = a * b; return a; }

template <class T> bool operator<(Dual<T> a, Dual<T> b) { return a.v < b.v; }
template <class T> bool operator>(Dual<T> a, Dual<T> b) { return a.v > b.v; }

using std::cos;
using std::exp;
using std::log;
using std::pow;
using std::sin;
using std::sqrt;

template <class T> Dual<T> sin(Dual<T> a) { using std::cos; using std::sin; return {sin(a.v), a.d * cos(a.v)}; }
template <class T> Dual<T> cos(Dual<T> a) { using std::cos; using std::sin; return {cos(a.v), -a.d * sin(a.v)}; }
template <class T> Dual<T> exp(Dual<T> a) { using std::exp; T e = exp(a.v); return {e, a.d * e}; }
template <class T> Dual<T> sqrt(Dual<T> a) {
    using std::sqrt;
    T r = sqrt(a.v);
    return {r, a.d / (2.0 * r)};
}
template <class T> Dual<T> log(Dual<T> a) { using std::log; return {log(a.v), a.d / a.v}; }

/// Recursively strip tangents down to the underlying double.
inline double primal(double x) { return x; }
template <class T>
double primal(const Dual<T>& x) { return primal(x.v); }

using Dual1 = Dual<double>;
using Dual2 = Dual<Dual<double>>;

}  // namespace snde
