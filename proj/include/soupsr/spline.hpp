#pragma once

#include <cstddef>
#include <vector>

#include "soupsr/errors.hpp"

namespace soupsr {

// 1D interpolating cubic spline on uniformly spaced knots 0..n-1 with
// not-a-knot end conditions (the first two and last two intervals each share
// one cubic). Requires n >= 4. Reproduces polynomials up to degree 3 on the
// interior and degree 1 everywhere.

/// Computes the spline's second derivatives ("moments") at the knots.
/// With unit knot spacing the not-a-knot conditions collapse to
/// m[1] = y0 - 2*y1 + y2 and m[n-2] = y[n-3] - 2*y[n-2] + y[n-1]; the rest is
/// a tridiagonal solve.
template <typename T>
inline void spline_moments(const T* y, std::size_t n, T* m, std::vector<T>& scratch) {
    if (n < 4) throw dimension_error("cubic spline requires at least 4 samples");

    m[1] = y[0] - T(2) * y[1] + y[2];
    m[n - 2] = y[n - 3] - T(2) * y[n - 2] + y[n - 1];

    // Thomas algorithm for m[2..n-3]:
    //   m[i-1] + 4 m[i] + m[i+1] = 6 (y[i-1] - 2 y[i] + y[i+1]),  i = 2..n-3
    const std::size_t k = n - 4;  // number of unknowns
    if (k > 0) {
        scratch.resize(2 * k);
        T* c = scratch.data();      // superdiagonal multipliers
        T* d = scratch.data() + k;  // rhs
        for (std::size_t j = 0; j < k; ++j) {
            const std::size_t i = j + 2;
            d[j] = T(6) * (y[i - 1] - T(2) * y[i] + y[i + 1]);
        }
        d[0] -= m[1];
        d[k - 1] -= m[n - 2];

        T diag = T(4);
        c[0] = T(1) / diag;
        d[0] /= diag;
        for (std::size_t j = 1; j < k; ++j) {
            diag = T(4) - c[j - 1];
            c[j] = T(1) / diag;
            d[j] = (d[j] - d[j - 1]) / diag;
        }
        for (std::size_t j = k - 1; j > 0; --j) d[j - 1] -= c[j - 1] * d[j];
        for (std::size_t j = 0; j < k; ++j) m[j + 2] = d[j];
    }

    m[0] = T(2) * m[1] - m[2];
    m[n - 1] = T(2) * m[n - 2] - m[n - 3];
}

/// Evaluates the spline at x in [0, n-1] given data y and moments m. x is
/// clamped into the knot range.
template <typename T>
inline T spline_eval(const T* y, const T* m, std::size_t n, T x) {
    if (x <= T(0)) x = T(0);
    const T last = T(n - 1);
    if (x >= last) x = last;
    std::size_t i = static_cast<std::size_t>(x);
    if (i >= n - 1) i = n - 2;
    const T t = x - T(i);
    const T u = T(1) - t;
    return u * y[i] + t * y[i + 1] +
           ((u * u * u - u) * m[i] + (t * t * t - t) * m[i + 1]) / T(6);
}

} // namespace soupsr
