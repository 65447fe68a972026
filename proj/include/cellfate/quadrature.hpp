#pragma once

#include <array>
#include <cmath>
#include <utility>

namespace cellfate::quadrature {

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                              0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
std::pair<double, double> gk15(F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[j];
    const double f1 = f(center - dx);
    const double f2 = f(center + dx);
    kronrod += kWgk[j] * (f1 + f2);
    if (j % 2 == 1) gauss += kWg[j / 2] * (f1 + f2);
  }
  return {kronrod * half, std::fabs((kronrod - gauss) * half)};
}

template <class F>
double adapt(F& f, double a, double b, double whole, double err, double tol, int depth) {
  if (err <= tol || depth <= 0) return whole;
  const double mid = 0.5 * (a + b);
  const auto [left, left_err] = gk15(f, a, mid);
  const auto [right, right_err] = gk15(f, mid, b);
  return adapt(f, a, mid, left, left_err, 0.5 * tol, depth - 1) + adapt(f, mid, b, right, right_err, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b] to an absolute tolerance.
template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10, int max_depth = 40) {
  const auto [whole, err] = detail::gk15(f, a, b);
  return detail::adapt(f, a, b, whole, err, abs_tol, max_depth);
}

}  // namespace cellfate::quadrature
