#include "bistab/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bistab {

namespace {

std::vector<double> quadratic_roots(double a, double b, double c) {
  if (a == 0.0) {
    if (b == 0.0) return {};
    return {-c / b};
  }
  const double disc = b * b - 4.0 * a * c;
  const double scale = std::max(b * b, std::abs(4.0 * a * c));
  if (disc < -1e-14 * scale) return {};
  if (disc <= 1e-14 * scale) return {-b / (2.0 * a)};
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  if (q == 0.0) return {0.0};
  return {q / a, c / q};
}

std::vector<double> depressed_cubic_roots(double b, double c, double d) {
  // x^3 + b x^2 + c x + d with x = t - b/3
  const double shift = b / 3.0;
  const double p = c - b * b / 3.0;
  const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
  const double hq = q / 2.0;
  const double tp = p / 3.0;
  const double disc = hq * hq + tp * tp * tp;
  const double scale = std::max({hq * hq, std::abs(tp * tp * tp), 1e-300});
  std::vector<double> t;
  if (std::abs(disc) <= 1e-13 * scale) {
    if (std::abs(p) <= 1e-300) {
      t = {0.0};
    } else {
      t = {3.0 * q / p, -1.5 * q / p};
    }
  } else if (disc > 0.0) {
    const double s = std::sqrt(disc);
    const double u = std::cbrt(-hq + (hq <= 0.0 ? s : -s));
    t = {u == 0.0 ? 0.0 : u - tp / u};
  } else {
    const double r = std::sqrt(-tp);
    const double arg = std::clamp(-hq / (r * r * r), -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) t.push_back(2.0 * r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0));
  }
  for (double& v : t) v -= shift;
  return t;
}

}  // namespace

double cubic_value(const std::array<double, 4>& c, double x) { return ((c[3] * x + c[2]) * x + c[1]) * x + c[0]; }

double cubic_derivative(const std::array<double, 4>& c, double x) { return (3.0 * c[3] * x + 2.0 * c[2]) * x + c[1]; }

std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0) {
  const std::array<double, 4> c{c0, c1, c2, c3};
  const double big = std::max({std::abs(c0), std::abs(c1), std::abs(c2), std::abs(c3)});
  if (big == 0.0) return {};

  std::vector<double> roots;
  if (std::abs(c3) <= 1e-13 * big) {
    roots = quadratic_roots(c2, c1, c0);
  } else {
    roots = depressed_cubic_roots(c2 / c3, c1 / c3, c0 / c3);
  }

  for (double& x : roots) {
    double fx = std::abs(cubic_value(c, x));
    for (int it = 0; it < 60 && fx > 0.0; ++it) {
      const double dfx = cubic_derivative(c, x);
      if (dfx == 0.0) break;
      const double next = x - cubic_value(c, x) / dfx;
      const double fn = std::abs(cubic_value(c, next));
      if (!(fn < fx)) break;
      x = next;
      fx = fn;
    }
  }
  std::sort(roots.begin(), roots.end());
  std::vector<double> distinct;
  for (double x : roots) {
    if (!distinct.empty() && std::abs(x - distinct.back()) <= 1e-9 * std::max(1.0, std::abs(x))) continue;
    distinct.push_back(x);
  }
  return distinct;
}

double monic_cubic_discriminant(double c3, double c2, double c1, double c0) {
  const double b = c2 / c3, c = c1 / c3, d = c0 / c3;
  return 18.0 * b * c * d - 4.0 * b * b * b * d + b * b * c * c - 4.0 * c * c * c - 27.0 * d * d;
}

}  // namespace bistab
