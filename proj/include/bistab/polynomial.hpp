#pragma once

#include <array>
#include <vector>

namespace bistab {

/// Distinct real roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending. Repeated
/// roots are reported once. A leading coefficient that is negligible relative
/// to the others drops the degree. Each root is Newton-polished on the full
/// polynomial.
std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0);

double cubic_value(const std::array<double, 4>& c, double x);  // c[k] multiplies x^k
double cubic_derivative(const std::array<double, 4>& c, double x);

/// Discriminant of the monic cubic obtained by dividing through by c3.
double monic_cubic_discriminant(double c3, double c2, double c1, double c0);

}  // namespace bistab
