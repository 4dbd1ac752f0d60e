#include "bistab/imd.hpp"

#include <cmath>

#include "bistab/error.hpp"

namespace bistab {

namespace {
const std::complex<double> kI(0.0, 1.0);
}

ImdOperatingPoint imd_operating_point(const RdPhysical& phys, ImdBranch branch) {
  const auto roots = rd_roots(RdParams::from_physical(phys));
  std::vector<RdSteadyState> stable;
  for (const auto& s : roots.states)
    if (s.stability == Stability::stable) stable.push_back(s);
  if (stable.empty()) throw Error(ErrorCode::non_convergence, "no stable RD steady state at the operating point");
  const RdSteadyState* pick = &stable.front();
  if (stable.size() > 1) {
    if (branch == ImdBranch::unspecified)
      throw Error(ErrorCode::ambiguous_branch, "bistable operating point: choose the high_z or low_z branch");
    pick = branch == ImdBranch::high_z ? &stable.back() : &stable.front();
  }
  ImdOperatingPoint op;
  op.pz = pick->z * phys.pz0;
  op.omega_dk = phys.omega_d - phys.omega_k * op.pz;
  op.p_plus = kI * phys.omega1 * op.pz / (kI * op.omega_dk - 1.0 / phys.t2);
  return op;
}

ImdState imd_state(const ImdOperatingPoint& op, double omega_a, double omega_t, double t1, double t2) {
  if (!(t1 > 0.0) || !(t2 > 0.0)) throw Error(ErrorCode::invalid_argument, "T1 and T2 must be positive");
  ImdState s;
  s.w1 = kI * op.omega_dk - 1.0 / t2;
  s.w2 = 0.5 * omega_a * omega_a * op.p_plus * op.p_plus / (2.0 * kI * omega_t - 1.0 / t1);
  s.trace = -2.0 / t2;
  s.determinant = std::norm(s.w1) - std::norm(s.w2);
  const std::complex<double> root = std::sqrt(std::complex<double>(0.25 * s.trace * s.trace - s.determinant, 0.0));
  s.lambda_plus = 0.5 * s.trace + root;
  s.lambda_minus = 0.5 * s.trace - root;
  s.weak_anisotropy_violated = std::abs(s.w2) > 0.5 / t2;
  return s;
}

double imd_gain_at(const ImdState& s, double gamma1, double omega) {
  const std::complex<double> den = (s.lambda_plus - kI * omega) * (s.lambda_minus - kI * omega);
  if (std::abs(den) == 0.0) throw Error(ErrorCode::singular_response, "IMD gain diverges at omega = " + std::to_string(omega));
  return std::norm(2.0 * gamma1 * s.w2 / den);
}

ImdSpectrum imd_gain(const ImdOperatingPoint& op, double omega_a, double omega_t, double t1, double t2, double gamma1,
                     std::vector<double> omega_grid) {
  ImdSpectrum out;
  out.state = imd_state(op, omega_a, omega_t, t1, t2);
  if (omega_grid.empty()) {
    const int n = 1001;
    omega_grid.resize(n);
    for (int k = 0; k < n; ++k) omega_grid[k] = (-10.0 + 20.0 * k / (n - 1)) / t2;
  }
  out.omega = std::move(omega_grid);
  out.gain.reserve(out.omega.size());
  for (double w : out.omega) out.gain.push_back(imd_gain_at(out.state, gamma1, w));
  return out;
}

}  // namespace bistab
