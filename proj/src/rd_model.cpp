#include "bistab/rd_model.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "bistab/error.hpp"
#include "bistab/polynomial.hpp"

namespace bistab {

namespace {

constexpr double kClampTol = 1e-9;

double jacobian_max_real(double delta, double kappa, double a, double r, double z, std::complex<double> p) {
  const double u = delta - kappa * z;
  Eigen::Matrix3d j;
  j << -1.0, -u, kappa * p.imag(),  //
      u, -1.0, -kappa * p.real() - a,  //
      0.0, a, -1.0 / r;
  const Eigen::EigenSolver<Eigen::Matrix3d> es(j, false);
  return es.eigenvalues().real().maxCoeff();
}

}  // namespace

RdParams RdParams::from_physical(const RdPhysical& phys) {
  if (!(phys.t1 > 0.0) || !(phys.t2 > 0.0)) throw Error(ErrorCode::invalid_argument, "T1 and T2 must be positive");
  RdParams p;
  const double k = phys.omega_k * phys.t2 * phys.pz0;
  p.D = k * k / 16.0;
  p.W = phys.omega1 * phys.omega1 * phys.t1 * phys.t2 / 2.0;
  p.delta = phys.omega_d * phys.t2;
  p.pull = k < 0.0 ? -1.0 : 1.0;
  p.t1_over_t2 = phys.t1 / phys.t2;
  p.physical = phys;
  return p;
}

double RdParams::kappa() const { return pull * 4.0 * std::sqrt(D); }

double RdParams::drive() const { return std::sqrt(2.0 * W / t1_over_t2); }

void RdParams::validate() const {
  if (!(D >= 0.0)) throw Error(ErrorCode::invalid_argument, "D must be nonnegative");
  if (!(W >= 0.0)) throw Error(ErrorCode::invalid_argument, "W must be nonnegative");
  if (!std::isfinite(delta)) throw Error(ErrorCode::invalid_argument, "delta must be finite");
  if (!(t1_over_t2 > 0.0)) throw Error(ErrorCode::invalid_argument, "T1/T2 must be positive");
  if (physical) {
    const RdParams ref = from_physical(*physical);
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    if (!close(D, ref.D) || !close(W, ref.W) || !close(delta, ref.delta) || pull != ref.pull)
      throw Error(ErrorCode::invalid_argument, "physical and dimensionless RD parameters disagree");
  }
}

double rd_f(double D, double W, double delta, double z) {
  const double u = delta - 4.0 * std::sqrt(D) * z;
  return z * (1.0 + u * u + 2.0 * W) - 1.0 - u * u;
}

std::array<double, 4> rd_cubic(double D, double W, double delta) {
  const double s = 4.0 * std::sqrt(D);
  return {-1.0 - delta * delta, 1.0 + delta * delta + 2.0 * W + 2.0 * delta * s, -2.0 * delta * s - s * s, s * s};
}

RdRoots rd_roots(const RdParams& params) {
  params.validate();
  const double d_eff = params.pull * params.delta;
  const auto c = rd_cubic(params.D, params.W, d_eff);
  const double kappa = params.kappa();
  const double a = params.drive();
  const double r = params.t1_over_t2;

  RdRoots out;
  for (double z : real_cubic_roots(c[3], c[2], c[1], c[0])) {
    if (z < -kClampTol || z > 1.0 + kClampTol) {
      ++out.discarded;
      continue;
    }
    z = std::clamp(z, 0.0, 1.0);
    const double u = params.delta - kappa * z;
    const std::complex<double> p = std::complex<double>(0.0, a * z) / std::complex<double>(-1.0, u);
    const double lam = jacobian_max_real(params.delta, kappa, a, r, z, p);
    RdSteadyState st;
    st.z = z;
    st.p_plus = params.physical ? p * params.physical->pz0 : p;
    st.stability = lam < 0.0 ? Stability::stable : Stability::unstable;
    st.residual = std::abs(rd_f(params.D, params.W, d_eff, z));
    st.max_real_eigenvalue = lam;
    out.states.push_back(st);
  }
  return out;
}

RdPeak rd_peak_delta(double D, double W) {
  if (!(D >= 0.0) || !(W >= 0.0)) throw Error(ErrorCode::invalid_argument, "D and W must be nonnegative");
  return {4.0 * std::sqrt(D) / (1.0 + 2.0 * W), 1.0 / (1.0 + 2.0 * W)};
}

std::optional<RdOnset> rd_onset_points(double D) {
  if (!(D > 0.0)) throw Error(ErrorCode::invalid_argument, "D must be positive");
  if (D < 1.0) return std::nullopt;
  const double x = std::acosh(std::sqrt(D));
  const double phase = std::atan(std::sinh(x));
  const auto point = [&](double sign) {
    RdOnsetPoint p;
    p.z = (3.0 + 2.0 * std::cos(2.0 * (phase + sign * std::numbers::pi) / 3.0)) / 4.0;
    p.delta = 2.0 * std::sqrt(D) * (3.0 * p.z - 1.0);
    p.W = 6.0 * D * (1.0 - p.z) * (1.0 - p.z) - 0.5;
    return p;
  };
  return RdOnset{point(1.0), point(-1.0)};
}

double rd_onset_drive_estimate(double omega_k, double t1, double t2) {
  if (!(t1 > 0.0) || !(t2 > 0.0) || omega_k == 0.0)
    throw Error(ErrorCode::invalid_argument, "onset estimate needs positive T1, T2 and nonzero omega_K");
  return 4.0 / (std::sqrt(t1) * std::pow(t2, 1.5) * std::abs(omega_k));
}

namespace {

std::optional<RdCurvePoint> jump_point(double D, double z, double sign) {
  const double s = 4.0 * std::sqrt(D);
  const double rad = 16.0 * z * z * (z - 1.0) * (z - 1.0) * D - 1.0;
  if (rad < 0.0) {
    if (rad < -1e-12) return std::nullopt;
  }
  const double delta = s * z * z + sign * std::sqrt(std::max(rad, 0.0));
  const double w = -(1.0 + (delta - s * z) * (delta - s * (3.0 * z - 2.0))) / 2.0;
  if (w < 0.0) return std::nullopt;
  return RdCurvePoint{z, delta, w};
}

}  // namespace

RdJumpCurves rd_jump_curves(double D, const std::vector<double>& z_grid) {
  RdJumpCurves out;
  if (!(D >= 1.0)) {
    out.bistability_excluded = true;
    return out;
  }
  for (double z : z_grid) {
    if (auto p = jump_point(D, z, 1.0)) out.plus.push_back(*p);
    if (auto p = jump_point(D, z, -1.0)) out.minus.push_back(*p);
  }
  return out;
}

RdJumpBoundaries rd_jump_boundaries(double D, int n_per_branch) {
  RdJumpBoundaries out;
  const auto onset = rd_onset_points(D);
  if (!onset || n_per_branch < 2) return out;
  const double half = std::sqrt(std::max(0.0, 1.0 - 1.0 / std::sqrt(D))) / 2.0;
  const double z_r1 = 0.5 - half;
  const double z_r2 = 0.5 + half;
  const double z_p = onset->plus.z;
  const double z_m = onset->minus.z;

  // Quadratic spacing toward each joint where delta(z) has a square-root tip.
  const auto leg = [&](std::vector<RdCurvePoint>& dst, double z_from, double z_joint, double sign, bool toward_joint) {
    for (int k = 0; k < n_per_branch; ++k) {
      const double s = static_cast<double>(k) / (n_per_branch - 1);
      const double t = toward_joint ? 1.0 - s : s;
      const double z = z_joint + (z_from - z_joint) * t * t;
      if (auto p = jump_point(D, z, sign)) {
        if (!dst.empty() && dst.back().z == p->z && dst.back().delta == p->delta) continue;
        dst.push_back(*p);
      }
    }
  };
  leg(out.lower, z_m, z_r1, 1.0, true);
  leg(out.lower, z_p, z_r1, -1.0, false);
  leg(out.upper, z_m, z_r2, 1.0, true);
  leg(out.upper, z_p, z_r2, -1.0, false);
  return out;
}

StabilityMap rd_stability_map(double D, double delta_lo, double delta_hi, double w_lo, double w_hi, int n_delta, int n_w,
                              int threads) {
  if (n_delta < 2 || n_w < 2) throw Error(ErrorCode::invalid_argument, "stability map needs at least 2x2 cells");
  StabilityMap map;
  map.n_delta = n_delta;
  map.n_w = n_w;
  map.cells.resize(static_cast<std::size_t>(n_delta) * n_w);
  const auto row = [&](int iw) {
    const double w = w_lo + (w_hi - w_lo) * iw / (n_w - 1);
    for (int id = 0; id < n_delta; ++id) {
      const double delta = delta_lo + (delta_hi - delta_lo) * id / (n_delta - 1);
      RdParams p;
      p.D = D;
      p.W = w;
      p.delta = delta;
      const auto roots = rd_roots(p);
      int stable = 0;
      for (const auto& s : roots.states) stable += s.stability == Stability::stable;
      map.cells[static_cast<std::size_t>(iw) * n_delta + id] = {delta, w, static_cast<int>(roots.states.size()), stable};
    }
  };
  const int workers = std::clamp(threads, 1, n_w);
  if (workers == 1) {
    for (int iw = 0; iw < n_w; ++iw) row(iw);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (int iw = t; iw < n_w; iw += workers) row(iw);
      });
    for (auto& th : pool) th.join();
  }
  return map;
}

std::vector<RdResponsePoint> rd_response_curves(double D, const std::vector<double>& w_list,
                                                const std::vector<double>& delta_grid) {
  std::vector<RdResponsePoint> out;
  for (double w : w_list) {
    int single_branch = 0;
    double last_high = 1.0, last_low = 1.0;
    for (double delta : delta_grid) {
      RdParams p;
      p.D = D;
      p.W = w;
      p.delta = delta;
      auto roots = rd_roots(p).states;
      std::sort(roots.begin(), roots.end(), [](const auto& a, const auto& b) { return a.z > b.z; });
      if (roots.size() == 3) {
        for (int b = 0; b < 3; ++b) out.push_back({w, delta, roots[b].z, b, roots[b].stability});
        last_high = roots[0].z;
        last_low = roots[2].z;
        single_branch = -1;
        continue;
      }
      if (single_branch < 0 && !roots.empty()) {
        // Leaving the multivalued window: the survivor continues the nearer outer branch.
        const double z = roots.front().z;
        single_branch = std::abs(z - last_high) <= std::abs(z - last_low) ? 0 : 2;
      }
      for (const auto& r : roots) out.push_back({w, delta, r.z, std::max(single_branch, 0), r.stability});
    }
  }
  return out;
}

}  // namespace bistab
