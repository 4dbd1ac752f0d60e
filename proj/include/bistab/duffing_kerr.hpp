#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

namespace bistab {

using cplx_d = std::complex<double>;

struct DkParams {
  double gamma1 = 0.4;
  double gamma2 = 0.6;
  double gamma3 = 0.0;
  double omega_k = -0.1;
  double omega1 = 0.0;  // drive power in rate units
  double omega_d = 0.0;

  double gamma() const { return gamma1 + gamma2; }
  double gamma_minus() const { return gamma1 - gamma2; }
  bool linear() const { return omega_k == 0.0 && gamma3 == 0.0; }
  void validate() const;
};

enum class DkStability { stable_spiral, stable_node, saddle, unstable };

inline bool is_stable(DkStability s) { return s == DkStability::stable_spiral || s == DkStability::stable_node; }

struct DkSteadyState {
  double energy;
  cplx_d amplitude;
  DkStability stability;
  cplx_d reflectivity;
  double residual;  // monic-cubic residual
};

std::vector<DkSteadyState> dk_roots(const DkParams& params);
cplx_d dk_reflectivity(const DkParams& params, double energy);

// Flow field f(C) with dC/dt = f and its real Jacobian in (Re C, Im C).
cplx_d dk_velocity(const DkParams& params, cplx_d c);
std::array<double, 4> dk_jacobian(const DkParams& params, cplx_d c);
DkStability dk_classify(const DkParams& params, cplx_d c);

struct DkPeak {
  double omega_dp;
  double energy;
  double low_power_estimate;  // omega_K 2 gamma1 Omega1 / gamma^2
};
DkPeak dk_peak(const DkParams& params);

struct DkOnset {
  double omega_dc;
  double omega1c;
  double energy_c;
};
std::optional<DkOnset> dk_onset(const DkParams& params);

struct DkCurvePoint {
  double energy;
  double omega_d;
  double omega1;
};

struct DkJumpCurves {
  bool bistability_excluded = false;
  std::vector<DkCurvePoint> plus;
  std::vector<DkCurvePoint> minus;
};
DkJumpCurves dk_jump_curves(const DkParams& params, const std::vector<double>& energy_grid);

/// The two fold boundaries of the bistable wedge, each starting at the cusp
/// and running to energy e_max.
struct DkJumpBoundaries {
  std::vector<DkCurvePoint> first;   // stays on the cusp's own branch
  std::vector<DkCurvePoint> second;  // turns at the radicand zero onto the other branch
};
DkJumpBoundaries dk_jump_boundaries(const DkParams& params, double e_max, int n_per_leg = 400);

struct DkMapCell {
  double omega_d;
  double omega1;
  int n_roots;
  int n_stable;
};
std::vector<DkMapCell> dk_stability_map(const DkParams& params, double wd_lo, double wd_hi, double p_lo, double p_hi,
                                        int n_wd, int n_p, int threads = 1);

struct FlowSample {
  double t;
  cplx_d c;
};
std::vector<FlowSample> dk_flow(const DkParams& params, cplx_d c0, double dt, double t_max, int record_every = 1);

struct BasinOptions {
  double re_lo = 0.0, re_hi = 0.0, im_lo = 0.0, im_hi = 0.0;  // all zero selects a box around the fixed points
  int n_re = 100;
  int n_im = 100;
  double dt = 0.01;
  double t_max = 400.0;
  double capture_radius = 1e-6;
  int bisection_steps = 30;
  int threads = 1;
};

struct FlowMap {
  std::vector<DkSteadyState> fixed_points;  // ascending energy
  std::vector<int> labels;                  // per cell, index into fixed_points or -1 when unresolved
  int n_re = 0, n_im = 0;
  double re_lo = 0.0, re_hi = 0.0, im_lo = 0.0, im_hi = 0.0;
  std::vector<cplx_d> separatrix;  // ordered along the saddle's stable direction
  bool bistable = false;
  cplx_d cell_center(int i_re, int i_im) const;
};

// Index of the attractor reached from c0, or -1.
int dk_attractor(const DkParams& params, const std::vector<DkSteadyState>& fixed_points, cplx_d c0,
                 const BasinOptions& options);
FlowMap dk_basins(const DkParams& params, const BasinOptions& options = {});

}  // namespace bistab
