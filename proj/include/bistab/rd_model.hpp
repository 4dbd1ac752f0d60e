#pragma once

#include <array>
#include <complex>
#include <optional>
#include <vector>

namespace bistab {

enum class Stability { stable, unstable };

struct RdPhysical {
  double omega_k = 0.0;
  double t1 = 1.0;
  double t2 = 1.0;
  double pz0 = -1.0;
  double omega1 = 0.0;
  double omega_d = 0.0;
};

/// Dimensionless RD parameters. `pull` is the sign of omega_K T2 P_z0; the
/// cubic is always solved in the positive-pull form with delta -> pull * delta.
struct RdParams {
  double D = 0.0;
  double W = 0.0;
  double delta = 0.0;
  double pull = 1.0;
  double t1_over_t2 = 1.0;
  std::optional<RdPhysical> physical;

  static RdParams from_physical(const RdPhysical& phys);
  double kappa() const;  // omega_K T2 P_z0 = pull * 4 sqrt(D)
  double drive() const;  // omega_1 T2
  void validate() const;
};

struct RdSteadyState {
  double z;
  std::complex<double> p_plus;  // P+ when physical parameters are present, P+/P_z0 otherwise
  Stability stability;
  double residual;  // |F(z, delta)|
  double max_real_eigenvalue;
};

struct RdRoots {
  std::vector<RdSteadyState> states;  // ascending in z
  int discarded = 0;                  // real roots outside [0, 1]
};

struct RdPeak {
  double delta;
  double z;
};

struct RdOnsetPoint {
  double z;
  double delta;
  double W;
};

struct RdOnset {
  RdOnsetPoint plus;   // larger W, smaller z
  RdOnsetPoint minus;  // smaller W, larger z
};

struct RdCurvePoint {
  double z;
  double delta;
  double W;
};

struct RdJumpCurves {
  bool bistability_excluded = false;
  std::vector<RdCurvePoint> plus;   // + sign of the square root
  std::vector<RdCurvePoint> minus;  // - sign
};

/// Fold locus split into the two detuning boundaries of the bistable window,
/// each running from (delta_-, W_-) to (delta_+, W_+).
struct RdJumpBoundaries {
  std::vector<RdCurvePoint> lower;
  std::vector<RdCurvePoint> upper;
};

struct StabilityCell {
  double delta;
  double W;
  int n_roots;
  int n_stable;
  bool bistable() const { return n_roots == 3 && n_stable == 2; }
};

struct StabilityMap {
  int n_delta = 0;
  int n_w = 0;
  std::vector<StabilityCell> cells;  // row-major in W, then delta
  const StabilityCell& at(int i_delta, int i_w) const { return cells[static_cast<std::size_t>(i_w) * n_delta + i_delta]; }
};

struct RdResponsePoint {
  double W;
  double delta;
  double z;
  int branch;  // 0 high-z, 1 middle, 2 low-z
  Stability stability;
};

// Positive-pull F(z, delta) and its cubic coefficients (index = power of z).
double rd_f(double D, double W, double delta, double z);
std::array<double, 4> rd_cubic(double D, double W, double delta);

RdRoots rd_roots(const RdParams& params);
RdPeak rd_peak_delta(double D, double W);
std::optional<RdOnset> rd_onset_points(double D);
// Drive amplitude at onset for large D, omega1 ~ 4 / (sqrt(T1) T2^{3/2} |omega_K|).
double rd_onset_drive_estimate(double omega_k, double t1, double t2);
RdJumpCurves rd_jump_curves(double D, const std::vector<double>& z_grid);
RdJumpBoundaries rd_jump_boundaries(double D, int n_per_branch = 400);
StabilityMap rd_stability_map(double D, double delta_lo, double delta_hi, double w_lo, double w_hi, int n_delta, int n_w,
                              int threads = 1);
std::vector<RdResponsePoint> rd_response_curves(double D, const std::vector<double>& w_list,
                                                const std::vector<double>& delta_grid);

}  // namespace bistab
