#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bistab {

enum class PowerUnit { linear, dbm };
enum class PointKind { peak, jump_up, jump_down };

struct MeasuredRecord {
  double f_hz = 0.0;
  double power = 0.0;
  PowerUnit unit = PowerUnit::linear;
  PointKind kind = PointKind::peak;
};

struct ResponseMetadata {
  std::optional<double> f_p0;  // zero-power peak frequency
  std::optional<double> f_c;   // onset frequency
  std::optional<double> p_c;   // onset power
  PowerUnit p_c_unit = PowerUnit::linear;
};

struct MeasuredResponse {
  std::vector<MeasuredRecord> records;
  ResponseMetadata metadata;
};

struct NormalizedPoint {
  double x = 0.0;
  double y = 0.0;
  PointKind kind = PointKind::peak;
};

double to_linear_power(double value, PowerUnit unit);

std::vector<NormalizedPoint> normalize(const MeasuredResponse& data);
// Records come back in linear power units.
std::vector<MeasuredRecord> denormalize(const std::vector<NormalizedPoint>& points, const ResponseMetadata& metadata);

// Which onset-region feature is mapped to x = 1 at y = 1.
enum class Anchor { cusp, peak };

enum class ModelTag { rd, dk };

struct CurveSample {
  double x;
  double y;
};

enum class CurveRole { peak, jump_lower, jump_upper };

/// One smooth parametric piece t in [0, 1] -> (x, log y) of a theory curve.
struct CurvePiece {
  CurvePiece(CurveRole r, std::function<bool(double, double&, double&)> f) : role(r), eval(std::move(f)) {}
  CurveRole role;
  std::function<bool(double t, double& x, double& log_y)> eval;
  std::vector<double> t, x, log_y;  // dense samples used to seed the nearest-point search
};

struct TheoryRange {
  double y_lo = 1e-2;
  double y_hi = 1e2;
  int samples_per_piece = 200;
};

struct TheoryCurves {
  ModelTag model = ModelTag::rd;
  bool has_jumps = false;
  double x_ref = 0.0;  // raw detuning mapped to x = 1
  double y_ref = 0.0;  // raw power mapped to y = 1
  TheoryRange range;
  std::vector<CurvePiece> pieces;
  // Sampled polylines of the pieces above. Each jump boundary runs from the cusp outward.
  std::vector<CurveSample> peak;
  std::vector<CurveSample> jump_lower;
  std::vector<CurveSample> jump_upper;
};

TheoryCurves rd_theory_curves(double D, Anchor anchor = Anchor::cusp, const TheoryRange& range = {});
TheoryCurves dk_theory_curves(double gamma1_ratio, double omega_k_ratio, double gamma3_ratio,
                              Anchor anchor = Anchor::cusp, const TheoryRange& range = {});

struct PointDistance {
  double distance;
  CurveRole matched;
};

/// Distance in (x, log y) from the point to the curve its kind is matched to.
PointDistance curve_distance(const TheoryCurves& curves, const NormalizedPoint& point);

struct FitBounds {
  double lo;
  double hi;
};

struct FitOptions {
  ModelTag model = ModelTag::rd;
  // RD: bounds on D. DK: bounds on gamma3/gamma; empty selects the model default.
  std::optional<FitBounds> bounds;
  int restarts = 4;
  std::uint64_t seed = 1;
  Anchor anchor = Anchor::cusp;
  // Reference DK ratios held fixed; the normalized curves depend only on gamma3/|omega_K|.
  double dk_gamma1_ratio = 0.4;
  double dk_omega_k_ratio = -0.01;
  int max_iterations = 400;
  double size_tolerance = 1e-10;
};

struct FitResult {
  ModelTag model = ModelTag::rd;
  std::map<std::string, double> parameters;
  double residual = 0.0;  // RMS distance
  std::vector<double> per_point;
  std::vector<CurveRole> matched;
  std::vector<double> history;  // best residual after each simplex iteration of the winning restart
  int iterations = 0;
  int restarts_converged = 0;
};

double fit_objective(const std::vector<NormalizedPoint>& points, const TheoryCurves& curves,
                     std::vector<PointDistance>* detail = nullptr);

FitResult fit_model(const std::vector<NormalizedPoint>& points, const FitOptions& options = {});

/// Points drawn from the theory curves, with multiplicative Gaussian noise of
/// relative size `noise` on both coordinates. Jump points alternate between the
/// lower (jump_down) and upper (jump_up) boundary.
std::vector<NormalizedPoint> synthetic_points(const TheoryCurves& curves, int n_peak, int n_jump, double noise,
                                              std::uint64_t seed, double y_lo = 0.2, double y_hi = 10.0);

struct MaterialInput {
  double ms = 0.0;          // saturation magnetization, A/m
  double kc1 = 0.0;         // cubic anisotropy constant, J/m^3
  double rho_s_cm3 = 0.0;   // spin density, cm^-3
  double radius = 0.0;      // sphere radius, m
  std::optional<double> mu0_hs;  // applied field, T
};

struct MaterialRates {
  double n_s = 0.0;
  double omega_k_hz = 0.0;     // with gamma_e / 2 pi = 28 GHz/T
  double omega_k_rad_s = 0.0;  // 2 pi times the above
  std::optional<double> f_m_hz;
  std::optional<double> omega_m_rad_s;
};

inline constexpr double kGammaEOver2Pi = 28e9;  // Hz/T

MaterialRates material_rates(const MaterialInput& input);

const char* to_string(ModelTag model);
const char* to_string(PointKind kind);
const char* to_string(CurveRole role);

}  // namespace bistab
