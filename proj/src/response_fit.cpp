#include "bistab/response_fit.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <random>

#include "bistab/duffing_kerr.hpp"
#include "bistab/error.hpp"
#include "bistab/rd_model.hpp"

namespace bistab {

const char* to_string(ModelTag model) { return model == ModelTag::rd ? "RD" : "DK"; }

const char* to_string(PointKind kind) {
  switch (kind) {
    case PointKind::peak:
      return "peak";
    case PointKind::jump_up:
      return "jump_up";
    case PointKind::jump_down:
      return "jump_down";
  }
  return "?";
}

const char* to_string(CurveRole role) {
  switch (role) {
    case CurveRole::peak:
      return "peak";
    case CurveRole::jump_lower:
      return "jump_lower";
    case CurveRole::jump_upper:
      return "jump_upper";
  }
  return "?";
}

double to_linear_power(double value, PowerUnit unit) {
  if (!std::isfinite(value)) throw Error(ErrorCode::invalid_argument, "power must be finite");
  return unit == PowerUnit::dbm ? std::pow(10.0, value / 10.0) : value;
}

namespace {

struct Anchors {
  double f_p0, f_dc, p_c;
};

Anchors anchors_of(const ResponseMetadata& m) {
  if (!m.f_p0 || !m.f_c || !m.p_c)
    throw Error(ErrorCode::incomplete_metadata, "normalization needs f_p0, f_c and P_c");
  const double f_dc = *m.f_c - *m.f_p0;
  if (f_dc == 0.0 || !std::isfinite(f_dc)) throw Error(ErrorCode::invalid_argument, "f_c must differ from f_p0");
  const double p_c = to_linear_power(*m.p_c, m.p_c_unit);
  if (!(p_c > 0.0)) throw Error(ErrorCode::invalid_argument, "P_c must be positive");
  return {*m.f_p0, f_dc, p_c};
}

}  // namespace

std::vector<NormalizedPoint> normalize(const MeasuredResponse& data) {
  const Anchors a = anchors_of(data.metadata);
  std::vector<NormalizedPoint> out;
  out.reserve(data.records.size());
  for (const auto& r : data.records) {
    if (!std::isfinite(r.f_hz)) throw Error(ErrorCode::invalid_argument, "frequency must be finite");
    out.push_back({(r.f_hz - a.f_p0) / a.f_dc, to_linear_power(r.power, r.unit) / a.p_c, r.kind});
  }
  return out;
}

std::vector<MeasuredRecord> denormalize(const std::vector<NormalizedPoint>& points, const ResponseMetadata& metadata) {
  const Anchors a = anchors_of(metadata);
  std::vector<MeasuredRecord> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({a.f_p0 + p.x * a.f_dc, p.y * a.p_c, PowerUnit::linear, p.kind});
  return out;
}

namespace {

void sample_pieces(TheoryCurves& c) {
  const int n = std::max(c.range.samples_per_piece, 8);
  for (auto& piece : c.pieces) {
    piece.t.clear();
    piece.x.clear();
    piece.log_y.clear();
    std::vector<CurveSample>* poly = piece.role == CurveRole::peak         ? &c.peak
                                     : piece.role == CurveRole::jump_lower ? &c.jump_lower
                                                                           : &c.jump_upper;
    for (int k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / (n - 1);
      double x, ly;
      if (!piece.eval(t, x, ly) || !std::isfinite(x) || !std::isfinite(ly)) continue;
      piece.t.push_back(t);
      piece.x.push_back(x);
      piece.log_y.push_back(ly);
      poly->push_back({x, std::exp(ly)});
    }
  }
}

void check_range(const TheoryRange& r) {
  if (!(r.y_lo > 0.0) || !(r.y_hi > r.y_lo)) throw Error(ErrorCode::invalid_argument, "need 0 < y_lo < y_hi");
}

// t in [0, 1] mapped onto [a, b] and squeezed quadratically toward `a` or `b`.
double squeeze(double a, double b, double t, bool dense_at_a) {
  const double s = dense_at_a ? t * t : 1.0 - (1.0 - t) * (1.0 - t);
  return a + (b - a) * s;
}

}  // namespace

TheoryCurves rd_theory_curves(double D, Anchor anchor, const TheoryRange& range) {
  if (!(D > 0.0) || !std::isfinite(D)) throw Error(ErrorCode::invalid_argument, "D must be positive");
  check_range(range);
  TheoryCurves c;
  c.model = ModelTag::rd;
  c.range = range;
  const auto onset = rd_onset_points(D);
  if (onset) {
    c.y_ref = onset->minus.W;
    c.x_ref = anchor == Anchor::cusp ? onset->minus.delta : rd_peak_delta(D, c.y_ref).delta;
  } else {
    // Below threshold there is no cusp; use the D = 1 onset power and a detuning that is continuous there.
    c.y_ref = 1.0;
    c.x_ref = anchor == Anchor::cusp ? std::sqrt(D) : rd_peak_delta(D, 1.0).delta;
  }
  const double x_ref = c.x_ref, y_ref = c.y_ref;
  const double ly0 = std::log(range.y_lo), ly1 = std::log(range.y_hi);
  c.pieces.push_back({CurveRole::peak, [=](double t, double& x, double& ly) {
                        ly = ly0 + (ly1 - ly0) * t;
                        x = rd_peak_delta(D, y_ref * std::exp(ly)).delta / x_ref;
                        return true;
                      }});
  if (onset) {
    c.has_jumps = true;
    const double half = std::sqrt(std::max(0.0, 1.0 - 1.0 / std::sqrt(D))) / 2.0;
    const double z_r1 = 0.5 - half, z_r2 = 0.5 + half;
    const double z_p = onset->plus.z, z_m = onset->minus.z;
    const auto leg = [=](CurveRole role, double z_from, double z_to, double sign, bool dense_at_from) {
      return CurvePiece{role, [=](double t, double& x, double& ly) {
                          const double z = squeeze(z_from, z_to, t, dense_at_from);
                          const auto j = rd_jump_curves(D, {z});
                          const auto& branch = sign > 0.0 ? j.plus : j.minus;
                          if (branch.empty() || !(branch[0].W > 0.0)) return false;
                          x = branch[0].delta / x_ref;
                          ly = std::log(branch[0].W / y_ref);
                          return true;
                        }};
    };
    c.pieces.push_back(leg(CurveRole::jump_lower, z_m, z_r1, 1.0, false));
    c.pieces.push_back(leg(CurveRole::jump_lower, z_r1, z_p, -1.0, true));
    c.pieces.push_back(leg(CurveRole::jump_upper, z_m, z_r2, 1.0, false));
    c.pieces.push_back(leg(CurveRole::jump_upper, z_r2, z_p, -1.0, true));
  }
  sample_pieces(c);
  return c;
}

TheoryCurves dk_theory_curves(double gamma1_ratio, double omega_k_ratio, double gamma3_ratio, Anchor anchor,
                              const TheoryRange& range) {
  check_range(range);
  if (!(gamma1_ratio > 0.0 && gamma1_ratio < 1.0))
    throw Error(ErrorCode::invalid_argument, "gamma1/gamma must lie in (0, 1)");
  if (!(gamma3_ratio >= 0.0)) throw Error(ErrorCode::invalid_argument, "gamma3/gamma must be nonnegative");
  if (omega_k_ratio == 0.0 || !std::isfinite(omega_k_ratio))
    throw Error(ErrorCode::invalid_argument, "omega_K/gamma must be nonzero");
  DkParams base;
  base.gamma1 = gamma1_ratio;
  base.gamma2 = 1.0 - gamma1_ratio;
  base.gamma3 = gamma3_ratio;
  base.omega_k = omega_k_ratio;

  const auto peak_at = [base](double omega1) {
    DkParams q = base;
    q.omega1 = omega1;
    return dk_peak(q).omega_dp;
  };

  TheoryCurves c;
  c.model = ModelTag::dk;
  c.range = range;
  const auto onset = dk_onset(base);
  if (onset) {
    c.y_ref = onset->omega1c;
    c.x_ref = anchor == Anchor::cusp ? onset->omega_dc : peak_at(c.y_ref);
  } else {
    // No cusp below the Kerr threshold; anchor at the peak for the natural Kerr power scale.
    c.y_ref = 1.0 / (gamma1_ratio * std::abs(omega_k_ratio));
    c.x_ref = peak_at(c.y_ref);
  }
  const double x_ref = c.x_ref, y_ref = c.y_ref;
  const double ly0 = std::log(range.y_lo), ly1 = std::log(range.y_hi);
  c.pieces.push_back({CurveRole::peak, [=](double t, double& x, double& ly) {
                        ly = ly0 + (ly1 - ly0) * t;
                        x = peak_at(y_ref * std::exp(ly)) / x_ref;
                        return true;
                      }});

  if (onset) {
    c.has_jumps = true;
    const double ec = onset->energy_c;
    const double a = base.omega_k * base.omega_k - 3.0 * base.gamma3 * base.gamma3;
    const double b = 4.0 * base.gamma3;
    const double e_joint = (b + std::sqrt(b * b + 4.0 * a)) / (2.0 * a);
    const auto at_ec = dk_jump_curves(base, {ec});
    double cusp_sign = 1.0;
    if (!at_ec.plus.empty() && !at_ec.minus.empty())
      cusp_sign = std::abs(at_ec.plus[0].omega_d - onset->omega_dc) <= std::abs(at_ec.minus[0].omega_d - onset->omega_dc)
                      ? 1.0
                      : -1.0;
    const auto fold = [base](double e, double sign) -> std::optional<DkCurvePoint> {
      const auto j = dk_jump_curves(base, {e});
      const auto& branch = sign > 0.0 ? j.plus : j.minus;
      if (branch.empty()) return std::nullopt;
      return branch[0];
    };
    // Extend both boundaries until they reach the top of the power range.
    double e_max = 2.0 * ec;
    for (int it = 0; it < 200; ++it) {
      const auto p1 = fold(e_max, cusp_sign), p2 = fold(e_max, -cusp_sign);
      if (p1 && p2 && p1->omega1 >= range.y_hi * y_ref && p2->omega1 >= range.y_hi * y_ref) break;
      e_max *= 1.5;
    }
    const auto leg = [=](double e_from, double e_to, double sign, bool dense_at_from) {
      return [=](double t, double& x, double& ly) {
        const auto q = fold(squeeze(e_from, e_to, t, dense_at_from), sign);
        if (!q || !(q->omega1 > 0.0)) return false;
        x = q->omega_d / x_ref;
        ly = std::log(q->omega1 / y_ref);
        return true;
      };
    };
    std::vector<CurvePiece> first{{CurveRole::jump_lower, leg(ec, e_max, cusp_sign, true)}};
    std::vector<CurvePiece> second{{CurveRole::jump_lower, leg(ec, e_joint, cusp_sign, false)},
                                   {CurveRole::jump_lower, leg(e_joint, e_max, -cusp_sign, true)}};
    double x1 = 0.0, x2 = 0.0, ly;
    first.back().eval(1.0, x1, ly);
    second.back().eval(1.0, x2, ly);
    auto& upper = x1 > x2 ? first : second;
    for (auto& piece : upper) piece.role = CurveRole::jump_upper;
    for (auto& piece : first) c.pieces.push_back(piece);
    for (auto& piece : second) c.pieces.push_back(piece);
  }
  sample_pieces(c);
  return c;
}

namespace {

double piece_distance(const CurvePiece& piece, double px, double ply) {
  const std::size_t n = piece.t.size();
  if (n == 0) return std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = piece.x[k] - px, dy = piece.log_y[k] - ply;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  const auto d2_at = [&](double t) {
    double x, ly;
    if (!piece.eval(t, x, ly)) return std::numeric_limits<double>::infinity();
    return (x - px) * (x - px) + (ly - ply) * (ly - ply);
  };
  // Golden-section refinement between the neighbouring samples.
  double a = piece.t[best > 0 ? best - 1 : 0];
  double b = piece.t[best + 1 < n ? best + 1 : n - 1];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = d2_at(c), fd = d2_at(d);
  for (int it = 0; it < 80 && b - a > 1e-15; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = d2_at(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = d2_at(d);
    }
  }
  best_d2 = std::min({best_d2, fc, fd});
  return std::sqrt(best_d2);
}

double role_distance(const TheoryCurves& curves, CurveRole role, double px, double ply) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& piece : curves.pieces)
    if (piece.role == role) d = std::min(d, piece_distance(piece, px, ply));
  return d;
}

}  // namespace

PointDistance curve_distance(const TheoryCurves& curves, const NormalizedPoint& point) {
  if (!(point.y > 0.0)) throw Error(ErrorCode::invalid_argument, "normalized power must be positive");
  const double ly = std::log(point.y);
  // Jump points fall back to the peak curve when the model has no bistable region.
  if (point.kind == PointKind::peak || !curves.has_jumps)
    return {role_distance(curves, CurveRole::peak, point.x, ly), CurveRole::peak};
  const double lo = role_distance(curves, CurveRole::jump_lower, point.x, ly);
  const double up = role_distance(curves, CurveRole::jump_upper, point.x, ly);
  if (std::abs(lo - up) <= 1e-12 * std::max(1.0, std::min(lo, up)))
    return point.kind == PointKind::jump_up ? PointDistance{up, CurveRole::jump_upper}
                                            : PointDistance{lo, CurveRole::jump_lower};
  return lo < up ? PointDistance{lo, CurveRole::jump_lower} : PointDistance{up, CurveRole::jump_upper};
}

double fit_objective(const std::vector<NormalizedPoint>& points, const TheoryCurves& curves,
                     std::vector<PointDistance>* detail) {
  if (points.empty()) throw Error(ErrorCode::invalid_argument, "no points to compare");
  double sum = 0.0;
  if (detail) detail->clear();
  for (const auto& p : points) {
    const auto d = curve_distance(curves, p);
    sum += d.distance * d.distance;
    if (detail) detail->push_back(d);
  }
  return std::sqrt(sum / static_cast<double>(points.size()));
}

namespace {

struct FitProblem {
  const std::vector<NormalizedPoint>* points;
  const FitOptions* options;
  FitBounds bounds;
  TheoryRange range;

  double parameter(double u) const { return bounds.lo + (bounds.hi - bounds.lo) / (1.0 + std::exp(-u)); }

  TheoryCurves curves(double value) const {
    if (options->model == ModelTag::rd) return rd_theory_curves(value, options->anchor, range);
    return dk_theory_curves(options->dk_gamma1_ratio, options->dk_omega_k_ratio, value, options->anchor, range);
  }
};

double gsl_objective(const gsl_vector* v, void* data) {
  const auto* problem = static_cast<const FitProblem*>(data);
  try {
    const double r = fit_objective(*problem->points, problem->curves(problem->parameter(gsl_vector_get(v, 0))));
    return std::isfinite(r) ? r : 1e300;
  } catch (const Error&) {
    return 1e300;
  }
}

}  // namespace

FitResult fit_model(const std::vector<NormalizedPoint>& points, const FitOptions& options) {
  if (points.size() < 5) throw Error(ErrorCode::invalid_argument, "fit needs at least 5 normalized points");
  if (options.restarts < 1) throw Error(ErrorCode::invalid_argument, "fit needs at least one restart");
  double y_min = std::numeric_limits<double>::infinity(), y_max = 0.0;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !(p.y > 0.0))
      throw Error(ErrorCode::invalid_argument, "normalized points need finite x and positive y");
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }

  FitProblem problem{&points, &options, {}, {}};
  problem.range.y_lo = y_min / 2.0;
  problem.range.y_hi = y_max * 2.0;
  if (options.bounds) {
    problem.bounds = *options.bounds;
  } else if (options.model == ModelTag::rd) {
    problem.bounds = {1.0, 100.0};
  } else {
    problem.bounds = {0.0, 0.99 * std::abs(options.dk_omega_k_ratio) / std::sqrt(3.0)};
  }
  if (!(problem.bounds.hi > problem.bounds.lo) || !std::isfinite(problem.bounds.lo) ||
      !std::isfinite(problem.bounds.hi))
    throw Error(ErrorCode::invalid_argument, "fit bounds need lo < hi");
  if (options.model == ModelTag::rd && !(problem.bounds.lo > 0.0))
    throw Error(ErrorCode::invalid_argument, "D bounds must be positive");
  if (options.model == ModelTag::dk && problem.bounds.lo < 0.0)
    throw Error(ErrorCode::invalid_argument, "gamma3/gamma bounds must be nonnegative");

  gsl_set_error_handler_off();
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> start(0.05, 0.95);

  struct Attempt {
    double u;
    double residual;
    std::vector<double> history;
    int iterations;
    bool converged;
  };
  std::vector<Attempt> attempts;

  gsl_multimin_function fn{&gsl_objective, 1, &problem};
  const auto free_min = [](gsl_multimin_fminimizer* m) { gsl_multimin_fminimizer_free(m); };
  const auto free_vec = [](gsl_vector* v) { gsl_vector_free(v); };
  for (int r = 0; r < options.restarts; ++r) {
    const double s = start(rng);
    std::unique_ptr<gsl_vector, decltype(free_vec)> x(gsl_vector_alloc(1), free_vec);
    std::unique_ptr<gsl_vector, decltype(free_vec)> step(gsl_vector_alloc(1), free_vec);
    gsl_vector_set(x.get(), 0, std::log(s / (1.0 - s)));
    gsl_vector_set(step.get(), 0, 1.0);
    std::unique_ptr<gsl_multimin_fminimizer, decltype(free_min)> m(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 1), free_min);
    gsl_multimin_fminimizer_set(m.get(), &fn, x.get(), step.get());
    Attempt a{0.0, 0.0, {}, 0, false};
    for (int it = 0; it < options.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(m.get()) != GSL_SUCCESS) break;
      a.iterations = it + 1;
      a.history.push_back(gsl_multimin_fminimizer_minimum(m.get()));
      // Simplex size measured in parameter units relative to the bound width, so optima on a bound also settle.
      const double sig = 1.0 / (1.0 + std::exp(-gsl_vector_get(gsl_multimin_fminimizer_x(m.get()), 0)));
      if (gsl_multimin_fminimizer_size(m.get()) * sig * (1.0 - sig) <= options.size_tolerance) {
        a.converged = true;
        break;
      }
    }
    a.u = gsl_vector_get(gsl_multimin_fminimizer_x(m.get()), 0);
    a.residual = gsl_multimin_fminimizer_minimum(m.get());
    attempts.push_back(std::move(a));
  }

  const Attempt* best = nullptr;
  const Attempt* best_any = nullptr;
  int converged = 0;
  for (const auto& a : attempts) {
    if (!best_any || a.residual < best_any->residual) best_any = &a;
    if (!a.converged) continue;
    ++converged;
    if (!best || a.residual < best->residual) best = &a;
  }
  if (!best)
    throw Error(ErrorCode::non_convergence,
                "no restart converged; best residual " + std::to_string(best_any ? best_any->residual : 0.0));

  FitResult out;
  out.model = options.model;
  const double value = problem.parameter(best->u);
  if (options.model == ModelTag::rd) {
    out.parameters["D"] = value;
  } else {
    out.parameters["gamma1_over_gamma"] = options.dk_gamma1_ratio;
    out.parameters["omega_k_over_gamma"] = options.dk_omega_k_ratio;
    out.parameters["gamma3_over_gamma"] = value;
  }
  std::vector<PointDistance> detail;
  out.residual = fit_objective(points, problem.curves(value), &detail);
  for (const auto& d : detail) {
    out.per_point.push_back(d.distance);
    out.matched.push_back(d.matched);
  }
  out.history = best->history;
  out.iterations = best->iterations;
  out.restarts_converged = converged;
  return out;
}

std::vector<NormalizedPoint> synthetic_points(const TheoryCurves& curves, int n_peak, int n_jump, double noise,
                                              std::uint64_t seed, double y_lo, double y_hi) {
  if (n_peak < 0 || n_jump < 0 || noise < 0.0 || !(y_lo > 0.0) || !(y_hi > y_lo))
    throw Error(ErrorCode::invalid_argument, "invalid synthetic sampling request");
  if (n_jump > 0 && !curves.has_jumps)
    throw Error(ErrorCode::invalid_argument, "model has no jump curves to sample");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double ly_lo = std::log(std::max(y_lo, curves.range.y_lo));
  const double ly_hi = std::log(std::min(y_hi, curves.range.y_hi));
  const double r0 = std::log(curves.range.y_lo), r1 = std::log(curves.range.y_hi);

  std::vector<NormalizedPoint> out;
  const auto add = [&](double x, double ly, PointKind kind) {
    out.push_back({x * (1.0 + noise * gauss(rng)), std::exp(ly) * (1.0 + noise * gauss(rng)), kind});
  };
  for (const auto& piece : curves.pieces) {
    if (piece.role != CurveRole::peak) continue;
    for (int k = 0; k < n_peak; ++k) {
      const double ly = ly_lo + (ly_hi - ly_lo) * uni(rng);
      double x, ly_eval;
      piece.eval((ly - r0) / (r1 - r0), x, ly_eval);
      add(x, ly_eval, PointKind::peak);
    }
    break;
  }
  for (int k = 0; k < n_jump; ++k) {
    const CurveRole role = k % 2 == 0 ? CurveRole::jump_lower : CurveRole::jump_upper;
    std::vector<const CurvePiece*> pool;
    for (const auto& piece : curves.pieces)
      if (piece.role == role) pool.push_back(&piece);
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const auto* piece = pool[static_cast<std::size_t>(uni(rng) * pool.size()) % pool.size()];
      double x, ly;
      if (!piece->eval(uni(rng), x, ly)) continue;
      if (ly < ly_lo || ly > ly_hi) continue;
      add(x, ly, role == CurveRole::jump_lower ? PointKind::jump_down : PointKind::jump_up);
      placed = true;
    }
    if (!placed) throw Error(ErrorCode::invalid_argument, "jump curves do not reach the requested power range");
  }
  return out;
}

MaterialRates material_rates(const MaterialInput& in) {
  if (!(in.ms > 0.0) || !(in.rho_s_cm3 > 0.0) || !(in.radius > 0.0))
    throw Error(ErrorCode::invalid_argument, "M_s, rho_s and R_s must be positive");
  if (in.kc1 == 0.0 || !std::isfinite(in.kc1)) throw Error(ErrorCode::invalid_argument, "K_c1 must be nonzero");
  if (in.mu0_hs && !(*in.mu0_hs > 0.0)) throw Error(ErrorCode::invalid_argument, "H_s must be positive");
  MaterialRates out;
  const double rho_m3 = in.rho_s_cm3 * 1e6;
  out.n_s = 4.0 * std::numbers::pi * in.radius * in.radius * in.radius / 3.0 * rho_m3;
  out.omega_k_hz = 2.0 * kGammaEOver2Pi * in.kc1 / (out.n_s * in.ms);
  out.omega_k_rad_s = 2.0 * std::numbers::pi * out.omega_k_hz;
  if (in.mu0_hs) {
    out.f_m_hz = kGammaEOver2Pi * *in.mu0_hs;
    out.omega_m_rad_s = 2.0 * std::numbers::pi * *out.f_m_hz;
  }
  return out;
}

}  // namespace bistab
