#include "bistab/duffing_kerr.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "bistab/error.hpp"
#include "bistab/polynomial.hpp"

namespace bistab {

namespace {

const cplx_d kI(0.0, 1.0);

template <class F>
void parallel_rows(int n_rows, int threads, F&& row) {
  const int workers = std::clamp(threads, 1, std::max(1, n_rows));
  if (workers == 1) {
    for (int r = 0; r < n_rows; ++r) row(r);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (int r = t; r < n_rows; r += workers) row(r);
    });
  for (auto& th : pool) th.join();
}

cplx_d amplitude(const DkParams& p, double e) {
  return -kI * std::sqrt(2.0 * p.gamma1 * p.omega1) /
         (cplx_d(p.gamma(), -p.omega_d) + cplx_d(p.gamma3, p.omega_k) * e);
}

double omega1_on_fold(const DkParams& p, double e, double wd) {
  const double detune = wd - p.omega_k * e;
  const double damp = p.gamma() + p.gamma3 * e;
  return e * (detune * detune + damp * damp) / (2.0 * p.gamma1);
}

}  // namespace

void DkParams::validate() const {
  if (!(gamma1 > 0.0)) throw Error(ErrorCode::invalid_argument, "gamma1 must be positive");
  if (!(gamma2 >= 0.0)) throw Error(ErrorCode::invalid_argument, "gamma2 must be nonnegative");
  if (!(gamma3 >= 0.0)) throw Error(ErrorCode::invalid_argument, "gamma3 must be nonnegative");
  if (!(omega1 >= 0.0)) throw Error(ErrorCode::invalid_argument, "Omega1 must be nonnegative");
  if (!std::isfinite(omega_k) || !std::isfinite(omega_d))
    throw Error(ErrorCode::invalid_argument, "omega_K and omega_d must be finite");
}

cplx_d dk_velocity(const DkParams& p, cplx_d c) {
  return cplx_d(-p.gamma(), p.omega_d) * c - cplx_d(p.gamma3, p.omega_k) * std::norm(c) * c -
         kI * std::sqrt(2.0 * p.gamma1 * p.omega1);
}

std::array<double, 4> dk_jacobian(const DkParams& p, cplx_d c) {
  const cplx_d b(p.gamma3, p.omega_k);
  const cplx_d da = cplx_d(-p.gamma(), p.omega_d) - 2.0 * b * std::norm(c);
  const cplx_d db = -b * c * c;
  return {(da + db).real(), -(da - db).imag(), (da + db).imag(), (da - db).real()};
}

DkStability dk_classify(const DkParams& p, cplx_d c) {
  const auto j = dk_jacobian(p, c);
  const double tr = j[0] + j[3];
  const double det = j[0] * j[3] - j[1] * j[2];
  if (det < 0.0) return DkStability::saddle;
  if (tr < 0.0 && det > 0.0) return tr * tr - 4.0 * det < 0.0 ? DkStability::stable_spiral : DkStability::stable_node;
  return DkStability::unstable;
}

cplx_d dk_reflectivity(const DkParams& p, double e) {
  if (!(e >= 0.0)) throw Error(ErrorCode::invalid_argument, "energy must be nonnegative");
  const cplx_d nl = cplx_d(p.gamma3, p.omega_k) * e;
  const cplx_d den = cplx_d(p.gamma(), -p.omega_d) + nl;
  if (std::abs(den) < 1e-300) throw Error(ErrorCode::singular_response, "reflectivity denominator vanishes");
  return (cplx_d(-p.gamma_minus(), -p.omega_d) + nl) / den;
}

std::vector<DkSteadyState> dk_roots(const DkParams& p) {
  p.validate();
  const double g = p.gamma();
  std::vector<double> energies;
  double lead = p.omega_k * p.omega_k + p.gamma3 * p.gamma3;
  if (p.linear()) {
    energies = {2.0 * p.gamma1 * p.omega1 / (p.omega_d * p.omega_d + g * g)};
    lead = 1.0;
  } else {
    for (double e : real_cubic_roots(lead, 2.0 * (g * p.gamma3 - p.omega_d * p.omega_k), p.omega_d * p.omega_d + g * g,
                                     -2.0 * p.gamma1 * p.omega1)) {
      if (e < -1e-12 * std::max(1.0, std::abs(e))) continue;
      energies.push_back(std::max(e, 0.0));
    }
  }
  std::vector<DkSteadyState> out;
  for (double e : energies) {
    DkSteadyState s;
    s.energy = e;
    s.amplitude = amplitude(p, e);
    s.stability = dk_classify(p, s.amplitude);
    s.reflectivity = dk_reflectivity(p, e);
    const double f = p.linear() ? e * (p.omega_d * p.omega_d + g * g) - 2.0 * p.gamma1 * p.omega1
                                : ((lead * e + 2.0 * (g * p.gamma3 - p.omega_d * p.omega_k)) * e +
                                   p.omega_d * p.omega_d + g * g) * e - 2.0 * p.gamma1 * p.omega1;
    s.residual = std::abs(f / lead);
    out.push_back(s);
  }
  return out;
}

DkPeak dk_peak(const DkParams& p) {
  p.validate();
  const double g = p.gamma();
  const double target = 2.0 * p.gamma1 * p.omega1;
  DkPeak out{0.0, 0.0, p.omega_k * target / (g * g)};
  if (target == 0.0) return out;
  // E (gamma + gamma3 E)^2 is increasing in E, and bounded below by gamma^2 E.
  double lo = 0.0, hi = target / (g * g);
  const auto h = [&](double e) { return e * (g + p.gamma3 * e) * (g + p.gamma3 * e) - target; };
  if (!(h(lo) <= 0.0 && h(hi) >= 0.0))
    throw Error(ErrorCode::no_bracket, "peak energy not bracketed by [" + std::to_string(lo) + ", " +
                                           std::to_string(hi) + "]");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) < 0.0 ? lo : hi) = mid;
  }
  out.energy = 0.5 * (lo + hi);
  out.omega_dp = p.omega_k * out.energy;
  return out;
}

std::optional<DkOnset> dk_onset(const DkParams& p) {
  const double k = std::abs(p.omega_k);
  const double s3 = std::sqrt(3.0);
  if (!(k > s3 * p.gamma3)) return std::nullopt;
  const double g = p.gamma();
  DkOnset o;
  o.energy_c = 2.0 * g / (s3 * (k - s3 * p.gamma3));
  o.omega_dc = g * (p.omega_k > 0.0 ? 1.0 : -1.0) * (4.0 * p.gamma3 * k + s3 * (k * k + p.gamma3 * p.gamma3)) /
               (k * k - 3.0 * p.gamma3 * p.gamma3);
  o.omega1c = (k * k + p.gamma3 * p.gamma3) * std::pow(o.energy_c, 3) / (2.0 * p.gamma1);
  return o;
}

namespace {

double jump_radicand(const DkParams& p, double e) {
  const double k2 = p.omega_k * p.omega_k;
  return ((k2 - 3.0 * p.gamma3 * p.gamma3) * e - 4.0 * p.gamma() * p.gamma3) * e - p.gamma() * p.gamma();
}

std::optional<DkCurvePoint> jump_point(const DkParams& p, double e, double sign) {
  const double rad = jump_radicand(p, e);
  if (rad < -1e-12 * std::max(1.0, p.gamma() * p.gamma())) return std::nullopt;
  const double wd = 2.0 * p.omega_k * e + sign * std::sqrt(std::max(rad, 0.0));
  return DkCurvePoint{e, wd, omega1_on_fold(p, e, wd)};
}

}  // namespace

DkJumpCurves dk_jump_curves(const DkParams& p, const std::vector<double>& energy_grid) {
  DkJumpCurves out;
  if (!dk_onset(p)) {
    out.bistability_excluded = true;
    return out;
  }
  for (double e : energy_grid) {
    if (e < 0.0) continue;
    if (auto q = jump_point(p, e, 1.0)) out.plus.push_back(*q);
    if (auto q = jump_point(p, e, -1.0)) out.minus.push_back(*q);
  }
  return out;
}

DkJumpBoundaries dk_jump_boundaries(const DkParams& p, double e_max, int n_per_leg) {
  DkJumpBoundaries out;
  const auto onset = dk_onset(p);
  if (!onset || n_per_leg < 2 || !(e_max > onset->energy_c)) return out;
  const double g = p.gamma();
  const double a = p.omega_k * p.omega_k - 3.0 * p.gamma3 * p.gamma3;
  const double b = 4.0 * g * p.gamma3;
  const double e_joint = (b + std::sqrt(b * b + 4.0 * a * g * g)) / (2.0 * a);
  const double ec = onset->energy_c;
  const double wd_plus = jump_point(p, ec, 1.0)->omega_d;
  const double wd_minus = jump_point(p, ec, -1.0)->omega_d;
  const double cusp_sign = std::abs(wd_plus - onset->omega_dc) <= std::abs(wd_minus - onset->omega_dc) ? 1.0 : -1.0;

  const auto leg = [&](std::vector<DkCurvePoint>& dst, double e0, double e1, double sign, bool dense_at_start) {
    for (int k = 0; k < n_per_leg; ++k) {
      const double s = static_cast<double>(k) / (n_per_leg - 1);
      const double t = dense_at_start ? s * s : 1.0 - (1.0 - s) * (1.0 - s);
      if (auto q = jump_point(p, e0 + (e1 - e0) * t, sign)) {
        if (!dst.empty() && dst.back().energy == q->energy && dst.back().omega_d == q->omega_d) continue;
        dst.push_back(*q);
      }
    }
  };
  leg(out.first, ec, e_max, cusp_sign, true);
  leg(out.second, ec, e_joint, cusp_sign, false);
  leg(out.second, e_joint, e_max, -cusp_sign, true);
  return out;
}

std::vector<DkMapCell> dk_stability_map(const DkParams& params, double wd_lo, double wd_hi, double p_lo, double p_hi,
                                        int n_wd, int n_p, int threads) {
  if (n_wd < 2 || n_p < 2) throw Error(ErrorCode::invalid_argument, "stability map needs at least 2x2 cells");
  std::vector<DkMapCell> cells(static_cast<std::size_t>(n_wd) * n_p);
  parallel_rows(n_p, threads, [&](int ip) {
    DkParams q = params;
    q.omega1 = p_lo + (p_hi - p_lo) * ip / (n_p - 1);
    for (int iw = 0; iw < n_wd; ++iw) {
      q.omega_d = wd_lo + (wd_hi - wd_lo) * iw / (n_wd - 1);
      const auto roots = dk_roots(q);
      int stable = 0;
      for (const auto& r : roots) stable += is_stable(r.stability);
      cells[static_cast<std::size_t>(ip) * n_wd + iw] = {q.omega_d, q.omega1, static_cast<int>(roots.size()), stable};
    }
  });
  return cells;
}

namespace {

cplx_d rk4_step(const DkParams& p, cplx_d c, double dt) {
  const cplx_d k1 = dk_velocity(p, c);
  const cplx_d k2 = dk_velocity(p, c + 0.5 * dt * k1);
  const cplx_d k3 = dk_velocity(p, c + 0.5 * dt * k2);
  const cplx_d k4 = dk_velocity(p, c + dt * k3);
  return c + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::vector<FlowSample> dk_flow(const DkParams& params, cplx_d c0, double dt, double t_max, int record_every) {
  params.validate();
  if (!(dt > 0.0) || !(t_max >= 0.0)) throw Error(ErrorCode::invalid_argument, "dt must be positive and t_max nonnegative");
  const long steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  const int stride = std::max(1, record_every);
  std::vector<FlowSample> out{{0.0, c0}};
  cplx_d c = c0;
  for (long n = 1; n <= steps; ++n) {
    c = rk4_step(params, c, dt);
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw Error(ErrorCode::integration_instability, "flow diverged at t = " + std::to_string(n * dt));
    if (n % stride == 0 || n == steps) out.push_back({n * dt, c});
  }
  return out;
}

int dk_attractor(const DkParams& params, const std::vector<DkSteadyState>& fixed_points, cplx_d c0,
                 const BasinOptions& options) {
  const long steps = static_cast<long>(std::ceil(options.t_max / options.dt));
  cplx_d c = c0;
  for (long n = 0; n <= steps; ++n) {
    for (std::size_t k = 0; k < fixed_points.size(); ++k)
      if (is_stable(fixed_points[k].stability) && std::abs(c - fixed_points[k].amplitude) < options.capture_radius)
        return static_cast<int>(k);
    c = rk4_step(params, c, options.dt);
    if (!(std::abs(c) < 1e12)) return -1;
  }
  return -1;
}

cplx_d FlowMap::cell_center(int i_re, int i_im) const {
  const double re = n_re > 1 ? re_lo + (re_hi - re_lo) * i_re / (n_re - 1) : re_lo;
  const double im = n_im > 1 ? im_lo + (im_hi - im_lo) * i_im / (n_im - 1) : im_lo;
  return {re, im};
}

FlowMap dk_basins(const DkParams& params, const BasinOptions& options) {
  if (options.n_re < 2 || options.n_im < 2) throw Error(ErrorCode::invalid_argument, "basin grid needs at least 2x2 cells");
  FlowMap map;
  map.fixed_points = dk_roots(params);
  int n_stable = 0, n_saddle = 0;
  for (const auto& f : map.fixed_points) {
    n_stable += is_stable(f.stability);
    n_saddle += f.stability == DkStability::saddle;
  }
  map.bistable = n_stable == 2 && n_saddle == 1;

  map.re_lo = options.re_lo;
  map.re_hi = options.re_hi;
  map.im_lo = options.im_lo;
  map.im_hi = options.im_hi;
  if (map.re_lo == 0.0 && map.re_hi == 0.0 && map.im_lo == 0.0 && map.im_hi == 0.0) {
    double r = 0.0;
    for (const auto& f : map.fixed_points) r = std::max(r, std::abs(f.amplitude));
    r = 1.5 * r + 1.0;
    map.re_lo = map.im_lo = -r;
    map.re_hi = map.im_hi = r;
  }
  map.n_re = options.n_re;
  map.n_im = options.n_im;
  map.labels.assign(static_cast<std::size_t>(map.n_re) * map.n_im, -1);
  parallel_rows(map.n_im, options.threads, [&](int ii) {
    for (int ir = 0; ir < map.n_re; ++ir)
      map.labels[static_cast<std::size_t>(ii) * map.n_re + ir] =
          dk_attractor(params, map.fixed_points, map.cell_center(ir, ii), options);
  });

  if (!map.bistable) return map;

  // Bisect every edge between cells that flow to different attractors.
  struct Edge {
    cplx_d a, b;
    int la;
  };
  std::vector<Edge> edges;
  const auto label = [&](int ir, int ii) { return map.labels[static_cast<std::size_t>(ii) * map.n_re + ir]; };
  for (int ii = 0; ii < map.n_im; ++ii)
    for (int ir = 0; ir < map.n_re; ++ir) {
      const int l = label(ir, ii);
      if (l < 0) continue;
      if (ir + 1 < map.n_re && label(ir + 1, ii) >= 0 && label(ir + 1, ii) != l)
        edges.push_back({map.cell_center(ir, ii), map.cell_center(ir + 1, ii), l});
      if (ii + 1 < map.n_im && label(ir, ii + 1) >= 0 && label(ir, ii + 1) != l)
        edges.push_back({map.cell_center(ir, ii), map.cell_center(ir, ii + 1), l});
    }
  map.separatrix.resize(edges.size());
  parallel_rows(static_cast<int>(edges.size()), options.threads, [&](int k) {
    cplx_d a = edges[k].a, b = edges[k].b;
    for (int it = 0; it < options.bisection_steps; ++it) {
      const cplx_d mid = 0.5 * (a + b);
      (dk_attractor(params, map.fixed_points, mid, options) == edges[k].la ? a : b) = mid;
    }
    map.separatrix[k] = 0.5 * (a + b);
  });

  const auto saddle = std::find_if(map.fixed_points.begin(), map.fixed_points.end(),
                                   [](const auto& f) { return f.stability == DkStability::saddle; });
  const auto j = dk_jacobian(params, saddle->amplitude);
  const double tr = j[0] + j[3], det = j[0] * j[3] - j[1] * j[2];
  const double lam = 0.5 * tr - std::sqrt(0.25 * tr * tr - det);  // negative eigenvalue
  cplx_d dir = std::abs(j[1]) > std::abs(j[2]) ? cplx_d(j[1], lam - j[0]) : cplx_d(lam - j[3], j[2]);
  dir /= std::abs(dir);
  const cplx_d origin = saddle->amplitude;
  std::sort(map.separatrix.begin(), map.separatrix.end(), [&](cplx_d u, cplx_d v) {
    return ((u - origin) * std::conj(dir)).real() < ((v - origin) * std::conj(dir)).real();
  });
  return map;
}

}  // namespace bistab
