#include "bistab/classical_spin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bistab/error.hpp"

namespace bistab {

double ClassicalParams::drive_period() const {
  if (omega_t == 0.0) throw Error(ErrorCode::invalid_argument, "drive period needs omega_T != 0");
  return 2.0 * std::numbers::pi / std::abs(omega_t);
}

void ClassicalParams::validate() const {
  if (!(t1 > 0.0) || !(t2 > 0.0)) throw Error(ErrorCode::invalid_argument, "T1 and T2 must be positive");
}

Vec3 classical_field(const Vec3& p, double t, const ClassicalParams& q) {
  const double phase = q.omega_t * t;
  return {-q.kx() * p.x() - q.omega1 * std::cos(phase), -q.ky() * p.y() + q.omega1 * std::sin(phase), q.omega0};
}

Vec3 classical_rhs(const Vec3& p, double t, const ClassicalParams& q) {
  const double phase = q.omega_t * t;
  const double hx = -q.kx() * p.x() - q.omega1 * std::cos(phase);
  const double hy = -q.ky() * p.y() + q.omega1 * std::sin(phase);
  const double hz = q.omega0;
  // z component written so the anisotropy part is exactly (kx - ky) Px Py.
  const double dz = (q.kx() - q.ky()) * p.x() * p.y() + p.x() * q.omega1 * std::sin(phase) +
                    p.y() * q.omega1 * std::cos(phase);
  Vec3 d(p.y() * hz - p.z() * hy, p.z() * hx - p.x() * hz, dz);
  d.x() -= p.x() / q.t2;
  d.y() -= p.y() / q.t2;
  d.z() -= (p.z() - q.sz0) / q.t1;
  return d;
}

std::vector<ClassicalSample> integrate_classical(const Vec3& p0, const ClassicalParams& params, double dt,
                                                 double t_max, int record_every, double t0) {
  params.validate();
  if (!(dt > 0.0) || !(t_max >= 0.0)) throw Error(ErrorCode::invalid_argument, "dt must be positive and t_max nonnegative");
  const long steps = std::lround(std::ceil(t_max / dt - 1e-9));
  const int stride = std::max(1, record_every);
  std::vector<ClassicalSample> out;
  out.reserve(static_cast<std::size_t>(steps / stride + 2));
  out.push_back({t0, p0});
  Vec3 p = p0;
  for (long n = 0; n < steps; ++n) {
    const double t = t0 + n * dt;
    const Vec3 k1 = classical_rhs(p, t, params);
    const Vec3 k2 = classical_rhs(p + 0.5 * dt * k1, t + 0.5 * dt, params);
    const Vec3 k3 = classical_rhs(p + 0.5 * dt * k2, t + 0.5 * dt, params);
    const Vec3 k4 = classical_rhs(p + dt * k3, t + dt, params);
    const Vec3 step = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!(step.norm() <= 0.5))
      throw Error(ErrorCode::step_size, "step moved P by " + std::to_string(step.norm()) + " at t = " + std::to_string(t));
    p += step;
    if ((n + 1) % stride == 0 || n + 1 == steps) out.push_back({t0 + (n + 1) * dt, p});
  }
  return out;
}

ClassicalSample to_rotating_frame(const ClassicalSample& s, const ClassicalParams& params) {
  const double c = std::cos(params.omega_t * s.t), sn = std::sin(params.omega_t * s.t);
  return {s.t, Vec3(c * s.p.x() - sn * s.p.y(), sn * s.p.x() + c * s.p.y(), s.p.z())};
}

namespace {

// Cubic Hermite interpolation using the vector field at the two bracketing samples.
Vec3 interpolate(const std::vector<ClassicalSample>& tr, double t, const ClassicalParams& q) {
  const auto it = std::lower_bound(tr.begin(), tr.end(), t, [](const ClassicalSample& s, double v) { return s.t < v; });
  if (it == tr.begin()) return tr.front().p;
  if (it == tr.end()) return tr.back().p;
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double h = b.t - a.t;
  if (h <= 0.0 || std::abs(b.t - t) < 1e-12 * std::max(1.0, std::abs(t))) return b.p;
  const double s = (t - a.t) / h;
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
  return h00 * a.p + h10 * h * classical_rhs(a.p, a.t, q) + h01 * b.p + h11 * h * classical_rhs(b.p, b.t, q);
}

}  // namespace

std::optional<LimitCycle> detect_limit_cycle(const std::vector<ClassicalSample>& tr, const ClassicalParams& params,
                                             const LimitCycleOptions& options) {
  if (tr.size() < 2 || params.omega_t == 0.0) return std::nullopt;
  const double period = params.drive_period();
  const double t_start = tr.front().t + options.transient_periods * period;
  const double t_end = tr.back().t;
  if (t_start + 2.0 * period > t_end + 1e-9 * period) return std::nullopt;

  LimitCycle cycle;
  cycle.period = period;
  Vec3 prev = interpolate(tr, t_start, params);
  double last_strobe = t_start;
  for (double t = t_start + period; t <= t_end + 1e-9 * period; t += period) {
    const Vec3 now = interpolate(tr, t, params);
    cycle.strobe_steps.push_back((now - prev).norm());
    prev = now;
    last_strobe = t;
  }
  cycle.closure_error = cycle.strobe_steps.back();
  if (!(cycle.closure_error < options.tolerance)) return std::nullopt;

  double lo = 1e300, hi = -1e300, excursion = 0.0;
  const Vec3 anchor = interpolate(tr, last_strobe, params);
  for (const auto& s : tr) {
    if (s.t < last_strobe - period - 1e-12 || s.t > last_strobe + 1e-12) continue;
    const double r = std::hypot(s.p.x(), s.p.y());
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    excursion = std::max(excursion, (s.p - anchor).norm());
  }
  if (excursion < options.min_excursion) return std::nullopt;
  cycle.wobble = 0.5 * (hi - lo);
  return cycle;
}

}  // namespace bistab
