#include "doctest.h"

#include <cmath>
#include <random>

#include "bistab/error.hpp"
#include "bistab/master_equation.hpp"
#include "bistab/polynomial.hpp"
#include "bistab/rd_model.hpp"

using namespace bistab;

namespace {

RdParams dimless(double D, double W, double delta) {
  RdParams p;
  p.D = D;
  p.W = W;
  p.delta = delta;
  return p;
}

// Sign changes of F on a dense z grid: an oracle independent of the cubic solver.
int sign_change_roots(double D, double W, double delta, int n = 200000) {
  int count = 0;
  double prev = rd_f(D, W, delta, 0.0);
  for (int k = 1; k <= n; ++k) {
    const double f = rd_f(D, W, delta, static_cast<double>(k) / n);
    if ((prev < 0.0) != (f < 0.0)) ++count;
    prev = f;
  }
  return count;
}

// Detuning window bounded by the fold curves at drive W.
std::pair<double, double> window(double D, double w) {
  const auto bounds = rd_jump_boundaries(D, 400);
  double lo = 0.0, hi = 0.0;
  for (std::size_t k = 1; k < bounds.lower.size(); ++k)
    if ((bounds.lower[k - 1].W - w) * (bounds.lower[k].W - w) <= 0.0) lo = bounds.lower[k].delta;
  for (std::size_t k = 1; k < bounds.upper.size(); ++k)
    if ((bounds.upper[k - 1].W - w) * (bounds.upper[k].W - w) <= 0.0) hi = bounds.upper[k].delta;
  return {lo, hi};
}

double smallest_z(double D, double W, double delta) { return rd_roots(dimless(D, W, delta)).states.front().z; }

// dz/ddelta along the smallest root via the implicit function theorem.
double implicit_slope(double D, double W, double delta) {
  const double z = smallest_z(D, W, delta);
  const double h = 1e-6;
  const double f_delta = (rd_f(D, W, delta + h, z) - rd_f(D, W, delta - h, z)) / (2 * h);
  const double f_z = (rd_f(D, W, delta, z + h) - rd_f(D, W, delta, z - h)) / (2 * h);
  return -f_delta / f_z;
}

}  // namespace

TEST_CASE("undriven RD has the single root z = 1") {
  for (double D : {0.0, 0.5, 3.0, 40.0})
    for (double delta : {-3.0, 0.0, 2.5}) {
      const auto r = rd_roots(dimless(D, 0.0, delta));
      REQUIRE(r.states.size() == 1);
      CHECK(r.states[0].z == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(r.states[0].stability == Stability::stable);
    }
}

TEST_CASE("cusp at D = 1") {
  const auto r = rd_roots(dimless(1.0, 1.0, 1.0));
  REQUIRE(r.states.size() == 1);
  CHECK(std::abs(r.states[0].z - 0.5) < 1e-4);
  CHECK(r.states[0].residual < 1e-10);
}

TEST_CASE("three roots inside the D = 3 bistable window") {
  const double D = 3.0;
  const auto onset = *rd_onset_points(D);
  // Midpoint of the window at a W between W- and W+.
  const double w = std::sqrt(onset.minus.W * onset.plus.W);
  const auto [lo, hi] = window(D, w);
  REQUIRE(lo < hi);
  for (int k = 1; k < 10; ++k) {
    const double delta = lo + (hi - lo) * k / 10.0;
    const auto r = rd_roots(dimless(D, w, delta));
    CHECK(sign_change_roots(D, w, delta) == 3);
    REQUIRE(r.states.size() == 3);
    int stable = 0;
    for (const auto& s : r.states) {
      stable += s.stability == Stability::stable;
      CHECK(s.residual < 1e-10);
    }
    CHECK(stable == 2);
    CHECK(r.states[1].stability == Stability::unstable);
  }
}

TEST_CASE("root residual and count parity over random parameters") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ud(0.0, 10.0), uw(0.0, 12.0), udelta(-5.0, 12.0);
  for (int k = 0; k < 500; ++k) {
    const double D = ud(rng), W = uw(rng), delta = udelta(rng);
    const auto r = rd_roots(dimless(D, W, delta));
    CHECK((r.states.size() == 1 || r.states.size() == 3));
    CHECK(static_cast<int>(r.states.size()) == sign_change_roots(D, W, delta, 20000));
    for (const auto& s : r.states) {
      CHECK(s.residual < 1e-10);
      CHECK(s.z >= 0.0);
      CHECK(s.z <= 1.0);
    }
  }
}

TEST_CASE("stability classification agrees with time integration") {
  const double D = 3.0, W = 1.0;
  const auto [lo, hi] = window(D, W);
  const double delta = 0.5 * (lo + hi);
  const RdParams p = dimless(D, W, delta);
  const auto r = rd_roots(p);
  REQUIRE(r.states.size() == 3);
  const double kappa = p.kappa(), a = p.drive();
  for (const auto& s : r.states) {
    // Perturb and integrate the normalized Bloch equations.
    std::complex<double> pp = s.p_plus + 1e-4;
    double z = s.z + 1e-4;
    const double dt = 1e-3;
    const auto f = [&](std::complex<double> q, double zz, std::complex<double>& dq, double& dz) {
      const std::complex<double> i(0.0, 1.0);
      dq = i * delta * q - i * kappa * q * zz - i * a * zz - q;
      dz = (i * a * (std::conj(q) - q) / 2.0).real() - (zz - 1.0);
    };
    for (int n = 0; n < 40000; ++n) {
      std::complex<double> k1, k2, k3, k4;
      double l1, l2, l3, l4;
      f(pp, z, k1, l1);
      f(pp + dt / 2 * k1, z + dt / 2 * l1, k2, l2);
      f(pp + dt / 2 * k2, z + dt / 2 * l2, k3, l3);
      f(pp + dt * k3, z + dt * l3, k4, l4);
      pp += dt / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      z += dt / 6 * (l1 + 2 * l2 + 2 * l3 + l4);
    }
    const bool stayed = std::abs(z - s.z) < 1e-6;
    CHECK(stayed == (s.stability == Stability::stable));
  }
}

TEST_CASE("physical parameters and pull sign") {
  RdPhysical phys;
  phys.omega_k = -30.0;
  phys.t1 = 2.0;
  phys.t2 = 0.5;
  phys.pz0 = -0.8;
  phys.omega1 = 3.0;
  phys.omega_d = 4.0;
  auto p = RdParams::from_physical(phys);
  CHECK(p.D == doctest::Approx(std::pow(30.0 * 0.5 * 0.8 / 4.0, 2)));
  CHECK(p.W == doctest::Approx(9.0 * 2.0 * 0.5 / 2.0));
  CHECK(p.delta == doctest::Approx(2.0));
  CHECK(p.pull == 1.0);
  CHECK_NOTHROW(p.validate());
  p.W *= 1.001;
  CHECK_THROWS_AS(p.validate(), Error);

  // P+ follows the closed-form steady-state relation.
  p = RdParams::from_physical(phys);
  for (const auto& s : rd_roots(p).states) {
    const double pz = s.z * phys.pz0;
    const std::complex<double> expected =
        std::complex<double>(0.0, phys.omega1 * phys.t2 * pz) /
        std::complex<double>(-1.0, (phys.omega_d - phys.omega_k * pz) * phys.t2);
    CHECK(std::abs(s.p_plus - expected) < 1e-12);
  }

  // Reversed pull mirrors the response in detuning.
  phys.omega_k = 30.0;
  const auto mirrored = RdParams::from_physical(phys);
  CHECK(mirrored.pull == -1.0);
  const auto a = rd_roots(mirrored).states;
  const auto b = rd_roots(dimless(mirrored.D, mirrored.W, -mirrored.delta)).states;
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].z == doctest::Approx(b[k].z).epsilon(1e-12));
    CHECK(a[k].stability == b[k].stability);
  }
}

TEST_CASE("peak detuning") {
  CHECK(rd_peak_delta(1.0, 0.0).delta == 4.0);
  CHECK(rd_peak_delta(1.0, 1.0).delta == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
  CHECK(rd_peak_delta(1.0, 1.0).z == doctest::Approx(1.0 / 3.0));

  const double D = 3.0, W = 1.0;
  // Bisection on the sign of dz/ddelta.
  double lo = 0.0, hi = 6.0;
  REQUIRE(implicit_slope(D, W, lo) < 0.0);
  REQUIRE(implicit_slope(D, W, hi) > 0.0);
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (implicit_slope(D, W, mid) < 0.0 ? lo : hi) = mid;
  }
  const auto peak = rd_peak_delta(D, W);
  CHECK(std::abs(0.5 * (lo + hi) - peak.delta) < 1e-8);
  CHECK(smallest_z(D, W, peak.delta) == doctest::Approx(peak.z).epsilon(1e-10));

  // Golden-section minimum of z(delta) as a cruder second opinion.
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = 6.0;
  for (int it = 0; it < 200 && b - a > 1e-12; ++it) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    (smallest_z(D, W, c) < smallest_z(D, W, d) ? b : a) = (smallest_z(D, W, c) < smallest_z(D, W, d) ? d : c);
  }
  CHECK(std::abs(0.5 * (a + b) - peak.delta) < 1e-6);

  const double h = 1e-5;
  CHECK(std::abs((smallest_z(D, W, peak.delta + h) - smallest_z(D, W, peak.delta - h)) / (2 * h)) < 1e-6);
}

TEST_CASE("onset points") {
  CHECK_FALSE(rd_onset_points(0.9).has_value());
  CHECK_THROWS_AS(rd_onset_points(0.0), Error);

  const auto one = *rd_onset_points(1.0);
  for (const auto& p : {one.plus, one.minus}) {
    CHECK(std::abs(p.z - 0.5) < 1e-12);
    CHECK(std::abs(p.delta - 1.0) < 1e-12);
    CHECK(std::abs(p.W - 1.0) < 1e-12);
  }

  // Onset drives bracket the drives at which three roots exist (brute-force scan).
  {
    const double D = 100.0;
    const auto big = *rd_onset_points(D);
    const auto has_three = [&](double w) {
      for (int k = 0; k <= 20000; ++k) {
        const double delta = -20.0 + 80.0 * k / 20000.0;
        if (rd_roots(dimless(D, w, delta)).states.size() == 3) return true;
      }
      return false;
    };
    CHECK_FALSE(has_three(big.minus.W * 0.97));
    CHECK(has_three(big.minus.W * 1.03));
    CHECK(has_three(big.plus.W * 0.97));
    CHECK_FALSE(has_three(big.plus.W * 1.03));
  }

  for (double D : {1.5, 3.0, 10.0}) {
    const auto o = *rd_onset_points(D);
    for (const auto& p : {o.plus, o.minus}) {
      const auto c = rd_cubic(D, p.W, p.delta);
      const double f = cubic_value(c, p.z);
      const double fz = cubic_derivative(c, p.z);
      const double fzz = 6.0 * c[3] * p.z + 2.0 * c[2];
      CHECK(std::abs(f) < 1e-9);
      CHECK(std::abs(fz) < 1e-9);
      CHECK(std::abs(fzz) < 1e-9);
    }
    CHECK(o.plus.W > o.minus.W);
    CHECK(o.plus.z < o.minus.z);
  }
}

TEST_CASE("onset drive estimate") {
  CHECK(rd_onset_drive_estimate(-2.0, 4.0, 1.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(rd_onset_drive_estimate(0.0, 1.0, 1.0), Error);
}

TEST_CASE("jump curves") {
  const auto excluded = rd_jump_curves(0.8, {0.5});
  CHECK(excluded.bistability_excluded);
  CHECK(excluded.plus.empty());

  const auto cusp = rd_jump_curves(1.0, {0.3, 0.5, 0.7});
  REQUIRE(cusp.plus.size() == 1);
  REQUIRE(cusp.minus.size() == 1);
  CHECK(cusp.plus[0].delta == doctest::Approx(1.0));
  CHECK(cusp.minus[0].delta == doctest::Approx(1.0));
  CHECK(cusp.plus[0].W == doctest::Approx(1.0));

  const double D = 3.0;
  std::vector<double> zs;
  for (int k = 0; k <= 2000; ++k) zs.push_back(k / 2000.0);
  const auto curves = rd_jump_curves(D, zs);
  CHECK(curves.plus.size() > 100);
  for (const auto* branch : {&curves.plus, &curves.minus})
    for (const auto& p : *branch) {
      const auto c = rd_cubic(D, p.W, p.delta);
      CHECK(std::abs(cubic_value(c, p.z)) < 1e-9);
      CHECK(std::abs(cubic_derivative(c, p.z)) < 1e-9);
      CHECK(std::abs(monic_cubic_discriminant(c[3], c[2], c[1], c[0])) < 1e-7);
      CHECK(p.W >= 0.0);
    }

  const auto onset = *rd_onset_points(D);
  const auto b = rd_jump_boundaries(D, 400);
  for (const auto* edge : {&b.lower, &b.upper}) {
    REQUIRE(edge->size() > 10);
    CHECK(std::abs(edge->front().delta - onset.minus.delta) < 1e-7);
    CHECK(std::abs(edge->front().W - onset.minus.W) < 1e-7);
    CHECK(std::abs(edge->back().delta - onset.plus.delta) < 1e-7);
    CHECK(std::abs(edge->back().W - onset.plus.W) < 1e-7);
  }
}

TEST_CASE("stability maps") {
  const auto flat = rd_stability_map(0.5, -5.0, 10.0, 0.0, 10.0, 60, 60);
  for (const auto& c : flat.cells) CHECK_FALSE(c.bistable());

  const double D = 3.0;
  const auto onset = *rd_onset_points(D);
  const int n = 120;
  const double d_lo = -2.0, d_hi = 8.0, w_lo = 0.0, w_hi = 10.0;
  const auto map = rd_stability_map(D, d_lo, d_hi, w_lo, w_hi, n, n, 2);
  const auto serial = rd_stability_map(D, d_lo, d_hi, w_lo, w_hi, n, n, 1);
  int bistable = 0;
  for (std::size_t k = 0; k < map.cells.size(); ++k) {
    CHECK(map.cells[k].n_roots == serial.cells[k].n_roots);
    bistable += map.cells[k].bistable();
    if (map.cells[k].W < onset.minus.W || map.cells[k].W > onset.plus.W) CHECK_FALSE(map.cells[k].bistable());
  }
  CHECK(bistable > 100);

  // Boundary cells lie within one cell of the fold curves.
  const auto b = rd_jump_boundaries(D, 4000);
  const double cd = (d_hi - d_lo) / (n - 1), cw = (w_hi - w_lo) / (n - 1);
  for (int iw = 0; iw + 1 < n; ++iw)
    for (int id = 0; id + 1 < n; ++id) {
      const bool here = map.at(id, iw).bistable();
      if (here == map.at(id + 1, iw).bistable() && here == map.at(id, iw + 1).bistable()) continue;
      double best = 1e300;
      for (const auto* edge : {&b.lower, &b.upper})
        for (const auto& p : *edge)
          best = std::min(best, std::max(std::abs(p.delta - map.at(id, iw).delta) / cd, std::abs(p.W - map.at(id, iw).W) / cw));
      CHECK(best <= 1.0 + 1e-9);
    }
}

TEST_CASE("response curves") {
  std::vector<double> grid;
  for (int k = 0; k <= 600; ++k) grid.push_back(-2.0 + 10.0 * k / 600.0);
  for (const auto& p : rd_response_curves(3.0, {0.0}, grid)) CHECK(p.z == doctest::Approx(1.0));

  const double D = 3.0;
  const auto onset = *rd_onset_points(D);
  // Tangency at W-: the cubic has a triple root at delta-.
  const auto c = rd_cubic(D, onset.minus.W, onset.minus.delta);
  CHECK(std::abs(monic_cubic_discriminant(c[3], c[2], c[1], c[0])) < 1e-9);
  for (const auto& p : rd_response_curves(D, {onset.minus.W * (1.0 - 1e-3)}, grid)) CHECK(p.branch == 0);

  const std::vector<double> ws{0.5 * onset.minus.W, 2.0 * onset.minus.W, 1.0, 4.0, 1.5 * onset.plus.W};
  const auto curves = rd_response_curves(D, ws, grid);
  for (double w : ws) {
    int multi = 0;
    for (const auto& p : curves)
      if (p.W == w && p.branch == 1) ++multi;
    const bool inside = w > onset.minus.W && w < onset.plus.W;
    CHECK((multi > 0) == inside);
  }
  for (const auto& p : curves)
    if (p.branch == 1) CHECK(p.stability == Stability::unstable);
}

TEST_CASE("D = 0 reproduces the single-spin master equation") {
  SpinSystemParams sp;
  sp.gamma1 = 1.0;
  sp.gamma_phi = 0.3;
  sp.n_thermal = 0.2;
  sp.omega1 = 1.1;
  sp.set_detuning(0.9);
  IntegrationOptions opt;
  opt.dt = 0.01;
  opt.t_max = 300.0;
  const auto me = integrate_to_steady(thermal_state(sp), sp, Frame::rotating, opt);
  REQUIRE(me.converged);
  RdPhysical phys;
  phys.t1 = sp.t1();
  phys.t2 = sp.t2();
  phys.pz0 = sp.pz0();
  phys.omega1 = sp.omega1;
  phys.omega_d = sp.detuning();
  const auto r = rd_roots(RdParams::from_physical(phys));
  REQUIRE(r.states.size() == 1);
  CHECK(std::abs(r.states[0].z * phys.pz0 - me.trajectory.back().sz) < 1e-6);
}
