#include "doctest.h"

#include <cmath>

#include "bistab/error.hpp"
#include "bistab/master_equation.hpp"
#include "oracles.hpp"
#include "random_states.hpp"

using namespace bistab;
using bistab::testing::bloch_ratio;
using bistab::testing::random_density;
using bistab::testing::random_hermitian;
using bistab::testing::random_unitary;

namespace {

SpinSystemParams two_spin_params() {
  SpinSystemParams p;
  p.spins = 2;
  p.gamma1 = 1.0;
  p.gamma_phi = 0.3;
  p.n_thermal = 0.2;
  p.omega_k = 2.0;
  p.omega1 = 1.5;
  p.set_detuning(0.7);
  p.gamma_d = 1.2;
  return p;
}

Operator bell_state() {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
  psi(0) = psi(3) = 1.0;
  return pure_state(psi);
}

}  // namespace

TEST_CASE("lindblad fixed point of one spin") {
  SpinSystemParams p;
  p.gamma1 = 1.3;
  p.gamma_phi = 0.4;
  p.n_thermal = 0.35;
  // Detailed balance: P(up)/P(down) = n0/(n0+1).
  Operator rho = Operator::Zero(2, 2);
  rho(0, 0) = p.n_thermal / (2.0 * p.n_thermal + 1.0);
  rho(1, 1) = (p.n_thermal + 1.0) / (2.0 * p.n_thermal + 1.0);
  CHECK(max_abs(lindblad_rhs(rho, p)) < 1e-12);
  CHECK(max_abs(rho - thermal_state(p)) < 1e-15);
}

TEST_CASE("lindblad is trace-free and annihilates the dark state") {
  std::mt19937_64 rng(7);
  auto p = two_spin_params();
  for (int k = 0; k < 10; ++k) CHECK(std::abs(lindblad_rhs(random_density(4, rng), p).trace()) < 1e-13);

  p.gamma_phi = 0.0;
  p.n_thermal = 0.0;
  Operator down = Operator::Zero(4, 4);
  down(3, 3) = 1.0;
  CHECK(max_abs(lindblad_rhs(down, p)) < 1e-15);

  Operator wrong = Operator::Identity(2, 2) / 2.0;
  CHECK_THROWS_AS(lindblad_rhs(wrong, p), Error);
}

TEST_CASE("disentanglement operator on product and Bell states") {
  std::mt19937_64 rng(11);
  auto p = two_spin_params();
  p.gamma_d = 1.0;
  p.eta = 1.0;
  for (int k = 0; k < 5; ++k) {
    const Operator rho = tensor(random_density(2, rng), random_density(2, rng));
    const auto th = theta_operator(rho, p);
    CHECK(max_abs(th.theta) < 1e-12);
    CHECK(std::abs(th.tau_pairs.at(0)) < 1e-12);
  }
  const auto bell = theta_operator(bell_state(), p);
  CHECK(bell.tau_pairs.at(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(is_hermitian(bell.theta, 1e-12));

  SpinSystemParams one;
  const auto single = theta_operator(Operator::Identity(2, 2) / 2.0, one);
  CHECK(single.tau_pairs.empty());
  CHECK(max_abs(single.theta) == 0.0);
}

TEST_CASE("tau is invariant under local unitaries") {
  std::mt19937_64 rng(13);
  const auto p = two_spin_params();
  for (int k = 0; k < 10; ++k) {
    const Operator rho = random_density(4, rng);
    const Operator u = tensor(random_unitary(2, rng), random_unitary(2, rng));
    const double tau = theta_operator(rho, p).tau_pairs[0];
    const double rotated = theta_operator(u * rho * u.adjoint(), p).tau_pairs[0];
    CHECK(std::abs(tau - rotated) < 1e-10);
    CHECK(tau >= -1e-12);
  }
}

TEST_CASE("three spins sum over pairs") {
  SpinSystemParams p;
  p.spins = 3;
  p.gamma_d = 2.0;
  // Bell pair on sites (1,2), spin 3 in a product state.
  Operator rho = tensor(bell_state(), Operator::Identity(2, 2) / 2.0);
  const auto th = theta_operator(rho, p);
  REQUIRE(th.tau_pairs.size() == 3);
  CHECK(th.tau_pairs[0] == doctest::Approx(3.0));
  CHECK(std::abs(th.tau_pairs[1]) < 1e-12);
  CHECK(std::abs(th.tau_pairs[2]) < 1e-12);
  CHECK(is_hermitian(th.theta, 1e-12));
}

TEST_CASE("mme rhs reduces to the linear flow at gamma_d = 0") {
  std::mt19937_64 rng(17);
  auto p = two_spin_params();
  p.gamma_d = 0.0;
  const MasterEquation eq(p, Frame::rotating);
  const cplx i(0.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    const Operator rho = random_density(4, rng);
    const Operator h = eq.hamiltonian();
    const Operator linear = i * (rho * h - h * rho) + eq.lindblad(rho);
    CHECK(max_abs(mme_rhs(rho, p, Frame::rotating) - linear) < 1e-12);
  }
}

TEST_CASE("mme rhs with disentanglement: trace, hermiticity, gauge") {
  std::mt19937_64 rng(19);
  const auto p = two_spin_params();
  const MasterEquation eq(p, Frame::rotating);
  const cplx i(0.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const Operator rho = random_density(4, rng);
    const Operator out = eq.rhs(rho);
    CHECK(std::abs(out.trace()) < 1e-12);
    CHECK(is_hermitian(out, 1e-12));

    // Independent assembly of the same generator.
    const Operator h = eq.hamiltonian();
    const Operator theta = eq.theta(rho).theta;
    const Operator reference = i * (rho * h - h * rho) + eq.lindblad(rho) + disentanglement_term(rho, theta);
    CHECK(max_abs(out - reference) < 1e-12);

    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const double c = u(rng);
    const Operator shifted = theta + c * Operator::Identity(4, 4);
    CHECK(max_abs(disentanglement_term(rho, shifted) - disentanglement_term(rho, theta)) < 1e-12);
  }
  // Product states see no disentanglement contribution.
  const Operator prod = tensor(random_density(2, rng), random_density(2, rng));
  CHECK(max_abs(disentanglement_term(prod, eq.theta(prod).theta)) < 1e-12);
}

TEST_CASE("rotating frame rejects omega_a") {
  auto p = two_spin_params();
  p.omega_a = 0.1;
  try {
    mme_rhs(thermal_state(p), p, Frame::rotating);
    FAIL("expected unsupported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unsupported);
  }
  CHECK_NOTHROW(mme_rhs(thermal_state(p), p, Frame::lab, 0.3));
}

TEST_CASE("lab-frame hamiltonian sign conventions") {
  SpinSystemParams p;
  p.omega0 = 3.0;
  p.omega_t = 3.5;
  p.omega1 = 0.8;
  const MasterEquation main_eq(p, Frame::lab);
  p.zeeman_sign = ZeemanSign::appendix;
  const MasterEquation app_eq(p, Frame::lab);
  const double t = 0.37;
  const auto s = collective_spin(1);
  const cplx e = std::polar(1.0, p.omega_t * t);
  const Operator main_ref = -1.5 * s.sz + 0.2 * (e * s.sp + std::conj(e) * s.sm) + p.omega_k * Operator::Identity(2, 2) * 0.0;
  CHECK(max_abs(main_eq.hamiltonian(t) - main_ref) < 1e-14);
  const Operator app_ref = 1.5 * s.sz + 0.2 * (std::conj(e) * s.sp + e * s.sm);
  CHECK(max_abs(app_eq.hamiltonian(t) - app_ref) < 1e-14);
}

TEST_CASE("single spin relaxes to the thermal polarization") {
  SpinSystemParams p;
  p.gamma1 = 1.0;
  p.gamma_phi = 0.2;
  p.n_thermal = 0.4;
  p.omega_k = 3.0;
  Operator up = Operator::Zero(2, 2);
  up(0, 0) = 1.0;
  IntegrationOptions opt;
  opt.dt = 0.01;
  opt.t_max = 100.0;
  const auto rep = integrate_to_steady(up, p, Frame::rotating, opt);
  CHECK(rep.converged);
  CHECK(std::abs(rep.trajectory.back().sz - p.pz0()) < 1e-6);
  CHECK(rep.residual < 2e-9);
}

TEST_CASE("single driven spin matches the saturation formula") {
  SpinSystemParams p;
  p.gamma1 = 1.0;
  p.gamma_phi = 0.5;
  p.n_thermal = 0.1;
  p.omega_k = 4.0;  // proportional to identity at L = 1
  for (double wd : {-2.0, 0.0, 1.5}) {
    p.omega1 = 1.7;
    p.set_detuning(wd);
    IntegrationOptions opt;
    opt.dt = 0.01;
    opt.t_max = 200.0;
    const auto rep = integrate_to_steady(thermal_state(p), p, Frame::rotating, opt);
    REQUIRE(rep.converged);
    const double expected = p.pz0() * bloch_ratio(wd, p.omega1, p.t1(), p.t2());
    CHECK(std::abs(rep.trajectory.back().sz - expected) < 1e-6);
  }
}

TEST_CASE("lab frame single spin approaches the same saturation") {
  SpinSystemParams p;
  p.gamma1 = 1.0;
  p.gamma_phi = 0.5;
  p.omega0 = 20.0;
  p.omega_t = 21.0;
  p.omega1 = 0.9;
  IntegrationOptions opt;
  opt.dt = 0.002;
  opt.t_max = 40.0;
  const auto rep = integrate_to_steady(thermal_state(p), p, Frame::lab, opt);
  CHECK_FALSE(rep.converged);
  const double expected = p.pz0() * bloch_ratio(1.0, p.omega1, p.t1(), p.t2());
  CHECK(std::abs(rep.trajectory.back().sz - expected) < 1e-3);
}

TEST_CASE("linear flow has a unique steady state") {
  std::mt19937_64 rng(23);
  auto p = two_spin_params();
  p.gamma_d = 0.0;
  IntegrationOptions opt;
  opt.dt = 0.005;
  opt.t_max = 400.0;
  const auto a = integrate_to_steady(thermal_state(p), p, Frame::rotating, opt);
  const auto b = integrate_to_steady(random_density(4, rng), p, Frame::rotating, opt);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(max_abs(a.rho - b.rho) < 1e-6);
}

TEST_CASE("trajectory stays a valid density operator") {
  std::mt19937_64 rng(29);
  const auto p = two_spin_params();
  const MasterEquation eq(p, Frame::rotating);
  IntegrationOptions opt;
  opt.dt = 0.01;
  opt.t_max = 0.2;
  opt.tol = 1e-300;
  Operator rho = random_density(4, rng);
  for (int k = 0; k < 50; ++k) {
    rho = integrate_to_steady(rho, eq, opt).rho;
    const auto c = check_density(rho);
    CHECK(c.valid(1e-10, 1e-9, 1e-8));
  }
}

TEST_CASE("oversized steps are reported as an instability") {
  auto p = two_spin_params();
  p.gamma_d = 0.0;
  p.omega_k = 50.0;
  IntegrationOptions opt;
  opt.dt = 1.0;
  opt.t_max = 200.0;
  opt.positivity_stride = 1;
  try {
    integrate_to_steady(thermal_state(p), p, Frame::rotating, opt);
    FAIL("expected instability");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::integration_instability);
  }
}

TEST_CASE("single-spin sweeps show no hysteresis") {
  SpinSystemParams p;
  p.gamma1 = 1.0;
  p.gamma_phi = 0.1;
  p.omega1 = 3.0;
  p.omega_k = 10.0;
  p.gamma_d = 5.0;
  IntegrationOptions opt;
  opt.dt = 0.01;
  opt.t_max = 200.0;
  SweepSpec sweep{SweepAxis::detuning, -6.0, 6.0, 13, SweepDirection::up};
  const auto up = hysteresis_sweep(p, sweep, opt);
  sweep.direction = SweepDirection::down;
  const auto down = hysteresis_sweep(p, sweep, opt);
  REQUIRE(up.size() == down.size());
  for (std::size_t k = 0; k < up.size(); ++k) {
    const auto& d = down[down.size() - 1 - k];
    CHECK(up[k].value == doctest::Approx(d.value));
    CHECK(std::abs(up[k].sz - d.sz) < 1e-5);
    CHECK(up[k].converged);
  }
}

TEST_CASE("drive-axis sweep and error propagation") {
  auto p = two_spin_params();
  p.gamma_d = 0.0;
  IntegrationOptions opt;
  opt.dt = 0.01;
  opt.t_max = 300.0;
  const auto pts = hysteresis_sweep(p, {SweepAxis::drive, 0.0, 2.0, 3, SweepDirection::up}, opt);
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].value == 0.0);
  CHECK(std::abs(pts[0].sz - 2.0 * p.pz0()) < 1e-6);

  opt.dt = 5.0;
  opt.positivity_stride = 1;
  p.omega_k = 50.0;
  try {
    hysteresis_sweep(p, {SweepAxis::drive, 0.0, 2.0, 3, SweepDirection::up}, opt);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::integration_instability);
    CHECK(std::string(e.what()).find("sweep point") != std::string::npos);
  }
}
