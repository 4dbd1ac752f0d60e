#include "bistab/master_equation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "bistab/error.hpp"

namespace bistab {

namespace {

double expect(const Operator& op, const Operator& rho) {
  // Tr(op rho) without forming the product.
  return (op.transpose().cwiseProduct(rho)).sum().real();
}

cplx expect_complex(const Operator& op, const Operator& rho) {
  return (op.transpose().cwiseProduct(rho)).sum();
}

}  // namespace

DensityCheck check_density(const Operator& rho) {
  DensityCheck c;
  c.hermiticity_error = max_abs(rho - rho.adjoint());
  c.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
  const Operator h = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Operator> solver(h, Eigen::EigenvaluesOnly);
  c.min_eigenvalue = solver.eigenvalues().minCoeff();
  return c;
}

Operator tensor(const Operator& a, const Operator& b) {
  Operator out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

Operator thermal_state(const SpinSystemParams& params) {
  params.validate();
  const double pz = params.pz0();
  Operator single = Operator::Zero(2, 2);
  single(0, 0) = 0.5 * (1.0 + pz);
  single(1, 1) = 0.5 * (1.0 - pz);
  Operator rho = single;
  for (int l = 1; l < params.spins; ++l) rho = tensor(rho, single);
  return rho;
}

Operator pure_state(const Eigen::VectorXcd& psi) {
  const Eigen::VectorXcd v = psi / psi.norm();
  return v * v.adjoint();
}

Operator disentanglement_term(const Operator& rho, const Operator& theta) {
  const double mean = expect(theta, rho);
  return -theta * rho - rho * theta + 2.0 * mean * rho;
}

MasterEquation::MasterEquation(const SpinSystemParams& params, Frame frame)
    : params_(params), frame_(frame), spin_(collective_spin(params.spins)) {
  params_.validate();
  if (frame_ == Frame::rotating && params_.omega_a != 0.0)
    throw Error(ErrorCode::unsupported, "rotating frame requires omega_a = 0 (the omega_a term is not secular)");
  const int n = params_.spins;
  dim_ = Eigen::Index{1} << n;

  const auto pauli = pauli_basis();
  const cplx i(0.0, 1.0);
  const Operator sigma_p = pauli[0] + i * pauli[1];
  const Operator sigma_m = pauli[0] - i * pauli[1];
  const double n0 = params_.n_thermal;
  const double g1 = params_.gamma1;
  decay_sum_ = Operator::Zero(dim_, dim_);
  for (int l = 1; l <= n; ++l) {
    const std::array<std::pair<double, Operator>, 3> local{{
        {(n0 + 1.0) * g1 / 4.0, embed_single(sigma_m, l, n)},
        {n0 * g1 / 4.0, embed_single(sigma_p, l, n)},
        {(2.0 * n0 + 1.0) * params_.gamma_phi / 2.0, embed_single(pauli[2], l, n)},
    }};
    for (const auto& [rate, jump] : local) {
      if (rate == 0.0) continue;
      Channel ch{rate, jump, jump.adjoint()};
      decay_sum_ += rate * ch.jump_adj * ch.jump;
      channels_.push_back(std::move(ch));
    }
  }

  const Operator anisotropy = (spin_.sp * spin_.sm + spin_.sm * spin_.sp) / 8.0;
  if (frame_ == Frame::rotating) {
    h_static_ = -0.5 * params_.detuning() * spin_.sz + params_.omega_k * anisotropy -
                params_.omega_k * 0.5 * n * Operator::Identity(dim_, dim_) +
                0.25 * params_.omega1 * (spin_.sp + spin_.sm);
  } else {
    const double sign = params_.zeeman_sign == ZeemanSign::main_text ? -1.0 : 1.0;
    h_static_ = sign * 0.5 * params_.omega0 * spin_.sz + params_.omega_k * anisotropy +
                params_.omega_a * (spin_.sp * spin_.sp + spin_.sm * spin_.sm) / 8.0;
  }

  // Pair tables are kept even at gamma_d = 0 so tau is always reported.
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      PairTable t;
      t.a = a;
      t.b = b;
      for (int k = 0; k < 3; ++k) {
        t.local_a[k] = embed_single(pauli[k], a, n);
        t.local_b[k] = embed_single(pauli[k], b, n);
      }
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) t.product[3 * p + q] = t.local_a[p] * t.local_b[q];
      pairs_.push_back(std::move(t));
    }
  }
}

void MasterEquation::check_dim(const Operator& rho) const {
  if (rho.rows() != dim_ || rho.cols() != dim_)
    throw Error(ErrorCode::dimension_mismatch,
                "density operator is " + std::to_string(rho.rows()) + "x" + std::to_string(rho.cols()) +
                    ", expected " + std::to_string(dim_));
}

Operator MasterEquation::hamiltonian(double t) const {
  if (frame_ == Frame::rotating || params_.omega1 == 0.0) return h_static_;
  const double phase =
      (params_.zeeman_sign == ZeemanSign::main_text ? 1.0 : -1.0) * params_.omega_t * t;
  const cplx e(std::cos(phase), std::sin(phase));
  return h_static_ + 0.25 * params_.omega1 * (e * spin_.sp + std::conj(e) * spin_.sm);
}

Operator MasterEquation::lindblad(const Operator& rho) const {
  check_dim(rho);
  Operator out = -0.5 * (decay_sum_ * rho + rho * decay_sum_);
  for (const auto& ch : channels_) out.noalias() += ch.rate * (ch.jump * rho * ch.jump_adj);
  return out;
}

void MasterEquation::theta_into(const Operator& rho, Operator& theta, std::vector<double>* tau) const {
  theta.setZero(dim_, dim_);
  if (tau) tau->assign(pairs_.size(), 0.0);
  for (std::size_t k = 0; k < pairs_.size(); ++k) {
    const PairTable& t = pairs_[k];
    std::array<double, 3> ma{}, mb{};
    for (int p = 0; p < 3; ++p) {
      ma[p] = expect(t.local_a[p], rho);
      mb[p] = expect(t.local_b[p], rho);
    }
    double shift = 0.0;  // coefficient of the identity
    double tau_ab = 0.0;
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) {
        const double product_mean = ma[p] * mb[q];
        const double cov = expect(t.product[3 * p + q], rho) - product_mean;
        if (cov == 0.0) continue;
        theta.noalias() += (params_.eta * cov) * t.product[3 * p + q];
        shift -= params_.eta * cov * product_mean;
        tau_ab += params_.eta * cov * cov;
      }
    }
    theta.diagonal().array() += shift;
    if (tau) (*tau)[k] = tau_ab;
  }
}

DisentanglementOperator MasterEquation::theta(const Operator& rho) const {
  check_dim(rho);
  DisentanglementOperator out;
  theta_into(rho, out.theta, &out.tau_pairs);
  out.theta *= params_.gamma_d;
  return out;
}

Operator MasterEquation::rhs(const Operator& rho, double t) const {
  check_dim(rho);
  const cplx i(0.0, 1.0);
  // i[rho, H] - (K rho + rho K)/2 - Theta rho - rho Theta + 2<Theta> rho == A rho + rho A^dagger
  Operator a = -i * hamiltonian(t) - 0.5 * decay_sum_;
  if (params_.gamma_d > 0.0 && !pairs_.empty()) {
    Operator q;
    theta_into(rho, q, nullptr);
    q *= params_.gamma_d;
    const double mean = expect(q, rho);
    a -= q;
    a.diagonal().array() += mean;
  }
  Operator out = a * rho;
  out += out.adjoint().eval();
  for (const auto& ch : channels_) out.noalias() += ch.rate * (ch.jump * rho * ch.jump_adj);
  return out;
}

double MasterEquation::default_dt() const {
  const auto& p = params_;
  const int n = p.spins;
  double rate = std::max({std::abs(p.omega_k) * n, std::abs(p.omega1), p.gamma1 * (2.0 * p.n_thermal + 1.0),
                          p.gamma_phi * (2.0 * p.n_thermal + 1.0)});
  if (frame_ == Frame::rotating) {
    rate = std::max(rate, std::abs(p.detuning()));
  } else {
    rate = std::max({rate, std::abs(p.omega0), std::abs(p.omega_t), std::abs(p.omega_a) * n});
  }
  // ||Q_ab|| <= 3 eta, saturated by a Bell pair.
  rate = std::max(rate, p.gamma_d * 3.0 * p.eta * static_cast<double>(pairs_.size()));
  return 0.01 / rate;
}

Operator lindblad_rhs(const Operator& rho, const SpinSystemParams& params) {
  SpinSystemParams p = params;
  p.omega_a = 0.0;
  return MasterEquation(p, Frame::rotating).lindblad(rho);
}

DisentanglementOperator theta_operator(const Operator& rho, const SpinSystemParams& params) {
  SpinSystemParams p = params;
  p.omega_a = 0.0;
  return MasterEquation(p, Frame::rotating).theta(rho);
}

Operator mme_rhs(const Operator& rho, const SpinSystemParams& params, Frame frame, double t) {
  return MasterEquation(params, frame).rhs(rho, t);
}

EvolutionReport integrate_to_steady(const Operator& rho0, const SpinSystemParams& params, Frame frame,
                                    const IntegrationOptions& options) {
  return integrate_to_steady(rho0, MasterEquation(params, frame), options);
}

EvolutionReport integrate_to_steady(const Operator& rho0, const MasterEquation& eq,
                                    const IntegrationOptions& options) {
  const Eigen::Index dim = eq.dim();
  if (rho0.rows() != dim || rho0.cols() != dim)
    throw Error(ErrorCode::dimension_mismatch, "initial state has the wrong dimension");
  const DensityCheck initial = check_density(rho0);
  if (!initial.valid(1e-10, 1e-9, 1e-8))
    throw Error(ErrorCode::invalid_argument, "initial state is not a valid density operator");

  const double dt = options.dt > 0.0 ? options.dt : eq.default_dt();
  const double tol = options.tol > 0.0 ? options.tol : 1e-9 * static_cast<double>(dim);
  const long max_steps = static_cast<long>(std::ceil(options.t_max / dt));
  const int stride = std::max(1, options.positivity_stride);

  EvolutionReport report;
  Operator rho = rho0;
  double t = 0.0;
  auto record = [&](double time, const Operator& r) {
    report.trajectory.push_back({time, expect(eq.spin().sz, r), expect_complex(eq.spin().sp, r)});
  };
  record(t, rho);

  Operator k1, k2, k3, k4, stage;
  long step = 0;
  for (;; ++step) {
    k1 = eq.rhs(rho, t);
    report.residual = k1.norm();
    if (report.residual < tol) {
      report.converged = true;
      break;
    }
    if (step >= max_steps) break;
    stage = rho + (0.5 * dt) * k1;
    k2 = eq.rhs(stage, t + 0.5 * dt);
    stage = rho + (0.5 * dt) * k2;
    k3 = eq.rhs(stage, t + 0.5 * dt);
    stage = rho + dt * k3;
    k4 = eq.rhs(stage, t + dt);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    rho = (0.5 * (rho + rho.adjoint())).eval();
    rho /= rho.trace().real();
    t += dt;

    if ((step + 1) % stride == 0) {
      const double min_eig = check_density(rho).min_eigenvalue;
      if (!(min_eig >= -1e-6))
        throw Error(ErrorCode::integration_instability,
                    "density operator lost positivity (min eigenvalue " + std::to_string(min_eig) + " at t=" +
                        std::to_string(t) + "); retry with a smaller dt than " + std::to_string(dt));
    }
    if (options.record_every > 0 && (step + 1) % options.record_every == 0) record(t, rho);
  }
  const double min_eig = check_density(rho).min_eigenvalue;
  if (!(min_eig >= -1e-6))
    throw Error(ErrorCode::integration_instability,
                "density operator lost positivity (min eigenvalue " + std::to_string(min_eig) +
                    "); retry with a smaller dt than " + std::to_string(dt));
  if (report.trajectory.back().t != t) record(t, rho);
  report.rho = std::move(rho);
  report.steps = step;
  report.t = t;
  return report;
}

std::vector<SweepPoint> hysteresis_sweep(const SpinSystemParams& params, const SweepSpec& sweep,
                                         const IntegrationOptions& options) {
  if (sweep.n_points < 1) throw Error(ErrorCode::invalid_argument, "sweep needs at least one point");
  if (params.omega_a != 0.0) throw Error(ErrorCode::unsupported, "hysteresis sweeps run in the rotating frame; omega_a must be 0");
  const double lo = std::min(sweep.from, sweep.to);
  const double hi = std::max(sweep.from, sweep.to);
  std::vector<double> values(static_cast<std::size_t>(sweep.n_points));
  for (int k = 0; k < sweep.n_points; ++k)
    values[static_cast<std::size_t>(k)] =
        sweep.n_points == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / (sweep.n_points - 1);
  if (sweep.direction == SweepDirection::down) std::reverse(values.begin(), values.end());

  std::vector<SweepPoint> out;
  out.reserve(values.size());
  Operator rho = thermal_state(params);
  for (std::size_t k = 0; k < values.size(); ++k) {
    SpinSystemParams p = params;
    if (sweep.axis == SweepAxis::detuning) {
      p.set_detuning(values[k]);
    } else {
      p.omega1 = values[k];
    }
    try {
      const MasterEquation eq(p, Frame::rotating);
      EvolutionReport rep = integrate_to_steady(rho, eq, options);
      rho = rep.rho;
      const auto th = eq.theta(rho);
      out.push_back({values[k], expect(eq.spin().sz, rho), expect_complex(eq.spin().sp, rho), th.tau_pairs,
                     rep.converged, rep.residual});
    } catch (const Error& e) {
      throw Error(e.code(), "sweep point " + std::to_string(k) + " (value " + std::to_string(values[k]) +
                                "): " + e.what());
    }
  }
  return out;
}

}  // namespace bistab
