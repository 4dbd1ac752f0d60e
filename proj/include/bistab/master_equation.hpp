#pragma once

#include <vector>

#include "bistab/spin_algebra.hpp"

namespace bistab {

enum class Frame { rotating, lab };

struct DensityCheck {
  double hermiticity_error = 0.0;  // max |rho - rho^dagger|
  double trace_error = 0.0;        // |Tr rho - 1|
  double min_eigenvalue = 0.0;

  bool valid(double herm_tol = 1e-10, double trace_tol = 1e-9, double pos_tol = 1e-8) const {
    return hermiticity_error <= herm_tol && trace_error <= trace_tol && min_eigenvalue >= -pos_tol;
  }
};

DensityCheck check_density(const Operator& rho);

// Diagonal product state with every spin at the thermal polarization pz0.
Operator thermal_state(const SpinSystemParams& params);
Operator pure_state(const Eigen::VectorXcd& psi);
Operator tensor(const Operator& a, const Operator& b);

struct DisentanglementOperator {
  Operator theta;
  std::vector<double> tau_pairs;  // (1,2), (1,3), ..., (L-1,L)
};

/// Pre-built operator tables for one parameter set. Construction is the
/// expensive part; all evaluation methods are const and reentrant.
class MasterEquation {
 public:
  MasterEquation(const SpinSystemParams& params, Frame frame);

  const SpinSystemParams& params() const { return params_; }
  Frame frame() const { return frame_; }
  Eigen::Index dim() const { return dim_; }
  const CollectiveSpin& spin() const { return spin_; }

  Operator hamiltonian(double t = 0.0) const;
  Operator lindblad(const Operator& rho) const;
  DisentanglementOperator theta(const Operator& rho) const;
  Operator rhs(const Operator& rho, double t = 0.0) const;

  int pair_count() const { return static_cast<int>(pairs_.size()); }
  // Step that resolves the fastest rate in the generator.
  double default_dt() const;

 private:
  struct Channel {
    double rate;
    Operator jump;
    Operator jump_adj;
  };
  struct PairTable {
    int a, b;
    std::array<Operator, 3> local_a, local_b;  // sigma_i at site a / b
    std::array<Operator, 9> product;           // sigma_i(a) sigma_j(b)
  };

  void check_dim(const Operator& rho) const;
  void theta_into(const Operator& rho, Operator& theta, std::vector<double>* tau) const;

  SpinSystemParams params_;
  Frame frame_;
  Eigen::Index dim_;
  CollectiveSpin spin_;
  std::vector<Channel> channels_;
  Operator decay_sum_;       // sum_k rate_k X_k^dagger X_k
  Operator h_static_;        // time-independent part of H/hbar
  std::vector<PairTable> pairs_;
};

Operator lindblad_rhs(const Operator& rho, const SpinSystemParams& params);
DisentanglementOperator theta_operator(const Operator& rho, const SpinSystemParams& params);
Operator mme_rhs(const Operator& rho, const SpinSystemParams& params, Frame frame, double t = 0.0);

// -Theta rho - rho Theta + 2 <Theta> rho
Operator disentanglement_term(const Operator& rho, const Operator& theta);

struct IntegrationOptions {
  double dt = 0.0;     // 0 selects MasterEquation::default_dt()
  double t_max = 100.0;
  double tol = 0.0;    // 0 selects 1e-9 * dim (Frobenius norm of d rho/dt)
  int record_every = 0;  // trajectory sampling stride in steps; 0 records endpoints only
  int positivity_stride = 16;
};

struct ExpectationSample {
  double t;
  double sz;
  cplx sp;
};

struct EvolutionReport {
  Operator rho;
  std::vector<ExpectationSample> trajectory;
  bool converged = false;
  double residual = 0.0;
  long steps = 0;
  double t = 0.0;
};

/// Fixed-step RK4 until ||d rho/dt||_F < tol or t_max. rho is re-Hermitized
/// and renormalized after each step; positivity is checked, never enforced.
EvolutionReport integrate_to_steady(const Operator& rho0, const SpinSystemParams& params, Frame frame,
                                    const IntegrationOptions& options = {});
EvolutionReport integrate_to_steady(const Operator& rho0, const MasterEquation& equation,
                                    const IntegrationOptions& options = {});

enum class SweepAxis { detuning, drive };
enum class SweepDirection { up, down };

struct SweepSpec {
  SweepAxis axis = SweepAxis::detuning;
  double from = 0.0;
  double to = 1.0;
  int n_points = 2;
  SweepDirection direction = SweepDirection::up;
};

struct SweepPoint {
  double value;
  double sz;
  cplx sp;
  std::vector<double> tau_pairs;
  bool converged;
  double residual;
};

/// Quasi-static sweep in the rotating frame, each point warm-started from
/// the previous steady state. `up` runs from min(from,to) to max, `down` reverses.
std::vector<SweepPoint> hysteresis_sweep(const SpinSystemParams& params, const SweepSpec& sweep,
                                         const IntegrationOptions& options = {});

}  // namespace bistab
