#pragma once

#include <array>
#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace bistab {

using cplx = std::complex<double>;
using Operator = Eigen::MatrixXcd;

inline constexpr int kMaxSpins = 4;

// Sign of the static Zeeman term in the lab-frame Hamiltonian. The main-text
// form is -w0 Sz/2 with drive S+ exp(+i wT t); the two-spin appendix writes
// +w0 Sz/2 with drive S+ exp(-i wT t).
enum class ZeemanSign { main_text, appendix };

// Rates of the driven L-spin Hamiltonian and its Lindblad environment.
// All angular rates share one (arbitrary) time unit.
struct SpinSystemParams {
  int spins = 1;
  double omega0 = 0.0;
  double omega_k = 0.0;
  double omega_a = 0.0;
  double omega1 = 0.0;
  double omega_t = 0.0;
  double gamma1 = 1.0;
  double gamma_phi = 0.0;
  double n_thermal = 0.0;
  double gamma_d = 0.0;
  double eta = 1.0;
  ZeemanSign zeeman_sign = ZeemanSign::main_text;

  double detuning() const { return omega_t - omega0; }
  void set_detuning(double omega_d) { omega_t = omega0 + omega_d; }

  double inv_t1() const { return gamma1 * (2.0 * n_thermal + 1.0); }
  double inv_t2() const { return (0.5 * gamma1 + gamma_phi) * (2.0 * n_thermal + 1.0); }
  double t1() const { return 1.0 / inv_t1(); }
  double t2() const { return 1.0 / inv_t2(); }
  // Thermal polarization per spin, negative in this convention.
  double pz0() const { return -1.0 / (2.0 * n_thermal + 1.0); }

  void validate() const;
};

struct CollectiveSpin {
  Operator sx, sy, sz, sp, sm;
};

std::array<Operator, 3> pauli_basis();

// Generalized Gell-Mann matrices: symmetric pairs, antisymmetric pairs, then
// diagonal ones. Normalized so that Tr(l_i l_j) = 2 delta_ij.
std::vector<Operator> gell_mann(int d);

/// Collective spin operators in units of hbar/2 for `spins` spin-1/2 sites.
/// Site 1 is the most significant tensor factor, |0> is spin up.
CollectiveSpin collective_spin(int spins, int max_spins = kMaxSpins);

/// I x ... x op x ... x I with `op` (2x2) at 1-based `site`.
Operator embed_single(const Operator& op, int site, int spins);

/// Rotating-frame two-spin Hamiltonian H_R/hbar as printed in the appendix
/// matrix: diagonal (-wd, 0, 0, wd), wK exchange in the middle block, w1/2 drive.
Operator two_spin_rotating_hamiltonian(const SpinSystemParams& params);

Operator commutator(const Operator& a, const Operator& b);
double max_abs(const Operator& m);
bool is_hermitian(const Operator& m, double tol = 1e-12);

}  // namespace bistab
