#include "bistab/spin_algebra.hpp"

#include <cmath>
#include <string>

#include "bistab/error.hpp"

namespace bistab {

void SpinSystemParams::validate() const {
  if (spins < 1) throw Error(ErrorCode::invalid_argument, "spin count must be >= 1");
  if (!(gamma1 > 0.0)) throw Error(ErrorCode::invalid_argument, "gamma1 must be positive");
  if (gamma_phi < 0.0) throw Error(ErrorCode::invalid_argument, "gamma_phi must be nonnegative");
  if (n_thermal < 0.0) throw Error(ErrorCode::invalid_argument, "n_thermal must be nonnegative");
  if (gamma_d < 0.0) throw Error(ErrorCode::invalid_argument, "gamma_d must be nonnegative");
  if (!(eta > 0.0)) throw Error(ErrorCode::invalid_argument, "eta must be positive");
}

std::array<Operator, 3> pauli_basis() {
  const cplx i(0.0, 1.0);
  Operator x(2, 2), y(2, 2), z(2, 2);
  x << 0.0, 1.0, 1.0, 0.0;
  y << 0.0, -i, i, 0.0;
  z << 1.0, 0.0, 0.0, -1.0;
  return {x, y, z};
}

std::vector<Operator> gell_mann(int d) {
  if (d < 2) throw Error(ErrorCode::invalid_dimension, "Gell-Mann basis needs d >= 2, got " + std::to_string(d));
  const cplx i(0.0, 1.0);
  std::vector<Operator> basis;
  basis.reserve(static_cast<std::size_t>(d * d - 1));
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      Operator m = Operator::Zero(d, d);
      m(j, k) = 1.0;
      m(k, j) = 1.0;
      basis.push_back(std::move(m));
    }
  }
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      Operator m = Operator::Zero(d, d);
      m(j, k) = -i;
      m(k, j) = i;
      basis.push_back(std::move(m));
    }
  }
  for (int l = 1; l < d; ++l) {
    const double factor = std::sqrt(2.0 / (l * (l + 1.0)));
    Operator m = Operator::Zero(d, d);
    for (int j = 0; j < l; ++j) m(j, j) = factor;
    m(l, l) = -l * factor;
    basis.push_back(std::move(m));
  }
  return basis;
}

Operator embed_single(const Operator& op, int site, int spins) {
  if (op.rows() != 2 || op.cols() != 2)
    throw Error(ErrorCode::dimension_mismatch, "embed_single expects a 2x2 operator");
  if (spins < 1 || site < 1 || site > spins)
    throw Error(ErrorCode::index_out_of_range,
                "site " + std::to_string(site) + " out of range for " + std::to_string(spins) + " spins");
  Operator out = Operator::Identity(1, 1);
  for (int k = 1; k <= spins; ++k) {
    const Operator factor = (k == site) ? op : Operator::Identity(2, 2);
    Operator next(out.rows() * 2, out.cols() * 2);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      for (Eigen::Index c = 0; c < out.cols(); ++c)
        next.block(2 * r, 2 * c, 2, 2) = out(r, c) * factor;
    out = std::move(next);
  }
  return out;
}

CollectiveSpin collective_spin(int spins, int max_spins) {
  if (spins < 1) throw Error(ErrorCode::invalid_argument, "spin count must be >= 1");
  if (spins > max_spins)
    throw Error(ErrorCode::capacity,
                std::to_string(spins) + " spins exceeds the dense-matrix cap of " + std::to_string(max_spins));
  const auto pauli = pauli_basis();
  const Eigen::Index dim = Eigen::Index{1} << spins;
  CollectiveSpin s{Operator::Zero(dim, dim), Operator::Zero(dim, dim), Operator::Zero(dim, dim), {}, {}};
  for (int l = 1; l <= spins; ++l) {
    s.sx += embed_single(pauli[0], l, spins);
    s.sy += embed_single(pauli[1], l, spins);
    s.sz += embed_single(pauli[2], l, spins);
  }
  const cplx i(0.0, 1.0);
  s.sp = s.sx + i * s.sy;
  s.sm = s.sx - i * s.sy;
  return s;
}

Operator two_spin_rotating_hamiltonian(const SpinSystemParams& p) {
  if (p.spins != 2) throw Error(ErrorCode::unsupported, "two-spin rotating Hamiltonian requires exactly 2 spins");
  if (p.omega_a != 0.0) throw Error(ErrorCode::unsupported, "rotating frame requires omega_a = 0");
  const double wd = p.detuning();
  const double h = 0.5 * p.omega1;
  Operator m(4, 4);
  m << -wd, h, h, 0.0,
       h, 0.0, p.omega_k, h,
       h, p.omega_k, 0.0, h,
       0.0, h, h, wd;
  return m;
}

Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

double max_abs(const Operator& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

bool is_hermitian(const Operator& m, double tol) {
  return m.rows() == m.cols() && max_abs(m - m.adjoint()) <= tol;
}

}  // namespace bistab
