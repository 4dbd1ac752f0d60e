#pragma once

#include <complex>
#include <vector>

#include "bistab/rd_model.hpp"

namespace bistab {

enum class ImdBranch { unspecified, high_z, low_z };

struct ImdOperatingPoint {
  std::complex<double> p_plus;
  double pz;
  double omega_dk;  // omega_d - omega_K P_z
};

/// Steady state of the RD Bloch equations used as the IMD pump point. At a
/// bistable point the caller must choose a stable branch.
ImdOperatingPoint imd_operating_point(const RdPhysical& phys, ImdBranch branch = ImdBranch::unspecified);

struct ImdState {
  std::complex<double> w1, w2;
  double trace;
  double determinant;
  std::complex<double> lambda_plus, lambda_minus;
  bool weak_anisotropy_violated;  // |W2| > 0.5 / T2
};

struct ImdSpectrum {
  ImdState state;
  std::vector<double> omega;
  std::vector<double> gain;
};

ImdState imd_state(const ImdOperatingPoint& op, double omega_a, double omega_t, double t1, double t2);
double imd_gain_at(const ImdState& state, double gamma1, double omega);

/// Empty omega_grid selects 1001 points spanning +-10/T2.
ImdSpectrum imd_gain(const ImdOperatingPoint& op, double omega_a, double omega_t, double t1, double t2, double gamma1,
                     std::vector<double> omega_grid = {});

}  // namespace bistab
