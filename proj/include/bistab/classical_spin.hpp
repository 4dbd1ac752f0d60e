#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace bistab {

using Vec3 = Eigen::Vector3d;

/// Relaxation is switched off by setting T1 or T2 to infinity.
struct ClassicalParams {
  double omega0 = 1.0;
  double omega_k = 0.0;
  double omega_a = 0.0;
  double omega1 = 0.0;
  double omega_t = 1.0;
  double t1 = 1.0;
  double t2 = 1.0;
  double sz0 = 1.0;

  // Anisotropy pair (omega_K +- omega_A)/2 acting on Px and Py.
  double kx() const { return 0.5 * (omega_k + omega_a); }
  double ky() const { return 0.5 * (omega_k - omega_a); }
  double drive_period() const;
  void validate() const;
};

Vec3 classical_field(const Vec3& p, double t, const ClassicalParams& params);
Vec3 classical_rhs(const Vec3& p, double t, const ClassicalParams& params);

struct ClassicalSample {
  double t;
  Vec3 p;
};

/// Fixed-step RK4 in the lab frame. Throws step_size when one step moves P by more than 0.5.
std::vector<ClassicalSample> integrate_classical(const Vec3& p0, const ClassicalParams& params, double dt,
                                                 double t_max, int record_every = 1, double t0 = 0.0);

// Transverse components rotated by +omega_T t so the drive field is static.
ClassicalSample to_rotating_frame(const ClassicalSample& s, const ClassicalParams& params);

struct LimitCycle {
  double period;
  double closure_error;  // distance between the last two strobe points
  double wobble;         // half the spread of |P_transverse| over the last period
  std::vector<double> strobe_steps;  // successive strobe distances
};

struct LimitCycleOptions {
  int transient_periods = 50;
  double tolerance = 1e-6;
  double min_excursion = 1e-6;  // below this the orbit is a fixed point
};

std::optional<LimitCycle> detect_limit_cycle(const std::vector<ClassicalSample>& trajectory,
                                             const ClassicalParams& params, const LimitCycleOptions& options = {});

}  // namespace bistab
