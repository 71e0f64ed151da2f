#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cortex/types.hpp"

namespace cortex {

/// Raised when a truth propagation leaves the valid domain (sub-orbital
/// radius) or is configured inconsistently.
class PropagationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an eclipse profile does not extend far enough to answer a
/// hold-time query; the caller should rebuild the profile over a longer span.
class EclipseHorizonFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration of the absolute-dynamics truth model used to propagate both
/// spacecraft: two-body gravity with optional J2 and exponential-atmosphere
/// drag, integrated with fixed-step RK4.
struct TruthModelConfig {
  bool enable_j2 = true;
  bool enable_drag = true;
  double drag_coefficient = 2.2;   // C_D
  double cross_section_m2 = 2.0;   // A
  double mass_kg = 500.0;          // applied to both craft (differential drag out of scope)
  double density_ref_kg_m3 = 6.967e-13;  // exponential atmosphere at the reference altitude
  double ref_altitude_m = 500e3;
  double scale_height_m = 63822.0;
  double integrator_step_s = 0.5;
  /// Test configuration: propagate the relative state with the linear
  /// relative dynamics instead of differencing absolute trajectories.
  bool linear_relative_truth = false;
  /// Mean motion for the linear mode; 0 = derive from the client state.
  double cw_mean_motion = 0.0;

  void validate() const;
};

/// Sampled sunlight indicator along the client orbit: eta[i] = 1 when the
/// spacecraft is sunlit at time[i], 0 in the Earth's umbra. Interpolation is
/// previous-sample hold, so intervals [t_i, t_{i+1}) carry eta[i].
struct EclipseProfile {
  std::vector<double> time_s;  // strictly increasing, uniform grid
  std::vector<int> eta;        // 0 or 1, same length

  double t_begin() const { return time_s.front(); }
  double t_end() const { return time_s.back(); }
};

/// Propagates both spacecraft through the truth model over dt seconds.
/// Throws PropagationFault on sub-orbital radius; throws
/// std::invalid_argument when cfg.integrator_step_s exceeds dt.
std::pair<InertialState, InertialState> propagate_truth(const InertialState& servicer,
                                                        const InertialState& client,
                                                        double dt,
                                                        const TruthModelConfig& cfg);

/// Two-body Kepler propagation (universal-variable formulation). Used for
/// eclipse-profile sampling where the perturbation-free orbit is sufficient.
InertialState propagate_kepler(const InertialState& state, double dt);

/// Unit vector from the Earth's center to the Sun in ECI at the given Julian
/// date (low-precision analytic solar ephemeris, arcminute-level accuracy).
Vec3 sun_direction_eci(double jd_utc);

/// True when a spacecraft at inertial position r is inside the cylindrical
/// umbra: behind the terminator plane and within one Earth radius of the
/// Earth-Sun axis.
bool in_umbra(const Vec3& r_eci, const Vec3& sun_dir);

/// Samples the sunlight indicator along the client's two-body orbit from
/// t_start to at least t_end (seconds past the scenario epoch). jd0 is the
/// Julian date of the scenario epoch. Requires samples_per_orbit >= 1000.
EclipseProfile eclipse_profile(const InertialState& client, double jd0,
                               double t_start, double t_end, int samples_per_orbit = 1024);

/// Previous-sample-hold lookup; throws std::out_of_range outside the span.
int interp_eclipse(const EclipseProfile& profile, double t);

/// Wait time before a maneuver window of length tau fits in sunlight:
/// 0 when the remaining sunlit time already covers tau; otherwise waits
/// through the upcoming (or current) eclipse to the next sunrise sample.
/// Throws EclipseHorizonFault when the profile ends before the answer is
/// determined.
double hold_time(const EclipseProfile& profile, double t, double tau);

/// Julian date (UTC) from "YYYY-MM-DDTHH:MM:SSZ".
double jd_from_utc(const std::string& utc);

/// Classical orbital elements (angles in radians) to an inertial state.
InertialState elements_to_state(double a, double e, double inc, double raan,
                                double argp, double true_anom);

/// Writes "time_s,eta" rows; the inverse of parse is not needed.
std::string eclipse_profile_csv(const EclipseProfile& profile);

}  // namespace cortex
