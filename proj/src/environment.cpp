#include "cortex/environment.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cortex/constants.hpp"

namespace cortex {

void TruthModelConfig::validate() const {
  if (!(integrator_step_s > 0.0)) throw std::invalid_argument("truth model: integrator step must be positive");
  if (enable_drag) {
    if (!(drag_coefficient > 0.0) || !(cross_section_m2 > 0.0) || !(mass_kg > 0.0) ||
        !(density_ref_kg_m3 > 0.0) || !(scale_height_m > 0.0))
      throw std::invalid_argument("truth model: drag parameters must be positive");
  }
}

namespace {

Vec3 acceleration(const Vec3& r, const Vec3& v, const TruthModelConfig& cfg) {
  const double rn = r.norm();
  if (rn < kEarthRadius) throw PropagationFault("truth propagation: sub-orbital radius");
  Vec3 a = -kMuEarth / (rn * rn * rn) * r;
  if (cfg.enable_j2) {
    const double z2_r2 = (r.z() * r.z()) / (rn * rn);
    const double k = -1.5 * kJ2 * kMuEarth * kEarthRadius * kEarthRadius / std::pow(rn, 5);
    Vec3 aj;
    aj.x() = k * r.x() * (1.0 - 5.0 * z2_r2);
    aj.y() = k * r.y() * (1.0 - 5.0 * z2_r2);
    aj.z() = k * r.z() * (3.0 - 5.0 * z2_r2);
    a += aj;
  }
  if (cfg.enable_drag) {
    const double alt = rn - kEarthRadius;
    const double rho = cfg.density_ref_kg_m3 * std::exp(-(alt - cfg.ref_altitude_m) / cfg.scale_height_m);
    const double vn = v.norm();
    if (vn > 1e-9) {
      const double coeff = 0.5 * cfg.drag_coefficient * cfg.cross_section_m2 * rho / cfg.mass_kg;
      a -= coeff * vn * v;
    }
  }
  return a;
}

void rk4_step(Vec3& r, Vec3& v, double h, const TruthModelConfig& cfg) {
  const Vec3 k1r = v;
  const Vec3 k1v = acceleration(r, v, cfg);
  const Vec3 k2r = v + 0.5 * h * k1v;
  const Vec3 k2v = acceleration(r + 0.5 * h * k1r, v + 0.5 * h * k1v, cfg);
  const Vec3 k3r = v + 0.5 * h * k2v;
  const Vec3 k3v = acceleration(r + 0.5 * h * k2r, v + 0.5 * h * k2v, cfg);
  const Vec3 k4r = v + h * k3v;
  const Vec3 k4v = acceleration(r + h * k3r, v + h * k3v, cfg);
  r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
  v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
}

InertialState propagate_one(const InertialState& s0, double dt, const TruthModelConfig& cfg) {
  InertialState s = s0;
  double remaining = dt;
  while (remaining > 1e-12) {
    const double h = std::min(cfg.integrator_step_s, remaining);
    rk4_step(s.r, s.v, h, cfg);
    remaining -= h;
  }
  s.epoch_s = s0.epoch_s + dt;
  return s;
}

}  // namespace

std::pair<InertialState, InertialState> propagate_truth(const InertialState& servicer,
                                                        const InertialState& client,
                                                        double dt,
                                                        const TruthModelConfig& cfg) {
  cfg.validate();
  if (dt < 0.0) throw std::invalid_argument("propagate_truth: negative dt");
  if (cfg.integrator_step_s > dt && dt > 0.0)
    throw std::invalid_argument("propagate_truth: integrator step exceeds propagation span");
  if (dt == 0.0) return {servicer, client};
  return {propagate_one(servicer, dt, cfg), propagate_one(client, dt, cfg)};
}

// ---------------------------------------------------------------------------
// Kepler propagation (universal variables, elliptic and near-parabolic safe)
// ---------------------------------------------------------------------------

namespace {

void stumpff(double z, double& c2, double& c3) {
  if (z > 1e-6) {
    const double sz = std::sqrt(z);
    c2 = (1.0 - std::cos(sz)) / z;
    c3 = (sz - std::sin(sz)) / (sz * z);
  } else if (z < -1e-6) {
    const double sz = std::sqrt(-z);
    c2 = (1.0 - std::cosh(sz)) / z;
    c3 = (std::sinh(sz) - sz) / ((-z) * sz);
  } else {
    c2 = 0.5 - z / 24.0;
    c3 = 1.0 / 6.0 - z / 120.0;
  }
}

}  // namespace

InertialState propagate_kepler(const InertialState& state, double dt) {
  if (dt == 0.0) return state;
  const double mu = kMuEarth;
  const double r0n = state.r.norm();
  const double v0n2 = state.v.squaredNorm();
  const double rdotv = state.r.dot(state.v);
  const double alpha = 2.0 / r0n - v0n2 / mu;  // 1/a
  if (!(alpha > 1e-12))
    throw std::invalid_argument("propagate_kepler: orbit not elliptic");

  const double sqrt_mu = std::sqrt(mu);
  double chi = sqrt_mu * std::abs(alpha) * dt;  // initial guess (elliptic)
  double c2 = 0.0, c3 = 0.0, r = r0n;
  for (int iter = 0; iter < 60; ++iter) {
    const double z = chi * chi * alpha;
    stumpff(z, c2, c3);
    const double chi2 = chi * chi;
    const double f = rdotv / sqrt_mu * chi2 * c2 + (1.0 - alpha * r0n) * chi2 * chi * c3 + r0n * chi -
                     sqrt_mu * dt;
    r = chi2 * c2 + rdotv / sqrt_mu * chi * (1.0 - z * c3) + r0n * (1.0 - z * c2);
    const double dchi = f / r;
    chi -= dchi;
    if (std::abs(dchi) < 1e-12 * std::max(1.0, std::abs(chi))) break;
  }
  const double z = chi * chi * alpha;
  stumpff(z, c2, c3);
  const double f = 1.0 - chi * chi / r0n * c2;
  const double g = dt - chi * chi * chi / sqrt_mu * c3;
  const Vec3 r_new = f * state.r + g * state.v;
  const double rn = r_new.norm();
  const double fdot = sqrt_mu / (rn * r0n) * (z * c3 - 1.0) * chi;
  const double gdot = 1.0 - chi * chi / rn * c2;
  InertialState out;
  out.r = r_new;
  out.v = fdot * state.r + gdot * state.v;
  out.epoch_s = state.epoch_s + dt;
  return out;
}

// ---------------------------------------------------------------------------
// Solar geometry and eclipse profile
// ---------------------------------------------------------------------------

Vec3 sun_direction_eci(double jd_utc) {
  const double d = jd_utc - kJdJ2000;
  const double mean_lon = std::fmod(280.460 + 0.9856474 * d, 360.0) * kDeg2Rad;
  const double mean_anom = std::fmod(357.528 + 0.9856003 * d, 360.0) * kDeg2Rad;
  const double ecl_lon = mean_lon + (1.915 * std::sin(mean_anom) + 0.020 * std::sin(2.0 * mean_anom)) * kDeg2Rad;
  const double obliquity = (23.439 - 0.0000004 * d) * kDeg2Rad;
  Vec3 s;
  s << std::cos(ecl_lon), std::cos(obliquity) * std::sin(ecl_lon), std::sin(obliquity) * std::sin(ecl_lon);
  return s.normalized();
}

bool in_umbra(const Vec3& r_eci, const Vec3& sun_dir) {
  const double along = r_eci.dot(sun_dir);
  if (along >= 0.0) return false;  // sunlit side of the terminator plane
  const Vec3 perp = r_eci - along * sun_dir;
  return perp.norm() < kEarthRadius;
}

EclipseProfile eclipse_profile(const InertialState& client, double jd0,
                               double t_start, double t_end, int samples_per_orbit) {
  if (samples_per_orbit < 1000)
    throw std::invalid_argument("eclipse_profile: at least 1000 samples per orbit required");
  if (!(t_end > t_start)) throw std::invalid_argument("eclipse_profile: empty span");
  const double r0 = client.r.norm();
  const double a = 1.0 / (2.0 / r0 - client.v.squaredNorm() / kMuEarth);
  if (!(a > 0.0)) throw std::invalid_argument("eclipse_profile: orbit not elliptic");
  const double period = 2.0 * kPi * std::sqrt(a * a * a / kMuEarth);
  const double step = period / samples_per_orbit;

  EclipseProfile profile;
  const int count = static_cast<int>(std::ceil((t_end - t_start) / step)) + 1;
  profile.time_s.reserve(count);
  profile.eta.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double t = t_start + i * step;
    const InertialState s = propagate_kepler(client, t - client.epoch_s);
    const Vec3 sun = sun_direction_eci(jd0 + t / kSecondsPerDay);
    profile.time_s.push_back(t);
    profile.eta.push_back(in_umbra(s.r, sun) ? 0 : 1);
  }
  return profile;
}

int interp_eclipse(const EclipseProfile& profile, double t) {
  if (profile.time_s.empty()) throw std::out_of_range("interp_eclipse: empty profile");
  if (t < profile.t_begin() - 1e-9 || t > profile.t_end() + 1e-9)
    throw std::out_of_range("interp_eclipse: query outside profile span");
  const auto it = std::upper_bound(profile.time_s.begin(), profile.time_s.end(), t);
  const auto idx = static_cast<size_t>(std::distance(profile.time_s.begin(), it));
  return profile.eta[idx == 0 ? 0 : idx - 1];
}

double hold_time(const EclipseProfile& profile, double t, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("hold_time: window must be non-negative");
  if (t < profile.t_begin() - 1e-9)
    throw std::out_of_range("hold_time: query before profile start");
  const auto& ts = profile.time_s;
  const auto& eta = profile.eta;
  const size_t count = ts.size();
  // index i with t_i <= t < t_{i+1}
  const auto it = std::upper_bound(ts.begin(), ts.end(), t);
  size_t i = static_cast<size_t>(std::distance(ts.begin(), it));
  if (i == 0) i = 1;
  --i;
  if (i >= count - 1 && t > ts.back() + 1e-9)
    throw EclipseHorizonFault("hold_time: query beyond profile end");

  if (eta[i] == 0) {
    // In eclipse: wait for the next sunrise sample.
    for (size_t j = i + 1; j < count; ++j) {
      if (eta[j] == 1) return ts[j] - t;
    }
    throw EclipseHorizonFault("hold_time: no sunrise before profile end");
  }

  if (i + 1 >= count)
    throw EclipseHorizonFault("hold_time: query at profile end");
  // Sunlit: accumulate the remaining contiguous sunlit time starting at t.
  // The partial current interval counts once; subsequent sunlit intervals are
  // added whole until the next eclipse onset.
  double t_rem = ts[i + 1] - t;
  size_t k = i + 1;
  while (k < count && eta[k] == 1) {
    if (k + 1 < count) t_rem += ts[k + 1] - ts[k];
    ++k;
  }
  if (t_rem >= tau) return 0.0;
  if (k >= count)
    throw EclipseHorizonFault("hold_time: sunlit span exceeds profile horizon but not tau");
  // Wait through the rest of the sunlight and the eclipse that follows; the
  // answer lands on the first sunlit sample after that eclipse.
  for (size_t m = k; m < count; ++m) {
    if (eta[m] == 1) return ts[m] - t;
  }
  throw EclipseHorizonFault("hold_time: no sunrise after upcoming eclipse before profile end");
}

// ---------------------------------------------------------------------------
// Time and element utilities
// ---------------------------------------------------------------------------

double jd_from_utc(const std::string& utc) {
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (std::sscanf(utc.c_str(), "%d-%d-%dT%d:%d:%dZ", &year, &month, &day, &hour, &minute, &second) != 6)
    throw std::invalid_argument("jd_from_utc: expected YYYY-MM-DDTHH:MM:SSZ, got '" + utc + "'");
  // Fliegel-Van Flandern day number, then the fraction from midnight.
  const int a = (14 - month) / 12;
  const int y = year + 4800 - a;
  const int m = month + 12 * a - 3;
  const long jdn = day + (153 * m + 2) / 5 + 365L * y + y / 4 - y / 100 + y / 400 - 32045;
  return static_cast<double>(jdn) - 0.5 + (hour + minute / 60.0 + second / 3600.0) / 24.0;
}

InertialState elements_to_state(double a, double e, double inc, double raan,
                                double argp, double true_anom) {
  if (!(a > 0.0) || e < 0.0 || e >= 1.0)
    throw std::invalid_argument("elements_to_state: requires elliptic orbit");
  const double p = a * (1.0 - e * e);
  const double r = p / (1.0 + e * std::cos(true_anom));
  const Vec3 r_pqw(r * std::cos(true_anom), r * std::sin(true_anom), 0.0);
  const double coeff = std::sqrt(kMuEarth / p);
  const Vec3 v_pqw(-coeff * std::sin(true_anom), coeff * (e + std::cos(true_anom)), 0.0);
  const Eigen::AngleAxisd rz1(raan, Vec3::UnitZ());
  const Eigen::AngleAxisd rx(inc, Vec3::UnitX());
  const Eigen::AngleAxisd rz2(argp, Vec3::UnitZ());
  const Mat3 rot = (rz1 * rx * rz2).toRotationMatrix();
  InertialState s;
  s.r = rot * r_pqw;
  s.v = rot * v_pqw;
  return s;
}

std::string eclipse_profile_csv(const EclipseProfile& profile) {
  std::ostringstream os;
  os << "time_s,eta\n";
  char buf[64];
  for (size_t i = 0; i < profile.time_s.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%d\n", profile.time_s[i], profile.eta[i]);
    os << buf;
  }
  return os.str();
}

}  // namespace cortex
