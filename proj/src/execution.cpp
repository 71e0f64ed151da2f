#include "cortex/execution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cortex/relmotion.hpp"

namespace cortex {

ErrorModel ErrorModel::none() { return ErrorModel{}; }

ErrorModel ErrorModel::low() {
  ErrorModel e;
  e.delta_r_m = 0.1;
  e.sigma_dv_frac = 0.1;
  e.sigma_beta_rad = 0.5 * kDeg2Rad;
  e.sigma_alpha_rad = 0.5 * kDeg2Rad;
  e.p_misthrust = 0.05;
  return e;
}

ErrorModel ErrorModel::high() {
  ErrorModel e;
  e.delta_r_m = 1.0;
  e.sigma_dv_frac = 0.2;
  e.sigma_beta_rad = 1.0 * kDeg2Rad;
  e.sigma_alpha_rad = 1.0 * kDeg2Rad;
  e.p_misthrust = 0.10;
  return e;
}

double ErrorModel::sigma_r(double range_m) const {
  return delta_r_m / 3.0 * (0.02 + 0.98 * range_m / r_as_m);
}

void ErrorModel::validate() const {
  if (!(p_misthrust >= 0.0 && p_misthrust <= 1.0))
    throw std::invalid_argument("ErrorModel: p_misthrust must lie in [0, 1]");
  if (delta_r_m < 0.0 || sigma_dv_frac < 0.0 || sigma_beta_rad < 0.0 || sigma_alpha_rad < 0.0)
    throw std::invalid_argument("ErrorModel: sigmas must be non-negative");
  if (!(r_as_m > 0.0)) throw std::invalid_argument("ErrorModel: r_as_m must be positive");
  if (velocity_error_ratio < 0.0)
    throw std::invalid_argument("ErrorModel: velocity_error_ratio must be non-negative");
}

Vec3 perturb_impulse(const Vec3& dv, const ErrorModel& err, Rng& rng) {
  const double d_mag = rng.normal();
  const double d_beta = rng.normal();
  const double d_alpha = rng.normal();
  const double m = dv.norm();
  if (m == 0.0) return dv;
  const double beta = std::asin(std::clamp(dv.z() / m, -1.0, 1.0));
  const double alpha = std::atan2(dv.x(), dv.y());
  const double m_e = m * (1.0 + d_mag * err.sigma_dv_frac);
  const double beta_e = beta + d_beta * err.sigma_beta_rad;
  const double alpha_e = alpha + d_alpha * err.sigma_alpha_rad;
  Vec3 out;
  out << m_e * std::cos(beta_e) * std::sin(alpha_e), m_e * std::cos(beta_e) * std::cos(alpha_e),
      m_e * std::sin(beta_e);
  return out;
}

SegmentResult propagate_segment(const RelativeState& x_k, const std::vector<Vec3>& impulses,
                                const std::vector<double>& t_grid, const InertialState& cso,
                                const ErrorModel& err, const TruthModelConfig& cfg, Rng& rng) {
  if (t_grid.size() != impulses.size() + 1)
    throw std::invalid_argument("propagate_segment: need one more grid time than impulses");
  for (std::size_t j = 0; j + 1 < t_grid.size(); ++j)
    if (!(t_grid[j + 1] > t_grid[j]))
      throw std::invalid_argument("propagate_segment: t_grid must be strictly increasing");
  err.validate();
  cfg.validate();

  SegmentResult out;
  out.missed_thrust = rng.uniform01() < err.p_misthrust;

  double n_lin = cfg.cw_mean_motion;
  if (cfg.linear_relative_truth && n_lin <= 0.0) {
    const double r = cso.r.norm();
    n_lin = std::sqrt(kMuEarth / (r * r * r));
  }

  RelativeState x = x_k;
  InertialState client = cso;
  out.substep_states.reserve(impulses.size());
  for (std::size_t j = 0; j < impulses.size(); ++j) {
    const double range = x.r.norm();
    x.r += err.sigma_r(range) / std::sqrt(3.0) * rng.normal3();
    x.v += err.sigma_v(range) / std::sqrt(3.0) * rng.normal3();

    const Vec3 commanded = out.missed_thrust ? Vec3(Vec3::Zero()) : impulses[j];
    const Vec3 executed = perturb_impulse(commanded, err, rng);
    x.v += executed;
    out.dv_executed_mps += executed.norm();

    const double dt = t_grid[j + 1] - t_grid[j];
    if (cfg.linear_relative_truth) {
      x = RelativeState::from_vec(cw_stm(dt, n_lin) * x.vec());
      client = propagate_kepler(client, dt);
    } else {
      const InertialState servicer = rtn_to_eci(x, client);
      TruthModelConfig step_cfg = cfg;
      step_cfg.integrator_step_s = std::min(cfg.integrator_step_s, dt);
      const auto [serv_next, client_next] = propagate_truth(servicer, client, dt, step_cfg);
      client = client_next;
      x = eci_to_rtn(serv_next, client_next);
    }
    out.substep_states.push_back(x);
  }
  out.x_end = x;
  out.cso_end = client;
  return out;
}

}  // namespace cortex
