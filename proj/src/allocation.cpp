#include "cortex/allocation.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace cortex {

namespace {

Vec3 json_vec3(const nlohmann::json& j, const char* field, int index) {
  if (!j.contains(field) || !j[field].is_array() || j[field].size() != 3) {
    std::ostringstream os;
    os << "thruster " << index << ": field '" << field << "' must be a 3-entry array";
    throw std::runtime_error(os.str());
  }
  return Vec3(j[field][0].get<double>(), j[field][1].get<double>(), j[field][2].get<double>());
}

/// Linear inequality p'z + q >= 0 as a zero-row cone.
SocConstraint halfspace(int num_vars, const Eigen::VectorXd& p, double q) {
  SocConstraint c;
  c.C.resize(0, num_vars);
  c.d.resize(0);
  c.p = p;
  c.q = q;
  return c;
}

}  // namespace

Eigen::VectorXd ThrusterSet::f_max_vector() const {
  Eigen::VectorXd f(size());
  for (int i = 0; i < size(); ++i) f[i] = thrusters[i].f_max;
  return f;
}

void ThrusterSet::validate() const {
  if (thrusters.empty()) throw std::invalid_argument("thruster set is empty");
  for (int i = 0; i < size(); ++i) {
    if (std::abs(thrusters[i].direction.norm() - 1.0) > 1e-9) {
      std::ostringstream os;
      os << "thruster " << i << ": direction is not a unit vector";
      throw std::invalid_argument(os.str());
    }
    if (!(thrusters[i].f_max > 0)) {
      std::ostringstream os;
      os << "thruster " << i << ": f_max must be positive";
      throw std::invalid_argument(os.str());
    }
  }
}

ThrusterSet ThrusterSet::from_json_text(const std::string& text) {
  nlohmann::json doc = nlohmann::json::parse(text);
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (!doc.contains("thrusters"))
      throw std::runtime_error("thruster layout object lacks a 'thrusters' array");
    list = &doc["thrusters"];
  }
  if (!list->is_array() || list->empty())
    throw std::runtime_error("thruster layout must be a non-empty array");
  ThrusterSet set;
  set.thrusters.reserve(list->size());
  for (int i = 0; i < static_cast<int>(list->size()); ++i) {
    const nlohmann::json& j = (*list)[i];
    Thruster t;
    t.position = json_vec3(j, "position", i);
    t.direction = json_vec3(j, "direction", i);
    const double norm = t.direction.norm();
    if (norm < 1e-12) {
      std::ostringstream os;
      os << "thruster " << i << ": direction is zero";
      throw std::runtime_error(os.str());
    }
    t.direction /= norm;
    if (!j.contains("f_max"))
      throw std::runtime_error("thruster " + std::to_string(i) + ": missing f_max");
    t.f_max = j["f_max"].get<double>();
    if (!(t.f_max > 0))
      throw std::runtime_error("thruster " + std::to_string(i) + ": f_max must be positive");
    set.thrusters.push_back(t);
  }
  return set;
}

std::string ThrusterSet::to_json_text() const {
  nlohmann::json list = nlohmann::json::array();
  for (const Thruster& t : thrusters) {
    nlohmann::json j;
    j["position"] = {t.position.x(), t.position.y(), t.position.z()};
    j["direction"] = {t.direction.x(), t.direction.y(), t.direction.z()};
    j["f_max"] = t.f_max;
    list.push_back(j);
  }
  return list.dump(2) + "\n";
}

ThrusterSet ThrusterSet::canonical_planar8(double f_max) {
  const double w = 0.5;  // bus half-width, m
  const double d = 0.4;  // lateral mounting offset, m
  ThrusterSet set;
  auto add = [&](double px, double py, double dx, double dy) {
    Thruster t;
    t.position = Vec3(px, py, 0.0);
    t.direction = Vec3(dx, dy, 0.0);
    t.f_max = f_max;
    set.thrusters.push_back(t);
  };
  // Two +x thrusters on the -x face, then -x, +y, -y banks.
  add(-w, +d, 1.0, 0.0);
  add(-w, -d, 1.0, 0.0);
  add(+w, +d, -1.0, 0.0);
  add(+w, -d, -1.0, 0.0);
  add(+d, -w, 0.0, 1.0);
  add(-d, -w, 0.0, 1.0);
  add(+d, +w, 0.0, -1.0);
  add(-d, +w, 0.0, -1.0);
  return set;
}

void EngineSpec::validate() const {
  if (!(thrust_n > 0) || !(isp_s > 0) || !(g0 > 0))
    throw std::invalid_argument("engine thrust, Isp, and g0 must be positive");
}

Eigen::Matrix<double, 6, Eigen::Dynamic> build_actuation_matrix(const ThrusterSet& set) {
  set.validate();
  Eigen::Matrix<double, 6, Eigen::Dynamic> A(6, set.size());
  for (int i = 0; i < set.size(); ++i) {
    const Thruster& t = set.thrusters[i];
    A.block<3, 1>(0, i) = t.direction;
    A.block<3, 1>(3, i) = t.position.cross(t.direction);
  }
  return A;
}

AllocationResult allocate(const Eigen::Matrix<double, 6, Eigen::Dynamic>& A,
                          const Eigen::VectorXd& f_max, const Vec6& c,
                          const Vec6& row_weights, const SolveSettings& settings) {
  const auto wall0 = std::chrono::steady_clock::now();
  const int n = static_cast<int>(A.cols());
  if (n < 1) throw std::invalid_argument("actuation matrix has no columns");
  if (f_max.size() != n)
    throw std::invalid_argument("f_max length does not match thruster count");
  for (int i = 0; i < n; ++i)
    if (!(f_max[i] > 0)) throw std::invalid_argument("f_max entries must be positive");
  for (int j = 0; j < 6; ++j)
    if (!(row_weights[j] > 0)) throw std::invalid_argument("row weights must be positive");

  // Decision vector z = [dt_1..dt_n, e_1..e_6].
  const int nv = n + 6;
  const Eigen::Matrix<double, 6, Eigen::Dynamic> G = A * f_max.asDiagonal();

  ConicProgram lp;
  lp.num_vars = nv;
  lp.eq.resize(0, nv);
  lp.eq_rhs.resize(0);
  lp.lower = Eigen::VectorXd::Zero(nv);
  lp.upper = Eigen::VectorXd::Constant(nv, kInf);
  lp.upper.head(n).setOnes();
  lp.cones.reserve(13);
  for (int j = 0; j < 6; ++j) {
    // G_j'dt - e_j <= c_j  and  G_j'dt + e_j >= c_j.
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nv);
    p.head(n) = -G.row(j).transpose();
    p[n + j] = 1.0;
    lp.cones.push_back(halfspace(nv, p, c[j]));
    p.head(n) = G.row(j).transpose();
    lp.cones.push_back(halfspace(nv, p, -c[j]));
  }
  lp.cost = Eigen::VectorXd::Zero(nv);
  lp.cost.tail<6>() = row_weights;

  auto robust_solve = [&settings](const ConicProgram& prog) {
    ConicSolution sol = solve(prog, settings);
    if (sol.status == SolveStatus::kMaxIterations) {
      SolveSettings loose = settings;
      loose.feas_tol *= 10.0;
      loose.gap_tol *= 10.0;
      sol = solve(prog, loose);
    }
    return sol;
  };

  const ConicSolution first = robust_solve(lp);
  if (first.status != SolveStatus::kOptimal)
    throw std::runtime_error("duty-cycle allocation: tracking-error solve failed");

  // Among minimum-error solutions, pick the one of least total duty: bound
  // the weighted error at its optimum and minimize sum(dt).
  ConicProgram lex = lp;
  {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nv);
    p.tail<6>() = -row_weights;
    const double budget = first.objective + 1e-9 * std::max(1.0, std::abs(first.objective));
    lex.cones.push_back(halfspace(nv, p, budget));
    lex.cost.setZero();
    lex.cost.head(n).setOnes();
  }
  ConicSolution second = robust_solve(lex);
  const Eigen::VectorXd& z = (second.status == SolveStatus::kOptimal) ? second.primal
                                                                      : first.primal;
  const int iterations =
      first.iterations + (second.status == SolveStatus::kOptimal ? second.iterations : 0);

  AllocationResult out;
  out.duty = z.head(n).cwiseMax(0.0).cwiseMin(1.0);
  const Vec6 achieved = G * out.duty;
  out.residual = (achieved - c).cwiseAbs();
  out.residual_sum = row_weights.dot(out.residual);
  out.conic_iterations = iterations;
  out.solve_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return out;
}

AllocationResult allocate(const ThrusterSet& set, const Vec6& c, const Vec6& row_weights,
                          const SolveSettings& settings) {
  return allocate(build_actuation_matrix(set), set.f_max_vector(), c, row_weights, settings);
}

std::vector<double> pwm_to_ontime(const Eigen::VectorXd& duty, double t_control) {
  if (!(t_control > 0)) throw std::invalid_argument("control period must be positive");
  std::vector<double> on(static_cast<std::size_t>(duty.size()));
  for (int i = 0; i < duty.size(); ++i) on[i] = duty[i] * t_control;
  return on;
}

bool thruster_on(double on_time, double t_control, double t) {
  if (!(t_control > 0)) throw std::invalid_argument("control period must be positive");
  return std::fmod(t, t_control) < on_time;
}

double main_engine_ontime(double dv_mps, double m0_kg, const EngineSpec& eng) {
  eng.validate();
  if (dv_mps < 0) throw std::invalid_argument("dv must be non-negative");
  if (!(m0_kg > 0)) throw std::invalid_argument("mass must be positive");
  const double ve = eng.isp_s * eng.g0;          // exhaust velocity
  const double m_f = m0_kg * std::exp(-dv_mps / ve);
  const double mdot = eng.thrust_n / ve;
  return (m0_kg - m_f) / mdot;
}

}  // namespace cortex
