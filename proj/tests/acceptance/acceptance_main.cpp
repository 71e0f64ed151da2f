// Acceptance harness: one self-contained check per release criterion.
//
// Usage: cortex_acceptance [--criterion N] [--workers W] [--out DIR]
//   --criterion 0 (or absent) runs all nine criteria in order.
//   --workers    worker threads handed to swarm searches and campaigns
//                where the criterion does not pin them itself.
//   --out        optional directory for a copy of the result lines.
//
// Each criterion prints exactly one line:
//   [PASS] criterion N: <measurements>
//   [FAIL] criterion N: <measurements>
// and the process exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cortex/allocation.hpp"
#include "cortex/campaign.hpp"
#include "cortex/constants.hpp"
#include "cortex/environment.hpp"
#include "cortex/execution.hpp"
#include "cortex/refgen.hpp"
#include "cortex/relmotion.hpp"
#include "cortex/rng.hpp"
#include "cortex/tracking.hpp"
#include "oracles.hpp"

namespace {

using namespace cortex;
using Clock = std::chrono::steady_clock;

double seconds_since(const Clock::time_point& t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double baseline_mean_motion() {
  return std::sqrt(kMuEarth / std::pow(6878.1e3, 3));
}

InertialState baseline_client() {
  return elements_to_state(6878.1e3, 0.001, 98.0 * kDeg2Rad, 0.1 * kDeg2Rad,
                           0.1 * kDeg2Rad, 0.1 * kDeg2Rad);
}

EclipseProfile baseline_profile() {
  const double jd0 = jd_from_utc("2022-05-01T00:00:00Z");
  return eclipse_profile(baseline_client(), jd0, 0.0, 45000.0);
}

// --- Criterion 1: closed-form relative-motion propagation vs numerical
// integration of the underlying differential equations.
bool criterion1(std::string& detail, int /*workers*/) {
  const auto t0 = Clock::now();
  const double n = baseline_mean_motion();
  const Mat6 stm = cw_stm(30.0, n);
  Rng rng(101);
  double max_pos = 0.0;
  double max_vel = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double rmag = 1000.0 * std::cbrt(rng.uniform01());
    const double vmag = 1.0 * std::cbrt(rng.uniform01());
    Vec6 x;
    x.head<3>() = rmag * rng.normal3().normalized();
    x.tail<3>() = vmag * rng.normal3().normalized();
    const Vec6 fast = stm * x;
    const Vec6 truth = oracle::rk4_relative(x, 30.0, n, 512);
    max_pos = std::max(max_pos, (fast.head<3>() - truth.head<3>()).norm());
    max_vel = std::max(max_vel, (fast.tail<3>() - truth.tail<3>()).norm());
  }
  const double elapsed = seconds_since(t0);
  std::ostringstream os;
  os << "1000 states: max position error " << max_pos << " m (<= 1e-6), max velocity error "
     << max_vel << " m/s (<= 1e-9), " << elapsed << " s (< 5)";
  detail = os.str();
  return max_pos <= 1e-6 && max_vel <= 1e-9 && elapsed < 5.0;
}

// --- Criterion 2: reference generation across 100 uniformly distributed
// docking axes at the baseline scenario.
bool criterion2(std::string& detail, int workers) {
  const auto t0 = Clock::now();
  const double n = baseline_mean_motion();
  const EclipseProfile profile = baseline_profile();
  const std::vector<Vec3> axes = fibonacci_axes(100);

  int successes = 0;
  int geometry_bad = 0;
  std::vector<double> dv;
  std::vector<double> tof;
  std::vector<double> gen_time;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    RefGenParams p = RefGenParams::defaults();
    p.set_axis(axes[i]);
    PsoSettings pso;
    pso.seed = mix_seed(7, static_cast<std::uint64_t>(i));
    pso.workers = workers;
    const GenerationResult gen = generate_reference(p.x_i1, p, profile, 0.0, n, pso);
    gen_time.push_back(gen.generation_time_s);
    if (!gen.ok) continue;
    const ReferenceCheck chk = validate_reference(gen.ref, p, n);
    if (!chk.ok || chk.min_fly_radius_m < p.buffered_rho_kos() - 1e-6 ||
        chk.max_corridor_violation_m > 1e-6) {
      ++geometry_bad;
      continue;
    }
    ++successes;
    dv.push_back(gen.ref.dv_total_mps());
    tof.push_back(gen.ref.tau_1_s + gen.ref.tau_2_s);
  }
  const double total_s = seconds_since(t0);
  const double med_dv = dv.empty() ? 0.0 : quantile(dv, 0.5);
  const double med_tof = tof.empty() ? 0.0 : quantile(tof, 0.5);
  const double med_gen = gen_time.empty() ? 0.0 : quantile(gen_time, 0.5);
  std::ostringstream os;
  os << successes << "/100 references valid (" << geometry_bad
     << " geometry rejections), median dv " << med_dv << " m/s (in [0.40, 1.00]), median transfer time "
     << med_tof / 60.0 << " min (in [8, 18]), median generation " << med_gen
     << " s (<= 60), total " << total_s / 60.0 << " min (<= 90)";
  detail = os.str();
  return successes == 100 && med_dv >= 0.40 && med_dv <= 1.00 && med_tof >= 480.0 &&
         med_tof <= 1080.0 && med_gen <= 60.0 && total_s <= 5400.0;
}

// --- Criterion 3: fuel use on the in-plane -45 degree approach against the
// published figure for that scenario.
bool criterion3(std::string& detail, int workers) {
  const double n = baseline_mean_motion();
  const EclipseProfile profile = baseline_profile();
  const RefGenParams p = RefGenParams::defaults();  // axis already in-plane -45 deg
  PsoSettings pso;
  pso.seed = 0;
  pso.workers = workers;
  const GenerationResult gen = generate_reference(p.x_i1, p, profile, 0.0, n, pso);
  if (!gen.ok) {
    detail = "reference generation failed: " + gen.failure_reason;
    return false;
  }

  TrackingEnvironment env;
  env.orbit = TargetOrbit::from_semi_major_axis(6878.1e3);
  env.client0 = baseline_client();
  env.profile = profile;
  env.params = p;
  const MissionResult m = run_tracking(gen.ref, p.x_i1, env, ErrorModel::none(),
                                       GuidanceConfig::from_params(p), {}, 42);

  const double published = 1.1740;
  const double lo = 0.7 * published;
  const double hi = 1.3 * published;
  const bool pass = m.completed && m.dv_total_mps >= lo && m.dv_total_mps <= hi;
  std::ostringstream os;
  os << "closed-loop error-free dv " << m.dv_total_mps << " m/s (reference plan "
     << gen.ref.dv_total_mps() << " m/s, transfers " << (gen.ref.tau_1_s + gen.ref.tau_2_s) / 60.0
     << " min) vs published 1.1740 m/s, band [" << lo << ", " << hi << "]";
  if (!pass && m.completed) {
    os << " -- duration search settles at the minimum allowed phase durations, which costs"
          " far less fuel than the published operating point; see README, Known discrepancies";
  }
  detail = os.str();
  return pass;
}

// --- Criterion 4: low-error dispersion campaign lands every trial precisely
// with no contingency events.
bool criterion4(std::string& detail, int workers) {
  const auto t0 = Clock::now();
  ScenarioConfig cfg = ScenarioConfig::baseline();
  cfg.error_level = "low";
  cfg.trials = 100;
  cfg.master_seed = 11;
  cfg.workers = workers;
  cfg.emit_step_files = false;
  const CampaignReport rep = run_campaign(cfg);
  const double elapsed = seconds_since(t0);
  if (!rep.ok) {
    detail = "campaign failed: " + rep.failure_reason;
    return false;
  }
  const double mean_pos = rep.view_completed.count > 0 ? rep.view_completed.terminal_pos_m.mean : 1e9;
  const double mean_vel = rep.view_completed.count > 0 ? rep.view_completed.terminal_vel_mps.mean : 1e9;
  std::ostringstream os;
  os << rep.trials_completed << "/100 completed, " << rep.total_recomputes << " recomputes, "
     << rep.total_aborts << " aborts, " << rep.trials_fault << " faults, mean terminal position "
     << mean_pos * 1000.0 << " mm (<= 25), mean terminal velocity " << mean_vel * 1000.0
     << " mm/s (<= 1), " << elapsed / 60.0 << " min (<= 30)";
  detail = os.str();
  return rep.trials_completed == 100 && rep.total_recomputes == 0 && rep.total_aborts == 0 &&
         rep.trials_fault == 0 && mean_pos <= 0.025 && mean_vel <= 0.001 && elapsed <= 1800.0;
}

// --- Criterion 5: high-error campaign exercises the contingency machinery
// while every logged state respects the true safety bounds.
bool criterion5(std::string& detail, int workers) {
  ScenarioConfig cfg = ScenarioConfig::baseline();
  cfg.error_level = "high";
  cfg.trials = 100;
  cfg.master_seed = 13;
  cfg.workers = workers;
  cfg.emit_step_files = false;
  const CampaignReport rep = run_campaign(cfg);
  if (!rep.ok) {
    detail = "campaign failed: " + rep.failure_reason;
    return false;
  }

  int eventful = 0;
  for (const TrialSummary& t : rep.trials)
    if (t.recomputes > 0 || t.aborted) ++eventful;

  // Safety scan: outside abort mode, every post-step state must respect the
  // true keep-out sphere, and final-approach states must stay inside the
  // true corridor. The step that raises an abort is the detection step and
  // is excluded; the response it triggers is what the scan protects.
  long violations = 0;
  long scanned = 0;
  const double cos_c = std::cos(cfg.ref.alpha_c);
  for (const MissionResult& m : rep.missions) {
    for (const StepRecord& s : m.steps) {
      if (s.abort_mode || s.action == StepAction::kAbort) continue;
      ++scanned;
      const Vec3 r = s.x_end.r;
      if (s.phase == Phase::kFinalApproach) {
        if (cfg.ref.e_hat.dot(r) < cos_c * r.norm() - 1e-9) ++violations;
      } else if (r.norm() < cfg.ref.rho_kos - 1e-9) {
        ++violations;
      }
    }
  }

  const bool median_ok =
      rep.view_completed.count > 0 && rep.view_completed.terminal_pos_m.q2 <= 0.120;
  std::ostringstream os;
  os << rep.total_recomputes << " recomputes (>= 1), " << rep.total_aborts << " aborts (>= 1), "
     << eventful << "/100 eventful trials (in [5, 50]), completed median terminal position "
     << (rep.view_completed.count > 0 ? rep.view_completed.terminal_pos_m.q2 * 1000.0 : -1.0)
     << " mm (<= 120, " << rep.view_completed.count << " completed), " << violations
     << " safety violations across " << scanned << " scanned steps (== 0)";
  detail = os.str();
  return rep.total_recomputes >= 1 && rep.total_aborts >= 1 && eventful >= 5 && eventful <= 50 &&
         median_ok && violations == 0;
}

// --- Criterion 6: per-step guidance solve time at the baseline grid.
bool criterion6(std::string& detail, int workers) {
  const double n = baseline_mean_motion();
  const EclipseProfile profile = baseline_profile();
  const RefGenParams p = RefGenParams::defaults();
  PsoSettings pso;
  pso.particles = 8;
  pso.iterations = 5;
  pso.seed = 2;
  pso.workers = workers;
  const GenerationResult gen = generate_reference(p.x_i1, p, profile, 0.0, n, pso);
  if (!gen.ok) {
    detail = "reference generation failed: " + gen.failure_reason;
    return false;
  }
  TrackingEnvironment env;
  env.orbit = TargetOrbit::from_semi_major_axis(6878.1e3);
  env.client0 = baseline_client();
  env.profile = profile;
  env.params = p;
  const GuidanceConfig g = GuidanceConfig::from_params(p);
  const MissionResult m = run_tracking(gen.ref, p.x_i1, env, ErrorModel::none(), g, {}, 6);
  if (!m.completed || m.solve_times_s.empty()) {
    detail = "error-free mission did not complete";
    return false;
  }
  const double med = quantile(m.solve_times_s, 0.5);
  std::ostringstream os;
  os << "median guidance solve " << med * 1000.0 << " ms (<= 100) over " << m.solve_times_s.size()
     << " steps (horizon " << g.dt_g << " s, " << g.n_sub << " substeps)";
  detail = os.str();
  return med <= 0.1;
}

// --- Criterion 7: thruster allocation exactness inside the reachable set
// and optimal-distance behaviour outside it.
bool criterion7(std::string& detail, int /*workers*/) {
  const ThrusterSet set = ThrusterSet::canonical_planar8(1.66);
  const auto A = build_actuation_matrix(set);
  const Eigen::VectorXd fmax = set.f_max_vector();
  const Eigen::MatrixXd scaled = A * fmax.asDiagonal();
  Rng rng(77);

  double worst_interior = 0.0;
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd duty(set.size());
    for (int i = 0; i < set.size(); ++i) duty[i] = rng.uniform01();
    const Vec6 w = scaled * duty;
    worst_interior = std::max(worst_interior, allocate(set, w).residual_sum);
  }

  double worst_gap = 0.0;
  for (int k = 0; k < 500; ++k) {
    Eigen::VectorXd duty(set.size());
    for (int i = 0; i < set.size(); ++i) duty[i] = 2.0 * rng.uniform01();
    Vec6 w = scaled * duty;                    // may exceed saturation in-plane
    w[2] += 4.0 * (rng.uniform01() - 0.5);     // unreachable out-of-plane force
    w[3] += 2.0 * (rng.uniform01() - 0.5);     // unreachable x torque
    w[4] += 2.0 * (rng.uniform01() - 0.5);     // unreachable y torque
    const double got = allocate(set, w).residual_sum;
    const double best = oracle::l1_projection_distance(scaled, w);
    worst_gap = std::max(worst_gap, std::abs(got - best));
  }

  std::ostringstream os;
  os << "500 reachable commands: worst residual " << worst_interior
     << " N (<= 1e-6); 500 unreachable commands: worst gap to the independent projection "
     << worst_gap << " (<= 1e-6)";
  detail = os.str();
  return worst_interior <= 1e-6 && worst_gap <= 1e-6;
}

// --- Criterion 8: generated maneuver windows sit in sunlight at random
// epochs across a year.
bool criterion8(std::string& detail, int workers) {
  const double jd_base = jd_from_utc("2022-05-01T00:00:00Z");
  const double n = baseline_mean_motion();
  Rng rng(8);
  int gen_fail = 0;
  int dark = 0;
  int hold_nonzero = 0;
  int windows = 0;
  for (int i = 0; i < 50; ++i) {
    const double jd0 = jd_base + 365.0 * rng.uniform01();
    const EclipseProfile profile = eclipse_profile(baseline_client(), jd0, 0.0, 45000.0);
    const RefGenParams p = RefGenParams::defaults();
    PsoSettings pso;
    pso.particles = 8;
    pso.iterations = 5;
    pso.seed = mix_seed(0, static_cast<std::uint64_t>(i));
    pso.workers = workers;
    GenerationResult gen;
    try {
      gen = generate_reference(p.x_i1, p, profile, 0.0, n, pso);
    } catch (const EclipseHorizonFault&) {
      ++gen_fail;
      continue;
    }
    if (!gen.ok) {
      ++gen_fail;
      continue;
    }
    const ReferenceTrajectory& ref = gen.ref;
    const std::size_t fb = static_cast<std::size_t>(ref.fly_begin);
    const std::size_t fe = static_cast<std::size_t>(ref.fly_end);
    const std::size_t ab = static_cast<std::size_t>(ref.app_begin);
    const std::size_t ae = static_cast<std::size_t>(ref.app_end);
    const double starts[2] = {ref.t[fb], ref.t[ab]};
    const double ends[2] = {ref.t[fe], ref.t[ae]};
    const double taus[2] = {ref.tau_1_s, ref.tau_2_s};
    for (int wdx = 0; wdx < 2; ++wdx) {
      ++windows;
      bool lit = interp_eclipse(profile, starts[wdx]) == 1;
      for (std::size_t k = 0; lit && k < profile.time_s.size(); ++k) {
        if (profile.time_s[k] >= starts[wdx] - 1e-9 && profile.time_s[k] <= ends[wdx] + 1e-9 &&
            profile.eta[k] != 1)
          lit = false;
      }
      if (!lit) ++dark;
      if (hold_time(profile, starts[wdx], taus[wdx]) != 0.0) ++hold_nonzero;
    }
  }
  std::ostringstream os;
  os << "50 random epochs: " << gen_fail << " generation failures (== 0), " << dark << "/"
     << windows << " windows with a shadowed sample (== 0), " << hold_nonzero
     << " windows with nonzero residual hold (== 0)";
  detail = os.str();
  return gen_fail == 0 && dark == 0 && hold_nonzero == 0;
}

// --- Criterion 9: campaign output is byte-identical across repeated runs
// and across worker counts.
bool criterion9(std::string& detail, int /*workers*/) {
  ScenarioConfig cfg = ScenarioConfig::baseline();
  cfg.error_level = "high";
  cfg.trials = 25;
  cfg.master_seed = 17;
  cfg.pso_particles = 12;
  cfg.pso_iterations = 8;
  cfg.emit_step_files = false;
  const int plan[4] = {1, 1, 8, 8};
  std::vector<std::string> tables;
  for (int w : plan) {
    ScenarioConfig c = cfg;
    c.workers = w;
    const CampaignReport rep = run_campaign(c);
    if (!rep.ok) {
      detail = "campaign failed: " + rep.failure_reason;
      return false;
    }
    tables.push_back(trials_csv(rep));
  }
  bool identical = true;
  for (std::size_t i = 1; i < tables.size(); ++i)
    if (tables[i] != tables[0]) identical = false;
  std::ostringstream os;
  if (identical) {
    os << "4 campaigns (workers 1, 1, 8, 8; 25 high-error trials each) produced byte-identical"
          " trial tables (" << tables[0].size() << " bytes)";
  } else {
    os << "trial tables diverged across runs:";
    for (std::size_t i = 0; i < tables.size(); ++i)
      os << " run" << i << (tables[i] == tables[0] ? "==run0" : "!=run0");
  }
  detail = os.str();
  return identical;
}

bool run_criterion(int index, std::string& detail, int workers) {
  switch (index) {
    case 1: return criterion1(detail, workers);
    case 2: return criterion2(detail, workers);
    case 3: return criterion3(detail, workers);
    case 4: return criterion4(detail, workers);
    case 5: return criterion5(detail, workers);
    case 6: return criterion6(detail, workers);
    case 7: return criterion7(detail, workers);
    case 8: return criterion8(detail, workers);
    case 9: return criterion9(detail, workers);
    default: detail = "unknown criterion"; return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  int criterion = 0;
  int workers = 1;
  std::string out_dir;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    auto next = [&](const char* name) -> std::string {
      if (i + 1 >= argc) {
        std::cerr << "missing value for " << name << "\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (arg == "--criterion") {
      criterion = std::stoi(next("--criterion"));
    } else if (arg == "--workers") {
      workers = std::stoi(next("--workers"));
    } else if (arg == "--out") {
      out_dir = next("--out");
    } else {
      std::cerr << "usage: cortex_acceptance [--criterion N] [--workers W] [--out DIR]\n";
      return 2;
    }
  }
  if (criterion < 0 || criterion > 9 || workers < 1) {
    std::cerr << "criterion must be 0..9 and workers >= 1\n";
    return 2;
  }

  std::vector<int> selected;
  if (criterion == 0) {
    for (int c = 1; c <= 9; ++c) selected.push_back(c);
  } else {
    selected.push_back(criterion);
  }

  int failures = 0;
  std::ostringstream transcript;
  for (int c : selected) {
    std::string detail;
    bool pass = false;
    try {
      pass = run_criterion(c, detail, workers);
    } catch (const std::exception& e) {
      pass = false;
      detail = std::string("unhandled exception: ") + e.what();
    }
    const std::string line =
        std::string(pass ? "[PASS]" : "[FAIL]") + " criterion " + std::to_string(c) + ": " + detail;
    std::cout << line << std::endl;
    transcript << line << "\n";
    if (!pass) ++failures;
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(std::filesystem::path(out_dir) / "acceptance.txt");
    f << transcript.str();
  }
  return failures;
}
