// Command-line front end: reference generation, single closed-loop runs,
// Monte-Carlo campaigns, duty-cycle allocation tables, and eclipse profiles.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cortex/allocation.hpp"
#include "cortex/campaign.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cortex;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read: " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void spill(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory: " + dir);
}

ScenarioConfig load_scenario(const std::string& config_path) {
  if (config_path.empty()) return ScenarioConfig::baseline();
  return ScenarioConfig::from_json_text(slurp(config_path));
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 0;
  std::string error_level;
  int workers = 0;

  void apply(ScenarioConfig& cfg) const {
    if (seed_set) cfg.master_seed = seed;
    if (trials > 0) cfg.trials = trials;
    if (!error_level.empty()) cfg.error_level = error_level;
    if (workers > 0) cfg.workers = workers;
    cfg.validate();
  }
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_trials = true) {
  cmd->add_option("--config", f.config_path, "Scenario JSON (defaults to the baseline scenario)");
  cmd->add_option("--out", f.out_dir, "Output directory");
  cmd->add_option("--seed", f.seed, "Master seed")->each([&f](const std::string&) {
    f.seed_set = true;
  });
  if (with_trials) cmd->add_option("--trials", f.trials, "Trial count override");
  cmd->add_option("--error-level", f.error_level, "none | low | high | custom")
      ->check(CLI::IsMember({"none", "low", "high", "custom"}));
  cmd->add_option("--workers", f.workers, "Worker threads (0 = config value)");
}

/// Shared setup for refgen/track: client state, eclipse profile, mean motion.
struct SceneHandles {
  double n = 0.0;
  InertialState client0;
  EclipseProfile profile;
};

SceneHandles build_scene(const ScenarioConfig& cfg) {
  SceneHandles h;
  h.n = cfg.mean_motion();
  h.client0 = elements_to_state(cfg.sma_m, cfg.ecc, cfg.inc_rad, cfg.raan_rad, cfg.argp_rad,
                                cfg.true_anom_rad);
  h.profile = eclipse_profile(h.client0, jd_from_utc(cfg.epoch_utc), 0.0, cfg.eclipse_horizon_s);
  return h;
}

PsoSettings pso_from(const ScenarioConfig& cfg) {
  PsoSettings pso;
  pso.particles = cfg.pso_particles;
  pso.iterations = cfg.pso_iterations;
  pso.seed = cfg.master_seed;
  pso.workers = cfg.workers;
  return pso;
}

int cmd_refgen(const CommonFlags& flags) {
  ScenarioConfig cfg = load_scenario(flags.config_path);
  CommonFlags f = flags;
  f.apply(cfg);
  const SceneHandles scene = build_scene(cfg);
  const GenerationResult gen =
      generate_reference(cfg.ref.x_i1, cfg.ref, scene.profile, 0.0, scene.n, pso_from(cfg));
  if (!gen.ok) {
    std::cerr << "reference generation failed: " << gen.failure_reason << "\n";
    return 1;
  }
  const ReferenceTrajectory& ref = gen.ref;
  std::printf("reference: nodes=%d tau=[h1 %.1f, fly %.1f, h2 %.1f, app %.1f] s  "
              "dv=%.4f m/s  transfer_tof=%.2f min  gen_time=%.1f s  evaluations=%d\n",
              ref.node_count(), ref.tau_h1_s, ref.tau_1_s, ref.tau_h2_s, ref.tau_2_s,
              ref.dv_total_mps(), (ref.tau_1_s + ref.tau_2_s) / 60.0, gen.generation_time_s,
              gen.np_evaluations);
  const std::string out_dir = flags.out_dir.empty() ? "." : flags.out_dir;
  ensure_dir(out_dir);
  const std::string path = (fs::path(out_dir) / "reference.json").string();
  spill(path, reference_to_json(ref, cfg.ref, scene.n));
  std::printf("wrote %s\n", path.c_str());
  return 0;
}

int cmd_track(const CommonFlags& flags, const std::string& reference_path) {
  ScenarioConfig cfg = load_scenario(flags.config_path);
  CommonFlags f = flags;
  f.apply(cfg);
  const SceneHandles scene = build_scene(cfg);

  ReferenceTrajectory ref;
  if (!reference_path.empty()) {
    const ReferenceDocument doc = reference_from_json(slurp(reference_path));
    ref = doc.ref;
    if (std::abs(doc.mean_motion_rad_s - scene.n) > 1e-9 * scene.n)
      std::cerr << "warning: reference file mean motion differs from the scenario orbit\n";
  } else {
    const GenerationResult gen =
        generate_reference(cfg.ref.x_i1, cfg.ref, scene.profile, 0.0, scene.n, pso_from(cfg));
    if (!gen.ok) {
      std::cerr << "reference generation failed: " << gen.failure_reason << "\n";
      return 1;
    }
    ref = gen.ref;
  }

  TrackingEnvironment env;
  env.orbit = TargetOrbit::from_semi_major_axis(cfg.sma_m);
  env.client0 = scene.client0;
  env.truth = cfg.truth;
  env.truth.mass_kg = cfg.mass_kg;
  env.profile = scene.profile;
  env.params = cfg.ref;
  env.max_recomputes = cfg.max_recomputes;

  const MissionResult m = run_tracking(ref, cfg.ref.x_i1, env, cfg.resolve_error_model(),
                                       cfg.guidance, cfg.abort_schedule_s, cfg.master_seed);
  std::printf("mission: completed=%d aborted=%d fault=%d recomputes=%d tof=%.1f s  "
              "dv=%.4f m/s  terminal_pos=%.3e m  terminal_vel=%.3e m/s\n",
              m.completed, m.aborted, m.fault, m.recompute_count, m.tof_s, m.dv_total_mps,
              m.terminal_pos_error_m, m.terminal_vel_error_mps);
  if (m.fault) std::printf("fault: %s\n", m.fault_reason.c_str());
  const std::string out_dir = flags.out_dir.empty() ? "." : flags.out_dir;
  ensure_dir(out_dir);
  spill((fs::path(out_dir) / "mission.json").string(), mission_to_json(m));
  spill((fs::path(out_dir) / "steps.csv").string(), mission_steps_csv(m));
  std::printf("wrote %s/mission.json and %s/steps.csv\n", out_dir.c_str(), out_dir.c_str());
  return m.fault ? 1 : 0;
}

int cmd_mc(const CommonFlags& flags) {
  ScenarioConfig cfg = load_scenario(flags.config_path);
  CommonFlags f = flags;
  f.apply(cfg);
  const CampaignReport rep = run_campaign(cfg);
  if (!rep.ok) {
    std::cerr << "campaign fault: " << rep.failure_reason << "\n";
    return 1;
  }
  std::printf("campaign: trials=%zu completed=%d aborted=%d fault=%d  recomputes=%d  "
              "wall=%.1f s\n",
              rep.trials.size(), rep.trials_completed, rep.trials_aborted, rep.trials_fault,
              rep.total_recomputes, rep.wall_time_s);
  if (rep.view_completed.count > 0)
    std::printf("completed: tof q2=%.1f s  dv q2=%.4f m/s  pos mean=%.3e m  vel mean=%.3e m/s\n",
                rep.view_completed.tof_s.q2, rep.view_completed.dv_mps.q2,
                rep.view_completed.terminal_pos_m.mean, rep.view_completed.terminal_vel_mps.mean);
  if (rep.cpg_solve_ms.count > 0)
    std::printf("guidance solves: %d  median=%.2f ms  p99=%.2f ms\n", rep.cpg_solve_ms.count,
                rep.cpg_solve_ms.q2, rep.cpg_solve_ms.p99);
  const std::string out_dir = flags.out_dir.empty() ? "campaign_out" : flags.out_dir;
  emit_report(rep, out_dir);
  std::printf("wrote %s/{report.json, trials.csv, summary.csv, steps/}\n", out_dir.c_str());
  return 0;
}

std::vector<Vec6> load_commands(const std::string& path) {
  std::vector<Vec6> commands;
  const std::string text = slurp(path);
  if (fs::path(path).extension() == ".json") {
    const nlohmann::json doc = nlohmann::json::parse(text);
    if (!doc.is_array()) throw std::runtime_error("command JSON must be an array");
    for (const auto& row : doc) {
      if (!row.is_array() || row.size() != 6)
        throw std::runtime_error("each command must have 6 entries (force N, torque N m)");
      Vec6 c;
      for (int j = 0; j < 6; ++j) c[j] = row[j].get<double>();
      commands.push_back(c);
    }
    return commands;
  }
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    Vec6 c;
    char comma;
    bool ok = true;
    for (int j = 0; j < 6 && ok; ++j) {
      if (!(row >> c[j])) ok = false;
      if (j < 5) row >> comma;
    }
    if (!ok) continue;  // header or malformed line
    commands.push_back(c);
  }
  if (commands.empty()) throw std::runtime_error("no commands parsed from: " + path);
  return commands;
}

int cmd_allocate(const std::string& layout_path, const std::string& commands_path,
                 const std::string& out_dir) {
  const ThrusterSet set = layout_path.empty()
                              ? ThrusterSet::canonical_planar8()
                              : ThrusterSet::from_json_text(slurp(layout_path));
  set.validate();
  const std::vector<Vec6> commands = load_commands(commands_path);
  std::ostringstream os;
  os << "command,fx_n,fy_n,fz_n,tx_nm,ty_nm,tz_nm";
  for (int i = 0; i < set.size(); ++i) os << ",duty_" << i;
  os << ",residual_sum\n";
  os.precision(12);
  for (std::size_t k = 0; k < commands.size(); ++k) {
    const AllocationResult r = allocate(set, commands[k]);
    os << k;
    for (int j = 0; j < 6; ++j) os << ',' << commands[k][j];
    for (int i = 0; i < set.size(); ++i) os << ',' << r.duty[i];
    os << ',' << r.residual_sum << '\n';
  }
  if (out_dir.empty()) {
    std::cout << os.str();
  } else {
    ensure_dir(out_dir);
    const std::string path = (fs::path(out_dir) / "allocation.csv").string();
    spill(path, os.str());
    std::printf("wrote %s (%zu commands, %d thrusters)\n", path.c_str(), commands.size(),
                set.size());
  }
  return 0;
}

int cmd_eclipse(const CommonFlags& flags, double horizon_override) {
  ScenarioConfig cfg = load_scenario(flags.config_path);
  CommonFlags f = flags;
  f.apply(cfg);
  if (horizon_override > 0) cfg.eclipse_horizon_s = horizon_override;
  const SceneHandles scene = build_scene(cfg);
  double sunlit = 0.0;
  for (std::size_t i = 0; i + 1 < scene.profile.time_s.size(); ++i)
    if (scene.profile.eta[i] == 1)
      sunlit += scene.profile.time_s[i + 1] - scene.profile.time_s[i];
  const double span = scene.profile.t_end() - scene.profile.t_begin();
  std::printf("eclipse profile: span=%.0f s  samples=%zu  sunlit_fraction=%.4f\n", span,
              scene.profile.time_s.size(), sunlit / span);
  if (flags.out_dir.empty()) {
    std::cout << eclipse_profile_csv(scene.profile);
  } else {
    ensure_dir(flags.out_dir);
    const std::string path = (fs::path(flags.out_dir) / "eclipse.csv").string();
    spill(path, eclipse_profile_csv(scene.profile));
    std::printf("wrote %s\n", path.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Close-range rendezvous reference generation, tracking, and campaign tool"};
  app.require_subcommand(1);

  CommonFlags f_refgen, f_track, f_mc, f_eclipse;
  std::string reference_path, layout_path, commands_path, alloc_out;
  double horizon_override = 0.0;

  add_common(app.add_subcommand("refgen", "Generate and serialize a reference trajectory"),
             f_refgen, false);
  CLI::App* track = app.add_subcommand("track", "Run one closed-loop tracking mission");
  add_common(track, f_track, false);
  track->add_option("--reference", reference_path, "Reference JSON from refgen");
  add_common(app.add_subcommand("mc", "Run a Monte-Carlo campaign"), f_mc, true);
  CLI::App* alloc = app.add_subcommand("allocate", "Duty-cycle table for a command sequence");
  alloc->add_option("--layout", layout_path, "Thruster layout JSON (default: planar 8-bank)");
  alloc->add_option("--commands", commands_path,
                    "Command file: CSV rows or JSON array of 6-vectors")
      ->required();
  alloc->add_option("--out", alloc_out, "Output directory (default: stdout)");
  CLI::App* ecl = app.add_subcommand("eclipse", "Dump the sunlight profile for the scenario");
  add_common(ecl, f_eclipse, false);
  ecl->add_option("--horizon", horizon_override, "Profile span override (s)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("refgen")) return cmd_refgen(f_refgen);
    if (app.got_subcommand("track")) return cmd_track(f_track, reference_path);
    if (app.got_subcommand("mc")) return cmd_mc(f_mc);
    if (app.got_subcommand("allocate")) return cmd_allocate(layout_path, commands_path, alloc_out);
    if (app.got_subcommand("eclipse")) return cmd_eclipse(f_eclipse, horizon_override);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
