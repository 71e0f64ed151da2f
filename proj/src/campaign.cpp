#include "cortex/campaign.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cortex/parallel.hpp"
#include "cortex/rng.hpp"
#include "json.hpp"

namespace cortex {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

template <typename T>
T get_or(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j[key].get<T>();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("scenario field '") + key + "': " + e.what());
  }
}

Vec3 get_vec3(const json& j, const char* key, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  const json& a = j[key];
  if (!a.is_array() || a.size() != 3)
    throw std::runtime_error(std::string("scenario field '") + key + "' must have 3 entries");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json state_json(const RelativeState& x) {
  return json::array({x.r.x(), x.r.y(), x.r.z(), x.v.x(), x.v.y(), x.v.z()});
}

RelativeState get_state(const json& j, const char* key, const RelativeState& fallback) {
  if (!j.contains(key)) return fallback;
  const json& a = j[key];
  if (!a.is_array() || a.size() != 6)
    throw std::runtime_error(std::string("scenario field '") + key + "' must have 6 entries");
  RelativeState x;
  x.r = Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  x.v = Vec3(a[3].get<double>(), a[4].get<double>(), a[5].get<double>());
  return x;
}

json stats_json(const MetricStats& s) {
  json j;
  j["mean"] = s.mean;
  j["std"] = s.stddev;
  j["q1"] = s.q1;
  j["q2"] = s.q2;
  j["q3"] = s.q3;
  j["p99"] = s.p99;
  j["count"] = s.count;
  return j;
}

MetricStats stats_from_json(const json& j) {
  MetricStats s;
  s.mean = get_or(j, "mean", 0.0);
  s.stddev = get_or(j, "std", 0.0);
  s.q1 = get_or(j, "q1", 0.0);
  s.q2 = get_or(j, "q2", 0.0);
  s.q3 = get_or(j, "q3", 0.0);
  s.p99 = get_or(j, "p99", 0.0);
  s.count = get_or(j, "count", 0);
  return s;
}

json view_json(const CampaignView& v) {
  json j;
  j["name"] = v.name;
  j["count"] = v.count;
  if (v.count > 0) {
    j["tof_s"] = stats_json(v.tof_s);
    j["dv_mps"] = stats_json(v.dv_mps);
    j["terminal_pos_m"] = stats_json(v.terminal_pos_m);
    j["terminal_vel_mps"] = stats_json(v.terminal_vel_mps);
  }
  return j;
}

TrialSummary summarize_trial(int index, std::uint64_t seed, const MissionResult& m) {
  TrialSummary row;
  row.index = index;
  row.seed = seed;
  row.completed = m.completed;
  row.aborted = m.aborted;
  row.fault = m.fault;
  row.recomputes = m.recompute_count;
  row.aborts = m.abort_count;
  row.infeasible_steps = m.infeasible_cpg_count;
  row.steps = static_cast<int>(m.steps.size());
  row.tof_s = m.tof_s;
  row.dv_total_mps = m.dv_total_mps;
  row.dv_nullified_mps = m.dv_nullified_mps;
  row.terminal_pos_m = m.terminal_pos_error_m;
  row.terminal_vel_mps = m.terminal_vel_error_mps;
  row.fault_reason = m.fault_reason;
  return row;
}

void finalize_aggregates(CampaignReport& rep) {
  rep.trials_completed = rep.trials_aborted = rep.trials_fault = 0;
  rep.total_recomputes = rep.total_aborts = 0;
  for (const TrialSummary& t : rep.trials) {
    rep.trials_completed += t.completed ? 1 : 0;
    rep.trials_aborted += t.aborted ? 1 : 0;
    rep.trials_fault += t.fault ? 1 : 0;
    rep.total_recomputes += t.recomputes;
    rep.total_aborts += t.aborts;
  }
  rep.view_all = make_view("all", rep.trials);
  std::vector<TrialSummary> completed, aborted;
  for (const TrialSummary& t : rep.trials) {
    if (t.completed) completed.push_back(t);
    if (t.aborted) aborted.push_back(t);
  }
  rep.view_completed = make_view("completed", completed);
  rep.view_aborted = make_view("aborted", aborted);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

}  // namespace

ErrorModel ScenarioConfig::resolve_error_model() const {
  ErrorModel err;
  if (error_level == "none")
    err = ErrorModel::none();
  else if (error_level == "low")
    err = ErrorModel::low();
  else if (error_level == "high")
    err = ErrorModel::high();
  else if (error_level == "custom")
    err = custom_error;
  else
    throw std::invalid_argument("error_level must be none, low, high, or custom");
  err.r_as_m = ref.r_as;
  return err;
}

double ScenarioConfig::mean_motion() const {
  return TargetOrbit::from_semi_major_axis(sma_m).mean_motion_rad_s;
}

void ScenarioConfig::validate() const {
  if (!(sma_m > 6378137.0)) throw std::invalid_argument("semi-major axis must be super-surface");
  if (!(ecc >= 0 && ecc < 1)) throw std::invalid_argument("eccentricity must be in [0,1)");
  if (!(mass_kg > 0)) throw std::invalid_argument("mass must be positive");
  if (trials < 1) throw std::invalid_argument("trial count must be at least 1");
  if (workers < 0) throw std::invalid_argument("workers must be non-negative");
  if (max_recomputes < 0) throw std::invalid_argument("max_recomputes must be non-negative");
  if (!(eclipse_horizon_s > 0)) throw std::invalid_argument("eclipse horizon must be positive");
  if (pso_particles < 1 || pso_iterations < 1)
    throw std::invalid_argument("swarm budget must be at least 1x1");
  ref.validate();
  guidance.validate();
  truth.validate();
  resolve_error_model().validate();
  jd_from_utc(epoch_utc);  // throws on malformed epoch
  for (double t : abort_schedule_s)
    if (!(t >= 0)) throw std::invalid_argument("abort schedule times must be non-negative");
}

ScenarioConfig ScenarioConfig::baseline() {
  ScenarioConfig cfg;
  cfg.ref = RefGenParams::defaults();
  cfg.guidance = GuidanceConfig::from_params(cfg.ref);
  cfg.truth.mass_kg = cfg.mass_kg;
  cfg.custom_error = ErrorModel::low();
  return cfg;
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("scenario parse error: ") + e.what());
  }
  if (!doc.is_object()) throw std::runtime_error("scenario document must be a JSON object");
  const std::string schema = get_or<std::string>(doc, "schema", "cortex-scenario/1");
  if (schema != "cortex-scenario/1")
    throw std::runtime_error("unsupported scenario schema: " + schema);

  ScenarioConfig cfg = baseline();
  if (doc.contains("orbit")) {
    const json& o = doc["orbit"];
    cfg.sma_m = get_or(o, "sma_km", cfg.sma_m / 1000.0) * 1000.0;
    cfg.ecc = get_or(o, "ecc", cfg.ecc);
    cfg.inc_rad = get_or(o, "inc_deg", cfg.inc_rad * kRad2Deg) * kDeg2Rad;
    cfg.raan_rad = get_or(o, "raan_deg", cfg.raan_rad * kRad2Deg) * kDeg2Rad;
    cfg.argp_rad = get_or(o, "argp_deg", cfg.argp_rad * kRad2Deg) * kDeg2Rad;
    cfg.true_anom_rad = get_or(o, "true_anom_deg", cfg.true_anom_rad * kRad2Deg) * kDeg2Rad;
  }
  cfg.epoch_utc = get_or<std::string>(doc, "epoch_utc", cfg.epoch_utc);
  cfg.mass_kg = get_or(doc, "mass_kg", cfg.mass_kg);

  if (doc.contains("reference")) {
    const json& r = doc["reference"];
    RefGenParams& p = cfg.ref;
    p.a_max = get_or(r, "a_max_mps2", p.a_max);
    p.rho_kos = get_or(r, "rho_kos_m", p.rho_kos);
    p.alpha_p = get_or(r, "alpha_p_deg", p.alpha_p * kRad2Deg) * kDeg2Rad;
    p.alpha_c = get_or(r, "alpha_c_deg", p.alpha_c * kRad2Deg) * kDeg2Rad;
    p.tau_lb = get_or(r, "tau_lb_s", p.tau_lb);
    p.tau_ub = get_or(r, "tau_ub_s", p.tau_ub);
    p.dt_cp1 = get_or(r, "dt_cp1_s", p.dt_cp1);
    p.dt_cp2 = get_or(r, "dt_cp2_s", p.dt_cp2);
    p.eps_c = get_or(r, "eps_c_s", p.eps_c);
    p.thrust_margin = get_or(r, "thrust_margin", p.thrust_margin);
    p.kos_margin = get_or(r, "kos_margin", p.kos_margin);
    p.plume_margin = get_or(r, "plume_margin", p.plume_margin);
    p.corridor_margin = get_or(r, "corridor_margin", p.corridor_margin);
    p.r_as = get_or(r, "r_as_m", p.r_as);
    p.r_rs = get_or(r, "r_rs_m", p.r_rs);
    // The axis placement uses the buffered keep-out radius, so it runs after
    // the scalar overrides; explicit boundary states override it again.
    p.set_axis(get_vec3(r, "docking_axis", p.e_hat));
    p.x_i1 = get_state(r, "x_i1", p.x_i1);
    p.x_f1 = get_state(r, "x_f1", p.x_f1);
    p.x_f2 = get_state(r, "x_f2", p.x_f2);
    // Geometry changed; re-derive the slaved guidance constraint set.
    cfg.guidance = GuidanceConfig::from_params(p);
  }
  if (doc.contains("guidance")) {
    const json& g = doc["guidance"];
    GuidanceConfig& gc = cfg.guidance;
    gc.dt_g = get_or(g, "dt_g_s", gc.dt_g);
    gc.n_sub = get_or(g, "n_sub", gc.n_sub);
    gc.eps_p = get_or(g, "eps_p", gc.eps_p);
    if (g.contains("eps_r_m")) {
      const json& e = g["eps_r_m"];
      if (!e.is_array() || e.size() != 4)
        throw std::runtime_error("guidance.eps_r_m must have 4 entries");
      for (int i = 0; i < 4; ++i) gc.eps_r[i] = e[i].get<double>();
    }
    gc.kos_trigger_guard_m = get_or(g, "kos_trigger_guard_m", gc.kos_trigger_guard_m);
    gc.plume_trigger_guard_rad =
        get_or(g, "plume_trigger_guard_deg", gc.plume_trigger_guard_rad * kRad2Deg) * kDeg2Rad;
    gc.cone_trigger_guard_rad =
        get_or(g, "cone_trigger_guard_deg", gc.cone_trigger_guard_rad * kRad2Deg) * kDeg2Rad;
    gc.plume_dv_floor_mps = get_or(g, "plume_dv_floor_mps", gc.plume_dv_floor_mps);
  }
  if (doc.contains("truth")) {
    const json& t = doc["truth"];
    TruthModelConfig& tm = cfg.truth;
    tm.enable_j2 = get_or(t, "enable_j2", tm.enable_j2);
    tm.enable_drag = get_or(t, "enable_drag", tm.enable_drag);
    tm.drag_coefficient = get_or(t, "drag_coefficient", tm.drag_coefficient);
    tm.cross_section_m2 = get_or(t, "cross_section_m2", tm.cross_section_m2);
    tm.density_ref_kg_m3 = get_or(t, "density_ref_kg_m3", tm.density_ref_kg_m3);
    tm.ref_altitude_m = get_or(t, "ref_altitude_m", tm.ref_altitude_m);
    tm.scale_height_m = get_or(t, "scale_height_m", tm.scale_height_m);
    tm.integrator_step_s = get_or(t, "integrator_step_s", tm.integrator_step_s);
    tm.linear_relative_truth = get_or(t, "linear_relative_truth", tm.linear_relative_truth);
    tm.cw_mean_motion = get_or(t, "cw_mean_motion", tm.cw_mean_motion);
  }
  cfg.truth.mass_kg = cfg.mass_kg;
  cfg.error_level = get_or<std::string>(doc, "error_level", cfg.error_level);
  if (doc.contains("custom_error")) {
    const json& e = doc["custom_error"];
    ErrorModel& em = cfg.custom_error;
    em.delta_r_m = get_or(e, "delta_r_m", em.delta_r_m);
    em.sigma_dv_frac = get_or(e, "sigma_dv_frac", em.sigma_dv_frac);
    em.sigma_beta_rad = get_or(e, "sigma_beta_deg", em.sigma_beta_rad * kRad2Deg) * kDeg2Rad;
    em.sigma_alpha_rad = get_or(e, "sigma_alpha_deg", em.sigma_alpha_rad * kRad2Deg) * kDeg2Rad;
    em.p_misthrust = get_or(e, "p_misthrust", em.p_misthrust);
    em.velocity_error_ratio = get_or(e, "velocity_error_ratio", em.velocity_error_ratio);
  }
  if (doc.contains("abort_schedule_s")) {
    cfg.abort_schedule_s.clear();
    for (const json& v : doc["abort_schedule_s"]) cfg.abort_schedule_s.push_back(v.get<double>());
  }
  cfg.max_recomputes = get_or(doc, "max_recomputes", cfg.max_recomputes);
  cfg.trials = get_or(doc, "trials", cfg.trials);
  cfg.master_seed = get_or(doc, "master_seed", cfg.master_seed);
  cfg.workers = get_or(doc, "workers", cfg.workers);
  cfg.eclipse_horizon_s = get_or(doc, "eclipse_horizon_s", cfg.eclipse_horizon_s);
  if (doc.contains("pso")) {
    cfg.pso_particles = get_or(doc["pso"], "particles", cfg.pso_particles);
    cfg.pso_iterations = get_or(doc["pso"], "iterations", cfg.pso_iterations);
  }
  cfg.emit_step_files = get_or(doc, "emit_step_files", cfg.emit_step_files);
  cfg.validate();
  return cfg;
}

std::string ScenarioConfig::to_json_text() const {
  json doc;
  doc["schema"] = "cortex-scenario/1";
  doc["orbit"] = {{"sma_km", sma_m / 1000.0},
                  {"ecc", ecc},
                  {"inc_deg", inc_rad * kRad2Deg},
                  {"raan_deg", raan_rad * kRad2Deg},
                  {"argp_deg", argp_rad * kRad2Deg},
                  {"true_anom_deg", true_anom_rad * kRad2Deg}};
  doc["epoch_utc"] = epoch_utc;
  doc["mass_kg"] = mass_kg;
  doc["reference"] = {{"a_max_mps2", ref.a_max},
                      {"rho_kos_m", ref.rho_kos},
                      {"alpha_p_deg", ref.alpha_p * kRad2Deg},
                      {"alpha_c_deg", ref.alpha_c * kRad2Deg},
                      {"docking_axis", vec3_json(ref.e_hat)},
                      {"tau_lb_s", ref.tau_lb},
                      {"tau_ub_s", ref.tau_ub},
                      {"dt_cp1_s", ref.dt_cp1},
                      {"dt_cp2_s", ref.dt_cp2},
                      {"eps_c_s", ref.eps_c},
                      {"thrust_margin", ref.thrust_margin},
                      {"kos_margin", ref.kos_margin},
                      {"plume_margin", ref.plume_margin},
                      {"corridor_margin", ref.corridor_margin},
                      {"r_as_m", ref.r_as},
                      {"r_rs_m", ref.r_rs},
                      {"x_i1", state_json(ref.x_i1)},
                      {"x_f1", state_json(ref.x_f1)},
                      {"x_f2", state_json(ref.x_f2)}};
  doc["guidance"] = {{"dt_g_s", guidance.dt_g},
                     {"n_sub", guidance.n_sub},
                     {"eps_p", guidance.eps_p},
                     {"eps_r_m", {guidance.eps_r[0], guidance.eps_r[1], guidance.eps_r[2],
                                  guidance.eps_r[3]}},
                     {"kos_trigger_guard_m", guidance.kos_trigger_guard_m},
                     {"plume_trigger_guard_deg", guidance.plume_trigger_guard_rad * kRad2Deg},
                     {"cone_trigger_guard_deg", guidance.cone_trigger_guard_rad * kRad2Deg},
                     {"plume_dv_floor_mps", guidance.plume_dv_floor_mps}};
  doc["truth"] = {{"enable_j2", truth.enable_j2},
                  {"enable_drag", truth.enable_drag},
                  {"drag_coefficient", truth.drag_coefficient},
                  {"cross_section_m2", truth.cross_section_m2},
                  {"density_ref_kg_m3", truth.density_ref_kg_m3},
                  {"ref_altitude_m", truth.ref_altitude_m},
                  {"scale_height_m", truth.scale_height_m},
                  {"integrator_step_s", truth.integrator_step_s},
                  {"linear_relative_truth", truth.linear_relative_truth},
                  {"cw_mean_motion", truth.cw_mean_motion}};
  doc["error_level"] = error_level;
  doc["custom_error"] = {{"delta_r_m", custom_error.delta_r_m},
                         {"sigma_dv_frac", custom_error.sigma_dv_frac},
                         {"sigma_beta_deg", custom_error.sigma_beta_rad * kRad2Deg},
                         {"sigma_alpha_deg", custom_error.sigma_alpha_rad * kRad2Deg},
                         {"p_misthrust", custom_error.p_misthrust},
                         {"velocity_error_ratio", custom_error.velocity_error_ratio}};
  doc["abort_schedule_s"] = abort_schedule_s;
  doc["max_recomputes"] = max_recomputes;
  doc["trials"] = trials;
  doc["master_seed"] = master_seed;
  doc["workers"] = workers;
  doc["eclipse_horizon_s"] = eclipse_horizon_s;
  doc["pso"] = {{"particles", pso_particles}, {"iterations", pso_iterations}};
  doc["emit_step_files"] = emit_step_files;
  return doc.dump(2) + "\n";
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile fraction must be in [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricStats aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate of an empty sample");
  MetricStats s;
  s.count = static_cast<int>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.count;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / s.count);  // population deviation
  s.q1 = quantile(values, 0.25);
  s.q2 = quantile(values, 0.50);
  s.q3 = quantile(values, 0.75);
  s.p99 = quantile(values, 0.99);
  return s;
}

CampaignView make_view(const std::string& name, const std::vector<TrialSummary>& rows) {
  CampaignView v;
  v.name = name;
  v.count = static_cast<int>(rows.size());
  if (rows.empty()) return v;
  std::vector<double> tof, dv, pos, vel;
  tof.reserve(rows.size());
  dv.reserve(rows.size());
  pos.reserve(rows.size());
  vel.reserve(rows.size());
  for (const TrialSummary& t : rows) {
    tof.push_back(t.tof_s);
    dv.push_back(t.dv_total_mps);
    pos.push_back(t.terminal_pos_m);
    vel.push_back(t.terminal_vel_mps);
  }
  v.tof_s = aggregate(tof);
  v.dv_mps = aggregate(dv);
  v.terminal_pos_m = aggregate(pos);
  v.terminal_vel_mps = aggregate(vel);
  return v;
}

CampaignReport run_campaign(const ScenarioConfig& cfg) {
  const auto wall0 = std::chrono::steady_clock::now();
  CampaignReport rep;
  rep.config = cfg;
  cfg.validate();
  const double n = cfg.mean_motion();
  const InertialState client0 = elements_to_state(cfg.sma_m, cfg.ecc, cfg.inc_rad,
                                                  cfg.raan_rad, cfg.argp_rad, cfg.true_anom_rad);

  EclipseProfile profile;
  GenerationResult gen;
  try {
    profile = eclipse_profile(client0, jd_from_utc(cfg.epoch_utc), 0.0, cfg.eclipse_horizon_s);
    // One docking axis, one reference: every trial tracks the same plan.
    PsoSettings pso;
    pso.particles = cfg.pso_particles;
    pso.iterations = cfg.pso_iterations;
    pso.seed = cfg.master_seed;
    pso.workers = cfg.workers;
    gen = generate_reference(cfg.ref.x_i1, cfg.ref, profile, 0.0, n, pso);
  } catch (const std::exception& e) {
    rep.failure_reason = std::string("campaign setup failed: ") + e.what();
    return rep;
  }
  if (!gen.ok) {
    rep.failure_reason = "reference generation failed: " + gen.failure_reason;
    return rep;
  }
  rep.reference = gen.ref;
  rep.reference_dv_mps = gen.ref.dv_total_mps();
  rep.reference_tof_s = gen.ref.tau_1_s + gen.ref.tau_2_s;
  rep.reference_gen_time_s = gen.generation_time_s;
  rep.reference_np_evaluations = gen.np_evaluations;

  TrackingEnvironment env;
  env.orbit = TargetOrbit::from_semi_major_axis(cfg.sma_m);
  env.client0 = client0;
  env.truth = cfg.truth;
  env.truth.mass_kg = cfg.mass_kg;
  env.profile = profile;
  env.params = cfg.ref;
  env.max_recomputes = cfg.max_recomputes;
  const ErrorModel err = cfg.resolve_error_model();

  rep.missions.resize(cfg.trials);
  rep.trials.resize(cfg.trials);
  parallel_for_indexed(cfg.trials, cfg.workers, [&](int i) {
    const std::uint64_t seed = mix_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
    MissionResult m;
    try {
      m = run_tracking(rep.reference, cfg.ref.x_i1, env, err, cfg.guidance,
                       cfg.abort_schedule_s, seed);
    } catch (const std::exception& e) {
      m = MissionResult{};
      m.fault = true;
      m.fault_reason = std::string("trial raised: ") + e.what();
    }
    rep.missions[i] = std::move(m);
    rep.trials[i] = summarize_trial(i, seed, rep.missions[i]);
  });

  finalize_aggregates(rep);
  std::vector<double> solve_ms;
  for (const MissionResult& m : rep.missions)
    for (double s : m.solve_times_s) solve_ms.push_back(1000.0 * s);
  if (!solve_ms.empty()) rep.cpg_solve_ms = aggregate(solve_ms);
  rep.ok = true;
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return rep;
}

std::string report_to_json(const CampaignReport& report) {
  json doc;
  doc["schema"] = "cortex-campaign/1";
  doc["ok"] = report.ok;
  doc["failure_reason"] = report.failure_reason;
  doc["config"] = json::parse(report.config.to_json_text());
  json ref;
  ref["kind"] = report.reference.kind;
  ref["nodes"] = report.reference.node_count();
  ref["tau_h1_s"] = report.reference.tau_h1_s;
  ref["tau_1_s"] = report.reference.tau_1_s;
  ref["tau_h2_s"] = report.reference.tau_h2_s;
  ref["tau_2_s"] = report.reference.tau_2_s;
  ref["dv_mps"] = report.reference_dv_mps;
  ref["transfer_tof_s"] = report.reference_tof_s;
  ref["generation_time_s"] = report.reference_gen_time_s;
  ref["np_evaluations"] = report.reference_np_evaluations;
  doc["reference"] = ref;
  doc["counts"] = {{"trials", static_cast<int>(report.trials.size())},
                   {"completed", report.trials_completed},
                   {"aborted", report.trials_aborted},
                   {"fault", report.trials_fault},
                   {"total_recomputes", report.total_recomputes},
                   {"total_aborts", report.total_aborts}};
  doc["aggregates"] = {{"all", view_json(report.view_all)},
                       {"completed", view_json(report.view_completed)},
                       {"aborted", view_json(report.view_aborted)}};
  doc["cpg_solve_ms"] = stats_json(report.cpg_solve_ms);
  doc["wall_time_s"] = report.wall_time_s;
  json rows = json::array();
  for (const TrialSummary& t : report.trials) {
    json r;
    r["index"] = t.index;
    r["seed"] = t.seed;
    r["completed"] = t.completed;
    r["aborted"] = t.aborted;
    r["fault"] = t.fault;
    r["recomputes"] = t.recomputes;
    r["aborts"] = t.aborts;
    r["infeasible_steps"] = t.infeasible_steps;
    r["steps"] = t.steps;
    r["tof_s"] = t.tof_s;
    r["dv_total_mps"] = t.dv_total_mps;
    r["dv_nullified_mps"] = t.dv_nullified_mps;
    r["terminal_pos_m"] = t.terminal_pos_m;
    r["terminal_vel_mps"] = t.terminal_vel_mps;
    r["fault_reason"] = t.fault_reason;
    rows.push_back(r);
  }
  doc["trials"] = rows;
  return doc.dump(2) + "\n";
}

CampaignReport report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("report parse error: ") + e.what());
  }
  const std::string schema = get_or<std::string>(doc, "schema", "");
  if (schema != "cortex-campaign/1")
    throw std::runtime_error("unsupported report schema: " + schema);
  CampaignReport rep;
  rep.ok = get_or(doc, "ok", false);
  rep.failure_reason = get_or<std::string>(doc, "failure_reason", "");
  if (doc.contains("config")) rep.config = ScenarioConfig::from_json_text(doc["config"].dump());
  if (doc.contains("reference")) {
    const json& r = doc["reference"];
    rep.reference_dv_mps = get_or(r, "dv_mps", 0.0);
    rep.reference_tof_s = get_or(r, "transfer_tof_s", 0.0);
    rep.reference_gen_time_s = get_or(r, "generation_time_s", 0.0);
    rep.reference_np_evaluations = get_or(r, "np_evaluations", 0);
  }
  if (doc.contains("cpg_solve_ms")) rep.cpg_solve_ms = stats_from_json(doc["cpg_solve_ms"]);
  rep.wall_time_s = get_or(doc, "wall_time_s", 0.0);
  if (doc.contains("trials")) {
    for (const json& r : doc["trials"]) {
      TrialSummary t;
      t.index = get_or(r, "index", 0);
      t.seed = get_or<std::uint64_t>(r, "seed", 0);
      t.completed = get_or(r, "completed", false);
      t.aborted = get_or(r, "aborted", false);
      t.fault = get_or(r, "fault", false);
      t.recomputes = get_or(r, "recomputes", 0);
      t.aborts = get_or(r, "aborts", 0);
      t.infeasible_steps = get_or(r, "infeasible_steps", 0);
      t.steps = get_or(r, "steps", 0);
      t.tof_s = get_or(r, "tof_s", 0.0);
      t.dv_total_mps = get_or(r, "dv_total_mps", 0.0);
      t.dv_nullified_mps = get_or(r, "dv_nullified_mps", 0.0);
      t.terminal_pos_m = get_or(r, "terminal_pos_m", 0.0);
      t.terminal_vel_mps = get_or(r, "terminal_vel_mps", 0.0);
      t.fault_reason = get_or<std::string>(r, "fault_reason", "");
      rep.trials.push_back(t);
    }
  }
  finalize_aggregates(rep);  // aggregates are recomputable from the rows
  return rep;
}

std::string trials_csv(const CampaignReport& report) {
  std::ostringstream os;
  os << "index,seed,completed,aborted,fault,recomputes,aborts,infeasible_steps,steps,"
        "tof_s,dv_total_mps,dv_nullified_mps,terminal_pos_m,terminal_vel_mps,fault_reason\n";
  for (const TrialSummary& t : report.trials) {
    os << t.index << ',' << t.seed << ',' << (t.completed ? 1 : 0) << ',' << (t.aborted ? 1 : 0)
       << ',' << (t.fault ? 1 : 0) << ',' << t.recomputes << ',' << t.aborts << ','
       << t.infeasible_steps << ',' << t.steps << ',' << fmt_double(t.tof_s) << ','
       << fmt_double(t.dv_total_mps) << ',' << fmt_double(t.dv_nullified_mps) << ','
       << fmt_double(t.terminal_pos_m) << ',' << fmt_double(t.terminal_vel_mps) << ','
       << csv_escape(t.fault_reason) << '\n';
  }
  return os.str();
}

std::string summary_csv(const CampaignReport& report) {
  std::ostringstream os;
  os << "view,metric,unit,count,mean,std,q1,q2,q3,p99\n";
  auto emit = [&os](const CampaignView& v) {
    if (v.count == 0) return;
    auto row = [&](const char* metric, const char* unit, const MetricStats& s) {
      os << v.name << ',' << metric << ',' << unit << ',' << s.count << ',' << fmt_double(s.mean)
         << ',' << fmt_double(s.stddev) << ',' << fmt_double(s.q1) << ',' << fmt_double(s.q2)
         << ',' << fmt_double(s.q3) << ',' << fmt_double(s.p99) << '\n';
    };
    row("tof", "s", v.tof_s);
    row("dv_total", "m/s", v.dv_mps);
    row("terminal_pos", "m", v.terminal_pos_m);
    row("terminal_vel", "m/s", v.terminal_vel_mps);
  };
  emit(report.view_all);
  emit(report.view_completed);
  emit(report.view_aborted);
  return os.str();
}

void emit_report(const CampaignReport& report, const std::string& out_dir) {
  if (report.trials.empty())
    throw std::invalid_argument("refusing to emit a campaign report with no trials");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory: " + out_dir);
  const fs::path root(out_dir);
  write_file((root / "report.json").string(), report_to_json(report));
  write_file((root / "trials.csv").string(), trials_csv(report));
  write_file((root / "summary.csv").string(), summary_csv(report));
  if (report.config.emit_step_files && !report.missions.empty()) {
    fs::create_directories(root / "steps", ec);
    if (ec) throw std::runtime_error("cannot create steps directory under: " + out_dir);
    for (std::size_t i = 0; i < report.missions.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "trial_%03zu.csv", i);
      write_file((root / "steps" / name).string(), mission_steps_csv(report.missions[i]));
    }
  }
}

}  // namespace cortex
