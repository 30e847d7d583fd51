#include <algorithm>
#include <initializer_list>

#include <json.hpp>

#include "fpflow/run.hpp"

namespace fpflow {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config error at " + path + ": " + what);
}

/// Strict view of one JSON object: every key must be consumed explicitly.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  template <typename T>
  void read(const char* key, T& target) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.push_back(key);
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      fail(path_ + "." + key, "wrong type");
    }
  }

  const json* child(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.push_back(key);
    return &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        fail(path_ + "." + key, "unknown key");
      }
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

void parse_model(const json& j, ModelSection& m) {
  Section s(j, "model");
  s.read("latent_family", m.latent_family);
  s.read("nu0", m.nu0);
  s.read("covariance", m.covariance);
  s.read("n_blocks", m.n_blocks);
  s.read("hidden_widths", m.hidden_widths);
  s.read("include_t", m.include_t);
  s.read("initial_mean", m.initial_mean);
  s.read("initial_covariance_scale", m.initial_covariance_scale);
  s.finish();
}

void parse_problem(const json& j, ProblemSection& p) {
  Section s(j, "problem");
  s.read("type", p.type);
  s.read("dimension", p.dimension);
  s.read("diffusion", p.diffusion);
  s.read("n_oscillators", p.n_oscillators);
  s.read("mass", p.mass);
  s.read("omega", p.omega);
  s.read("coupling", p.coupling);
  s.read("damping", p.damping);
  s.read("temperatures", p.temperatures);
  s.finish();
}

void parse_integrator(const json& j, IntegratorSection& i) {
  Section s(j, "integrator");
  s.read("scheme", i.scheme);
  s.read("dt", i.dt);
  s.read("t_end", i.t_end);
  s.read("n_samples", i.n_samples);
  s.read("seed", i.seed);
  s.read("adaptive", i.adaptive);
  s.read("adaptive_tol", i.adaptive_tol);
  s.read("shared_stage_samples", i.shared_stage_samples);
  s.read("n_threads", i.n_threads);
  s.finish();
}

void parse_observables(const json& j, ObservablesSection& o) {
  Section s(j, "observables");
  s.read("cadence", o.cadence);
  s.read("entropy", o.entropy);
  s.read("entropy_samples", o.entropy_samples);
  s.read("moments", o.moments);
  s.read("ball_radii", o.ball_radii);
  s.read("ball_samples", o.ball_samples);
  s.read("ball_stratified", o.ball_stratified);
  s.read("nu", o.nu);
  s.finish();
}

void parse_regularization(const json& j, RegularizationSection& r) {
  Section s(j, "regularization");
  s.read("svd_rel_cutoff", r.svd_rel_cutoff);
  s.read("tikhonov_shift", r.tikhonov_shift);
  s.read("dump_spectrum", r.dump_spectrum);
  s.finish();
}

void parse_reference(const json& j, ReferenceSection& r) {
  Section s(j, "reference");
  s.read("type", r.type);
  s.read("sde_dt", r.sde_dt);
  s.read("sde_particles", r.sde_particles);
  s.read("sde_scheme", r.sde_scheme);
  s.read("grid_delta", r.grid_delta);
  s.read("grid_r_max", r.grid_r_max);
  s.read("grid_dt", r.grid_dt);
  s.read("grid_scheme", r.grid_scheme);
  s.read("grid_lhopital_cells", r.grid_lhopital_cells);
  s.finish();
}

void parse_output(const json& j, OutputSection& o) {
  Section s(j, "output");
  s.read("directory", o.directory);
  s.read("checkpoint_cadence", o.checkpoint_cadence);
  s.finish();
}

template <typename T>
void require_one_of(const std::string& path, const T& value, std::initializer_list<T> allowed) {
  for (const T& a : allowed) {
    if (value == a) return;
  }
  fail(path, "unsupported value");
}

}  // namespace

RunConfig RunConfig::defaults(Experiment experiment) {
  RunConfig c;
  switch (experiment) {
    case Experiment::Heat8D:
      c.experiment = "heat8d";
      c.model.latent_family = "gaussian";
      c.model.covariance = "identity_plus_aat";
      c.model.n_blocks = 4;
      c.model.hidden_widths = {4};  // dimension/2
      c.model.include_t = false;
      c.problem.type = "heat";
      c.problem.dimension = 8;
      c.problem.diffusion = 1.0;
      c.integrator.t_end = 2.0;
      c.observables.cadence = 0.1;
      c.reference.type = "gaussian_oracle";
      c.output.directory = "fpflow_heat8d";
      break;
    case Experiment::PhaseSpace:
      c.experiment = "phasespace";
      c.model.latent_family = "gaussian";
      c.model.covariance = "cholesky_lower";
      c.model.n_blocks = 4;
      c.model.hidden_widths = {};  // affine subnets
      c.model.include_t = true;
      c.model.initial_mean = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
      c.problem.type = "phase_space";
      c.problem.n_oscillators = 3;
      c.problem.temperatures = {10.0, 3.0, 1.0};
      c.integrator.t_end = 10.0;
      c.observables.cadence = 0.25;
      c.reference.type = "sde";
      c.output.directory = "fpflow_phasespace";
      break;
    case Experiment::Custom:
      c.experiment = "custom";
      c.reference.type = "none";
      break;
  }
  return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "config");
  int version = 1;
  root.read("version", version);
  if (version != 1) fail("config.version", "unsupported schema version");

  std::string experiment = "custom";
  root.read("experiment", experiment);
  require_one_of<std::string>("config.experiment", experiment,
                              {"heat8d", "phasespace", "custom"});
  RunConfig config = defaults(experiment == "heat8d"     ? Experiment::Heat8D
                              : experiment == "phasespace" ? Experiment::PhaseSpace
                                                           : Experiment::Custom);
  if (const json* jm = root.child("model")) parse_model(*jm, config.model);
  if (const json* jp = root.child("problem")) parse_problem(*jp, config.problem);
  if (const json* ji = root.child("integrator")) parse_integrator(*ji, config.integrator);
  if (const json* jo = root.child("observables")) parse_observables(*jo, config.observables);
  if (const json* jr = root.child("regularization")) {
    parse_regularization(*jr, config.regularization);
  }
  if (const json* jf = root.child("reference")) parse_reference(*jf, config.reference);
  if (const json* jout = root.child("output")) parse_output(*jout, config.output);
  root.finish();
  config.validate();
  return config;
}

int RunConfig::dimension() const {
  return problem.type == "heat" ? problem.dimension : 2 * problem.n_oscillators;
}

void RunConfig::validate() const {
  require_one_of<std::string>("config.experiment", experiment,
                              {"heat8d", "phasespace", "custom"});
  require_one_of<std::string>("model.latent_family", model.latent_family,
                              {"gaussian", "student_t"});
  require_one_of<std::string>("model.covariance", model.covariance,
                              {"cholesky_lower", "identity_plus_aat"});
  require_one_of<std::string>("problem.type", problem.type, {"heat", "phase_space"});
  require_one_of<std::string>("integrator.scheme", integrator.scheme, {"heun", "euler"});
  require_one_of<std::string>("reference.type", reference.type,
                              {"none", "gaussian_oracle", "radial_grid", "sde", "gibbs_oracle"});
  require_one_of<std::string>("reference.sde_scheme", reference.sde_scheme,
                              {"euler_maruyama", "stochastic_heun"});
  require_one_of<std::string>("reference.grid_scheme", reference.grid_scheme,
                              {"crank_nicolson", "explicit_euler"});

  if (model.n_blocks < 0) fail("model.n_blocks", "must be non-negative");
  if (model.latent_family == "student_t" && !(model.nu0 > 0.0)) {
    fail("model.nu0", "must be positive");
  }
  if (!(model.initial_covariance_scale > 0.0)) {
    fail("model.initial_covariance_scale", "must be positive");
  }
  for (int w : model.hidden_widths) {
    if (w <= 0) fail("model.hidden_widths", "widths must be positive");
  }
  const int d = dimension();
  if (d < 1) fail("problem.dimension", "must be positive");
  if (model.n_blocks > 0 && d < 2) fail("model.n_blocks", "coupling blocks require d >= 2");
  if (!model.initial_mean.empty() && static_cast<int>(model.initial_mean.size()) != d) {
    fail("model.initial_mean", "length must equal the problem dimension");
  }
  if (problem.type == "heat") {
    if (problem.diffusion < 0.0) fail("problem.diffusion", "must be non-negative");
  } else {
    if (problem.n_oscillators < 1) fail("problem.n_oscillators", "must be positive");
    if (static_cast<int>(problem.temperatures.size()) != problem.n_oscillators) {
      fail("problem.temperatures", "need one entry per oscillator");
    }
    if (!(problem.mass > 0.0) || !(problem.omega > 0.0)) {
      fail("problem.mass", "m and omega must be positive");
    }
    if (problem.damping < 0.0) fail("problem.damping", "must be non-negative");
  }
  if (!(integrator.dt > 0.0)) fail("integrator.dt", "must be positive");
  if (integrator.t_end < 0.0) fail("integrator.t_end", "must be non-negative");
  if (integrator.n_samples < 2) fail("integrator.n_samples", "must be at least 2");
  if (observables.cadence < 0.0) fail("observables.cadence", "must be non-negative");
  if (observables.entropy && observables.entropy_samples < 2) {
    fail("observables.entropy_samples", "must be at least 2");
  }
  for (double r : observables.ball_radii) {
    if (!(r > 0.0)) fail("observables.ball_radii", "radii must be positive");
  }
  if (!observables.ball_radii.empty() && observables.ball_samples < 2) {
    fail("observables.ball_samples", "must be at least 2");
  }
  if (regularization.svd_rel_cutoff < 0.0 || regularization.tikhonov_shift < 0.0) {
    fail("regularization.svd_rel_cutoff", "must be non-negative");
  }
  if (reference.type == "gaussian_oracle" || reference.type == "radial_grid") {
    if (problem.type != "heat") fail("reference.type", "requires the heat problem");
  }
  if (reference.type == "sde" || reference.type == "gibbs_oracle") {
    if (problem.type != "phase_space") fail("reference.type", "requires the phase_space problem");
  }
  if (reference.type == "radial_grid") {
    for (double v : model.initial_mean) {
      if (v != 0.0) fail("reference.type", "radial_grid requires a centered initial state");
    }
    if (model.initial_covariance_scale != 1.0) {
      fail("reference.type", "radial_grid requires unit initial covariance");
    }
  }
  if (output.checkpoint_cadence < 0.0) fail("output.checkpoint_cadence", "must be non-negative");
}

std::string RunConfig::to_canonical_json_text() const {
  json j;
  j["version"] = version;
  j["experiment"] = experiment;
  j["model"] = {{"latent_family", model.latent_family},
                {"nu0", model.nu0},
                {"covariance", model.covariance},
                {"n_blocks", model.n_blocks},
                {"hidden_widths", model.hidden_widths},
                {"include_t", model.include_t},
                {"initial_mean", model.initial_mean},
                {"initial_covariance_scale", model.initial_covariance_scale}};
  j["problem"] = {{"type", problem.type},
                  {"dimension", problem.dimension},
                  {"diffusion", problem.diffusion},
                  {"n_oscillators", problem.n_oscillators},
                  {"mass", problem.mass},
                  {"omega", problem.omega},
                  {"coupling", problem.coupling},
                  {"damping", problem.damping},
                  {"temperatures", problem.temperatures}};
  j["integrator"] = {{"scheme", integrator.scheme},
                     {"dt", integrator.dt},
                     {"t_end", integrator.t_end},
                     {"n_samples", integrator.n_samples},
                     {"seed", integrator.seed},
                     {"adaptive", integrator.adaptive},
                     {"adaptive_tol", integrator.adaptive_tol},
                     {"shared_stage_samples", integrator.shared_stage_samples},
                     {"n_threads", integrator.n_threads}};
  j["observables"] = {{"cadence", observables.cadence},
                      {"entropy", observables.entropy},
                      {"entropy_samples", observables.entropy_samples},
                      {"moments", observables.moments},
                      {"ball_radii", observables.ball_radii},
                      {"ball_samples", observables.ball_samples},
                      {"ball_stratified", observables.ball_stratified},
                      {"nu", observables.nu}};
  j["regularization"] = {{"svd_rel_cutoff", regularization.svd_rel_cutoff},
                         {"tikhonov_shift", regularization.tikhonov_shift},
                         {"dump_spectrum", regularization.dump_spectrum}};
  j["reference"] = {{"type", reference.type},
                    {"sde_dt", reference.sde_dt},
                    {"sde_particles", reference.sde_particles},
                    {"sde_scheme", reference.sde_scheme},
                    {"grid_delta", reference.grid_delta},
                    {"grid_r_max", reference.grid_r_max},
                    {"grid_dt", reference.grid_dt},
                    {"grid_scheme", reference.grid_scheme},
                    {"grid_lhopital_cells", reference.grid_lhopital_cells}};
  j["output"] = {{"directory", output.directory},
                 {"checkpoint_cadence", output.checkpoint_cadence}};
  return j.dump(2) + "\n";
}

}  // namespace fpflow
