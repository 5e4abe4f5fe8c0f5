#include "fino/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

namespace fino {

namespace {

// Reads keys of one JSON object and rejects any key that was not asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + " must be a JSON object");
  }

  template <typename V>
  void get(const std::string& key, V& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    out = convert<V>(*it, name_ + "." + key);
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + name_ + "." + it.key());
  }

 private:
  template <typename V>
  static V convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<V, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + " must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!v.is_string()) throw ConfigError(where + " must be a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<V>) {
      if (!v.is_number()) throw ConfigError(where + " must be a number");
      return v.get<V>();
    } else if constexpr (std::is_unsigned_v<V>) {
      if (!v.is_number_unsigned()) throw ConfigError(where + " must be a non-negative integer");
      return v.get<V>();
    } else {
      if (!v.is_array()) throw ConfigError(where + " must be an array");
      V out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(convert<typename V::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void parse_model(const json& j, ModelConfig& c, bool with_derived) {
  Section s(j, "model");
  if (with_derived) {
    s.get("spatial_dims", c.spatial_dims);
    s.get("in_channels", c.in_channels);
    s.get("out_channels", c.out_channels);
  }
  s.get("levels", c.levels);
  s.get("channels_per_level", c.channels_per_level);
  s.get("blocks_per_stage", c.blocks_per_stage);
  s.get("radius", c.radius);
  s.get("stencil_channels", c.stencil_channels);
  s.get("proj_radius", c.proj_radius);
  std::string pad = padding_name(c.padding);
  s.get("padding", pad);
  c.padding = parse_padding(pad);
  s.get("dt_init", c.dt_init);
  s.get("dt_shared", c.dt_shared);
  s.finish();
}

json model_json(const ModelConfig& c, bool with_derived) {
  json j;
  if (with_derived) {
    j["spatial_dims"] = c.spatial_dims;
    j["in_channels"] = c.in_channels;
    j["out_channels"] = c.out_channels;
  }
  j["levels"] = c.levels;
  j["channels_per_level"] = c.channels_per_level;
  j["blocks_per_stage"] = c.blocks_per_stage;
  j["radius"] = c.radius;
  j["stencil_channels"] = c.stencil_channels;
  j["proj_radius"] = c.proj_radius;
  j["padding"] = padding_name(c.padding);
  j["dt_init"] = c.dt_init;
  j["dt_shared"] = c.dt_shared;
  return j;
}

}  // namespace

PdeSpec make_pde(const DataConfig& d) {
  PdeSpec spec;
  if (d.pde == "advection1d")
    spec = Advection1D{d.beta};
  else if (d.pde == "diffusion_reaction1d")
    spec = DiffusionReaction1D{d.nu, d.rho};
  else if (d.pde == "diffusion_reaction2d")
    spec = DiffusionReaction2D{d.du, d.dv, d.k};
  else
    throw ConfigError("data.pde must be advection1d, diffusion_reaction1d or diffusion_reaction2d, got '" + d.pde + "'");
  validate_pde(spec);
  return spec;
}

Grid make_grid(const DataConfig& d) {
  const PdeSpec spec = make_pde(d);
  if (pde_dims(spec) == 1) return Grid::line(d.grid_points, d.domain_length > 0 ? d.domain_length : 1.0, 0.0);
  const double L = d.domain_length > 0 ? d.domain_length : 2.0;
  return Grid::square(d.grid_points, L, -0.5 * L);
}

void resolve(RunConfig& cfg) {
  const PdeSpec spec = make_pde(cfg.data);
  const Grid grid = make_grid(cfg.data);
  if (cfg.data.n_traj < 2) throw ConfigError("data.n_traj must be at least 2");
  if (cfg.data.t_frames < 2) throw ConfigError("data.t_frames must be at least 2");
  if (!(cfg.data.dt_data > 0.0)) throw ConfigError("data.dt_data must be positive");
  if (cfg.data.domain_length < 0.0) throw ConfigError("data.domain_length must be non-negative");
  if (cfg.dtype != "float32" && cfg.dtype != "float64") throw ConfigError("dtype must be float32 or float64");
  cfg.train.validate();
  cfg.model.spatial_dims = grid.dims;
  cfg.model.in_channels = cfg.train.k_hist * pde_channels(spec) + 2;
  cfg.model.out_channels = pde_channels(spec);
  cfg.model.validate();
  if (cfg.bound_check.k_steps < 1) throw ConfigError("bound_check.k_steps must be at least 1");
  if (cfg.bound_check.lipschitz_pairs < 100) throw ConfigError("bound_check.lipschitz_pairs must be at least 100");
  if (!(cfg.bound_check.tol >= 0.0)) throw ConfigError("bound_check.tol must be non-negative");
  if (!(cfg.bound_check.perturbation > 0.0)) throw ConfigError("bound_check.perturbation must be positive");
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  Section root(j, "config");
  root.get("dtype", cfg.dtype);
  if (const json* d = root.sub("data")) {
    Section s(*d, "data");
    auto& c = cfg.data;
    s.get("pde", c.pde);
    s.get("beta", c.beta);
    s.get("nu", c.nu);
    s.get("rho", c.rho);
    s.get("du", c.du);
    s.get("dv", c.dv);
    s.get("k", c.k);
    s.get("grid_points", c.grid_points);
    s.get("domain_length", c.domain_length);
    s.get("n_traj", c.n_traj);
    s.get("t_frames", c.t_frames);
    s.get("dt_data", c.dt_data);
    s.get("seed", c.seed);
    s.finish();
  }
  if (const json* m = root.sub("model")) parse_model(*m, cfg.model, false);
  if (const json* t = root.sub("train")) cfg.train = train_config_from_json(*t);
  if (const json* e = root.sub("eval")) {
    Section s(*e, "eval");
    s.get("band_k1", cfg.eval.band_k1);
    s.get("band_k2", cfg.eval.band_k2);
    s.get("rollout_steps", cfg.eval.rollout_steps);
    s.finish();
  }
  if (const json* b = root.sub("bound_check")) {
    Section s(*b, "bound_check");
    s.get("k_steps", cfg.bound_check.k_steps);
    s.get("lipschitz_pairs", cfg.bound_check.lipschitz_pairs);
    s.get("perturbation", cfg.bound_check.perturbation);
    s.get("tol", cfg.bound_check.tol);
    s.finish();
  }
  if (const json* o = root.sub("output")) {
    Section s(*o, "output");
    s.get("plots", cfg.output.plots);
    s.get("per_epoch_log", cfg.output.per_epoch_log);
    s.finish();
  }
  root.finish();
  resolve(cfg);
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["dtype"] = cfg.dtype;
  const auto& d = cfg.data;
  j["data"] = {{"pde", d.pde},       {"beta", d.beta},         {"nu", d.nu},
               {"rho", d.rho},       {"du", d.du},             {"dv", d.dv},
               {"k", d.k},           {"grid_points", d.grid_points}, {"domain_length", d.domain_length},
               {"n_traj", d.n_traj}, {"t_frames", d.t_frames}, {"dt_data", d.dt_data},
               {"seed", d.seed}};
  j["model"] = model_json(cfg.model, false);
  j["train"] = train_config_to_json(cfg.train);
  j["eval"] = {{"band_k1", cfg.eval.band_k1}, {"band_k2", cfg.eval.band_k2}, {"rollout_steps", cfg.eval.rollout_steps}};
  j["bound_check"] = {{"k_steps", cfg.bound_check.k_steps},
                      {"lipschitz_pairs", cfg.bound_check.lipschitz_pairs},
                      {"perturbation", cfg.bound_check.perturbation},
                      {"tol", cfg.bound_check.tol}};
  j["output"] = {{"plots", cfg.output.plots}, {"per_epoch_log", cfg.output.per_epoch_log}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json model_config_to_json(const ModelConfig& c) { return model_json(c, true); }

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  parse_model(j, c, true);
  c.validate();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"k_hist", c.k_hist},
          {"horizon", c.horizon},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"clip_norm", c.clip_norm},
          {"seed", c.seed},
          {"teacher_forcing", c.teacher_forcing},
          {"windows_per_traj", c.windows_per_traj},
          {"val_fraction", c.val_fraction},
          {"val_horizon", c.val_horizon}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  Section s(j, "train");
  s.get("k_hist", c.k_hist);
  s.get("horizon", c.horizon);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("lr", c.lr);
  s.get("beta1", c.beta1);
  s.get("beta2", c.beta2);
  s.get("eps", c.eps);
  s.get("clip_norm", c.clip_norm);
  s.get("seed", c.seed);
  s.get("teacher_forcing", c.teacher_forcing);
  s.get("windows_per_traj", c.windows_per_traj);
  s.get("val_fraction", c.val_fraction);
  s.get("val_horizon", c.val_horizon);
  s.finish();
  c.validate();
  return c;
}

json pde_to_json(const PdeSpec& spec) {
  json j;
  j["kind"] = pde_name(spec);
  if (const auto* a = std::get_if<Advection1D>(&spec)) {
    j["beta"] = a->beta;
  } else if (const auto* d = std::get_if<DiffusionReaction1D>(&spec)) {
    j["nu"] = d->nu;
    j["rho"] = d->rho;
  } else {
    const auto& d2 = std::get<DiffusionReaction2D>(spec);
    j["du"] = d2.du;
    j["dv"] = d2.dv;
    j["k"] = d2.k;
  }
  return j;
}

PdeSpec pde_from_json(const json& j) {
  Section s(j, "pde");
  std::string kind;
  s.get("kind", kind);
  PdeSpec spec;
  if (kind == "advection1d") {
    Advection1D a;
    s.get("beta", a.beta);
    spec = a;
  } else if (kind == "diffusion_reaction1d") {
    DiffusionReaction1D d;
    s.get("nu", d.nu);
    s.get("rho", d.rho);
    spec = d;
  } else if (kind == "diffusion_reaction2d") {
    DiffusionReaction2D d;
    s.get("du", d.du);
    s.get("dv", d.dv);
    s.get("k", d.k);
    spec = d;
  } else {
    throw ConfigError("unknown pde kind '" + kind + "'");
  }
  s.finish();
  validate_pde(spec);
  return spec;
}

json grid_to_json(const Grid& g) {
  return {{"dims", g.dims}, {"extents", g.extents}, {"lengths", g.lengths}, {"origins", g.origins}};
}

Grid grid_from_json(const json& j) {
  Grid g;
  Section s(j, "grid");
  s.get("dims", g.dims);
  s.get("extents", g.extents);
  s.get("lengths", g.lengths);
  s.get("origins", g.origins);
  s.finish();
  g.validate();
  return g;
}

json metrics_to_json(const MetricsReport& m) {
  return {{"rmse", m.rmse},           {"nrmse", m.nrmse},         {"max_error", m.max_error},
          {"crmse", m.crmse},         {"frmse_low", m.frmse_low}, {"frmse_mid", m.frmse_mid},
          {"frmse_high", m.frmse_high}};
}

json bound_report_to_json(const BoundReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) rows.push_back({{"k", row.k}, {"e_k", row.e_k}, {"bound", row.bound}, {"pass", row.pass}});
  return {{"C_hat", r.c_hat},
          {"C_hat_is_lower_bound", true},
          {"eps_hat", r.eps_hat},
          {"eps_mean", r.eps_mean},
          {"K_steps", r.k_steps},
          {"lipschitz_pairs", r.lipschitz_pairs},
          {"tol", r.tol},
          {"branch", r.linear_branch ? "K*eps" : "geometric"},
          {"pass", r.pass},
          {"rows", rows},
          {"note", r.note}};
}

BandCuts band_cuts_for(const EvalConfig& e, std::size_t H, std::size_t W) {
  if (e.band_k1 == 0.0 && e.band_k2 == 0.0) return default_band_cuts(H, W);
  return {e.band_k1, e.band_k2};
}

BoundCheckOptions bound_options(const BoundCheckConfig& b, std::uint64_t seed) {
  BoundCheckOptions o;
  o.lipschitz_pairs = b.lipschitz_pairs;
  o.perturbation = b.perturbation;
  o.tol = b.tol;
  o.seed = seed;
  return o;
}

}  // namespace fino
