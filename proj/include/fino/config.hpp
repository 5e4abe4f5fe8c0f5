#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "fino/bound.hpp"
#include "fino/evaluation.hpp"
#include "fino/model.hpp"
#include "fino/training.hpp"

namespace fino {

using json = nlohmann::json;

/// Dataset generation settings ("data" section).
struct DataConfig {
  std::string pde = "advection1d";  // advection1d | diffusion_reaction1d | diffusion_reaction2d
  double beta = 4.0;
  double nu = 0.5;
  double rho = 1.0;
  double du = 1e-3;
  double dv = 5e-3;
  double k = 5e-3;
  std::size_t grid_points = 64;  // per axis
  double domain_length = 0.0;    // 0: 1 for 1-D problems, 2 (on [-1, 1]^2) for 2-D
  std::size_t n_traj = 500;
  std::size_t t_frames = 40;
  double dt_data = 1.0 / 256.0;
  std::uint64_t seed = 0;

  bool operator==(const DataConfig&) const = default;
};

/// "eval" section. Zero band cuts pick default_band_cuts for the grid.
struct EvalConfig {
  double band_k1 = 0.0;
  double band_k2 = 0.0;
  std::size_t rollout_steps = 20;

  bool operator==(const EvalConfig&) const = default;
};

/// "bound_check" section.
struct BoundCheckConfig {
  std::size_t k_steps = 20;
  std::size_t lipschitz_pairs = 128;
  double perturbation = 1e-2;
  double tol = 1e-6;

  bool operator==(const BoundCheckConfig&) const = default;
};

/// "output" section.
struct OutputConfig {
  bool plots = true;
  bool per_epoch_log = false;

  bool operator==(const OutputConfig&) const = default;
};

/// Full run description. The model's channel counts and spatial dims are
/// derived from the data section and train.k_hist.
struct RunConfig {
  DataConfig data;
  ModelConfig model;
  std::string dtype = "float32";  // compute precision: float32 | float64
  TrainConfig train;
  EvalConfig eval;
  BoundCheckConfig bound_check;
  OutputConfig output;

  bool operator==(const RunConfig&) const = default;
};

PdeSpec make_pde(const DataConfig& d);
Grid make_grid(const DataConfig& d);

/// Fills derived model fields and validates every section.
void resolve(RunConfig& cfg);

/// Strict parse: unknown keys and wrong types raise ConfigError.
RunConfig run_config_from_json(const json& j);
json to_json(const RunConfig& cfg);
/// Reads and resolves a config file; unreadable files raise IoError.
RunConfig load_run_config(const std::filesystem::path& path);

json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const json& j);
json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j);
json pde_to_json(const PdeSpec& spec);
PdeSpec pde_from_json(const json& j);
json grid_to_json(const Grid& g);
Grid grid_from_json(const json& j);

json metrics_to_json(const MetricsReport& m);
json bound_report_to_json(const BoundReport& r);

BandCuts band_cuts_for(const EvalConfig& e, std::size_t H, std::size_t W);
BoundCheckOptions bound_options(const BoundCheckConfig& b, std::uint64_t seed);

}  // namespace fino
