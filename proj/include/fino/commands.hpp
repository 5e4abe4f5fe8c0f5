#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "fino/io.hpp"

namespace fino {

namespace fs = std::filesystem;

/// Options shared by every subcommand.
struct CommandOptions {
  std::optional<std::uint64_t> seed;  // overrides data.seed and train.seed
  std::size_t threads = 1;
  std::optional<fs::path> config;  // eval/rollout/bound-check read only the eval and bound_check sections
};

struct GenerateResult {
  std::string sha256;  // of the float32 payload
  std::size_t payload_bytes = 0;
};

/// Writes the dataset to `out` and a resolved config next to it (`out` + ".config.json").
GenerateResult cmd_generate(const fs::path& config, const fs::path& out, const CommandOptions& opt);

struct TrainSummary {
  std::size_t best_epoch = 0;
  double best_l_full = 0;
  double val_nrmse = 0;
  double persistence_nrmse = 0;
};

/// out_dir/{checkpoint.fnck, history.csv, resolved_config.json, training_curve.svg}.
TrainSummary cmd_train(const fs::path& config, const fs::path& data, const fs::path& out_dir,
                       const CommandOptions& opt);

/// Teacher-forced one-step metrics per trajectory plus an aggregate row:
/// out_dir/{metrics.csv, metrics.json, resolved_config.json}.
MetricsReport cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out_dir,
                       const CommandOptions& opt);

/// Free rollout of one trajectory: out_dir/rollout.csv (step, rmse),
/// rollout_initial.svg and one rollout_step_NNN.svg per predicted step.
/// Returns the per-step RMSE.
std::vector<double> cmd_rollout(const fs::path& ckpt, const fs::path& data, std::size_t traj_id, std::size_t steps,
                                const fs::path& out_dir, const CommandOptions& opt);

/// out_dir/{bound_report.json, bound.csv, bound.svg}, evaluated on the
/// validation split recorded in the checkpoint.
BoundReport cmd_bound_check(const fs::path& ckpt, const fs::path& data, std::size_t k_steps, const fs::path& out_dir,
                            const CommandOptions& opt);

/// Exit code for an exception: 2 config, 3 I/O, 4 numerical, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace fino
