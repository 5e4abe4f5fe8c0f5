// fino: dataset generation, training, evaluation, rollout plots and
// error-bound checks from the command line.

#include <CLI11.hpp>

#include <iostream>

#include "fino/commands.hpp"
#include "fino/log.hpp"

namespace {

int run(int argc, char** argv) {
  CLI::App app{"FINO neural operator toolkit"};
  app.require_subcommand(1);

  fino::CommandOptions opt;
  std::uint64_t seed = 0;
  std::string config, data, out, ckpt;
  std::size_t traj = 0, steps = 0, k_steps = 20;
  bool verbose = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Seed overriding the config");
    sub->add_option("--threads", opt.threads, "Worker threads (1 keeps runs bitwise reproducible)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", verbose, "Log progress to stderr");
  };

  auto* gen = app.add_subcommand("generate", "Generate a dataset file");
  gen->add_option("--config", config, "Run config JSON")->required();
  gen->add_option("--out", out, "Output dataset path")->required();
  common(gen);

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--config", config, "Run config JSON")->required();
  tr->add_option("--data", data, "Dataset file")->required();
  tr->add_option("--out", out, "Output directory")->required();
  common(tr);

  auto* ev = app.add_subcommand("eval", "One-step metrics of a checkpoint on a dataset");
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  ev->add_option("--data", data, "Dataset file")->required();
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--config", config, "Optional run config (eval section)");
  common(ev);

  auto* ro = app.add_subcommand("rollout", "Free rollout plots and per-step error of one trajectory");
  ro->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  ro->add_option("--data", data, "Dataset file")->required();
  ro->add_option("--traj", traj, "Trajectory index")->required();
  ro->add_option("--steps", steps, "Rollout steps")->required();
  ro->add_option("--out", out, "Output directory")->required();
  ro->add_option("--config", config, "Optional run config");
  common(ro);

  auto* bc = app.add_subcommand("bound-check", "Compare rollout error with the local-to-global bound");
  bc->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  bc->add_option("--data", data, "Dataset file")->required();
  bc->add_option("--k-steps", k_steps, "Largest rollout length K")->check(CLI::PositiveNumber);
  bc->add_option("--out", out, "Output directory")->required();
  bc->add_option("--config", config, "Optional run config (bound_check section)");
  common(bc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (verbose) fino::log_level() = fino::LogLevel::Info;
  for (auto* sub : {gen, tr, ev, ro, bc})
    if (sub->count("--seed")) opt.seed = seed;
  if (!config.empty()) opt.config = config;

  if (*gen) {
    const auto r = fino::cmd_generate(config, out, opt);
    std::cout << "wrote " << out << " (" << r.payload_bytes << " payload bytes)\n"
              << "sha256 " << r.sha256 << '\n';
  } else if (*tr) {
    opt.config.reset();
    const auto s = fino::cmd_train(config, data, out, opt);
    std::cout << "best epoch " << s.best_epoch << ", validation L_full " << s.best_l_full << '\n'
              << "validation nRMSE " << s.val_nrmse << " (persistence " << s.persistence_nrmse << ")\n";
  } else if (*ev) {
    const auto m = fino::cmd_eval(ckpt, data, out, opt);
    std::cout << "rmse " << m.rmse << " nrmse " << m.nrmse << " max_error " << m.max_error << " crmse " << m.crmse
              << '\n';
  } else if (*ro) {
    const auto errs = fino::cmd_rollout(ckpt, data, traj, steps, out, opt);
    std::cout << "rolled out " << errs.size() << " steps";
    if (!errs.empty()) std::cout << ", final rmse " << errs.back();
    std::cout << '\n';
  } else if (*bc) {
    const auto r = fino::cmd_bound_check(ckpt, data, k_steps, out, opt);
    std::cout << "C_hat " << r.c_hat << " eps_hat " << r.eps_hat << " K " << r.k_steps << ": "
              << (r.pass ? "bound holds" : "bound violated") << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return fino::exit_code_for(e);
  }
}
