#include "fino/commands.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

#include "fino/log.hpp"
#include "fino/plot.hpp"

namespace fino {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::string compute_dtype(const Checkpoint& ck) { return ck.data.value("compute_dtype", std::string("float32")); }

json data_info(const Dataset& ds, const std::string& dtype) {
  return {{"pde", pde_to_json(ds.spec)}, {"grid", grid_to_json(ds.grid)}, {"dt_data", ds.dt_data},
          {"compute_dtype", dtype}};
}

void check_compatible(const Checkpoint& ck, const Dataset& ds) {
  if (!ck.data.contains("grid") || ck.data.at("grid") != grid_to_json(ds.grid))
    throw ConfigError("dataset grid " + grid_to_json(ds.grid).dump() + " does not match the checkpoint grid " +
                      ck.data.value("grid", json()).dump());
  if (ck.model.out_channels != ds.channels()) throw ConfigError("dataset channel count does not match the checkpoint");
}

EvalConfig eval_section(const CommandOptions& opt, BoundCheckConfig* bound = nullptr) {
  if (!opt.config) return {};
  const RunConfig cfg = load_run_config(*opt.config);
  if (bound) *bound = cfg.bound_check;
  return cfg.eval;
}

std::string metrics_csv_row(const std::string& id, const MetricsReport& m) {
  return id + "," + format_double(m.rmse) + "," + format_double(m.nrmse) + "," + format_double(m.max_error) + "," +
         format_double(m.crmse) + "," + format_double(m.frmse_low) + "," + format_double(m.frmse_mid) + "," +
         format_double(m.frmse_high) + "\n";
}

Tensor<double> plane_of(const Tensor<double>& t, std::size_t offset, std::size_t H, std::size_t W) {
  return Tensor<double>({H, W}, std::vector<double>(t.ptr() + offset, t.ptr() + offset + H * W));
}

std::string frame_svg(const std::string& title, const Tensor<double>& truth, const Tensor<double>* pred,
                      const Grid& grid) {
  const std::size_t H = grid.height(), W = grid.width();
  if (grid.dims == 1) {
    std::vector<double> x(W);
    for (std::size_t j = 0; j < W; ++j) x[j] = grid.coord(0, j);
    std::vector<Series> s{{"reference", x, std::vector<double>(truth.ptr(), truth.ptr() + W)}};
    if (pred) s.push_back({"prediction", x, std::vector<double>(pred->ptr(), pred->ptr() + W)});
    return svg_line_plot(title, "x", "u", s);
  }
  return svg_heatmap(title, plane_of(pred ? *pred : truth, 0, H, W));
}

template <typename T>
TrainSummary run_train(const RunConfig& cfg, const Dataset& ds, const fs::path& out_dir) {
  FinoModel<T> model(cfg.model, cfg.train.seed);
  const TrainResult res = train(model, ds, cfg.train, [&](const EpochRecord& r) {
    if (cfg.output.per_epoch_log) {
      std::ostringstream os;
      os << "epoch " << r.epoch << " L_step " << r.l_step << " L_full " << r.l_full;
      log_warn(os.str());
    }
  });

  const Split split = split_trajectories(ds.n_traj(), cfg.train.val_fraction);
  const Dataset val = ds.slice(split.n_train, ds.n_traj());
  const Forecast f = one_step_forecast(model, val, cfg.train.k_hist);
  const Forecast p = persistence_forecast(val, cfg.train.k_hist);
  TrainSummary sum{res.best_epoch, res.best_l_full, nrmse(f.pred, f.target), nrmse(p.pred, p.target)};

  const json metrics = {{"best_epoch", sum.best_epoch},
                        {"best_l_full", sum.best_l_full},
                        {"val_nrmse", sum.val_nrmse},
                        {"persistence_nrmse", sum.persistence_nrmse},
                        {"epochs", cfg.train.epochs}};
  Checkpoint ck = make_checkpoint(model, cfg.train, metrics);
  ck.data = data_info(ds, cfg.dtype);
  save_checkpoint(out_dir / "checkpoint.fnck", ck);

  std::string csv = "epoch,L_step,L_full,wall_seconds\n";
  Series ls{"L_step (train)", {}, {}}, lf{"L_full (validation)", {}, {}};
  for (const auto& r : res.history) {
    csv += std::to_string(r.epoch) + "," + format_double(r.l_step) + "," + format_double(r.l_full) + "," +
           format_double(r.wall_seconds) + "\n";
    ls.x.push_back(static_cast<double>(r.epoch));
    ls.y.push_back(r.l_step);
    lf.x.push_back(static_cast<double>(r.epoch));
    lf.y.push_back(r.l_full);
  }
  write_text_atomic(out_dir / "history.csv", csv);
  if (cfg.output.plots) write_text_atomic(out_dir / "training_curve.svg", svg_line_plot("Training history", "epoch", "loss", {ls, lf}, true));
  return sum;
}

template <typename T>
MetricsReport run_eval(const Checkpoint& ck, const Dataset& ds, const EvalConfig& ec, const fs::path& out_dir) {
  const FinoModel<T> model = model_from_checkpoint<T>(ck);
  const Forecast f = one_step_forecast(model, ds, ck.train.k_hist);
  const BandCuts cuts = band_cuts_for(ec, ds.height(), ds.width());
  const auto per = per_trajectory_metrics(f.pred, f.target, cuts);
  const MetricsReport agg = compute_metrics(f.pred, f.target, cuts);

  std::string csv = "traj_id,rmse,nrmse,max_error,crmse,frmse_low,frmse_mid,frmse_high\n";
  json rows = json::array();
  for (std::size_t i = 0; i < per.size(); ++i) {
    csv += metrics_csv_row(std::to_string(i), per[i]);
    json r = metrics_to_json(per[i]);
    r["traj_id"] = i;
    rows.push_back(r);
  }
  csv += metrics_csv_row("all", agg);
  const json j = {{"mode", "one_step_teacher_forced"},
                  {"k_hist", ck.train.k_hist},
                  {"band_cuts", {cuts.k1, cuts.k2}},
                  {"aggregate", metrics_to_json(agg)},
                  {"per_trajectory", rows}};
  write_text_atomic(out_dir / "metrics.csv", csv);
  write_text_atomic(out_dir / "metrics.json", j.dump(2) + "\n");
  return agg;
}

template <typename T>
std::vector<double> run_rollout(const Checkpoint& ck, const Dataset& ds, std::size_t traj, std::size_t steps,
                                const fs::path& out_dir) {
  const std::size_t K = ck.train.k_hist;
  if (K >= ds.n_frames()) throw ConfigError("trajectory too short for k_hist = " + std::to_string(K));
  const std::size_t avail = ds.n_frames() - K;
  if (steps > avail) {
    log_warn("requested " + std::to_string(steps) + " steps, trajectory allows " + std::to_string(avail) +
             "; truncating");
    steps = avail;
  }
  const Dataset one = ds.slice(traj, traj + 1);
  write_text_atomic(out_dir / "rollout_initial.svg",
                    frame_svg("Trajectory " + std::to_string(traj) + ", initial frame " + std::to_string(K - 1),
                              one.frame(0, K - 1), nullptr, ds.grid));
  std::string csv = "step,rmse\n";
  std::vector<double> errs;
  if (steps > 0) {
    const FinoModel<T> model = model_from_checkpoint<T>(ck);
    const Forecast f = rollout_forecast(model, one, K, steps, 0);
    const std::size_t fs = ds.frame_size();
    for (std::size_t s = 0; s < steps; ++s) {
      const Tensor<double> p({ds.channels(), ds.height(), ds.width()},
                             std::vector<double>(f.pred.ptr() + s * fs, f.pred.ptr() + (s + 1) * fs));
      const Tensor<double> t({ds.channels(), ds.height(), ds.width()},
                             std::vector<double>(f.target.ptr() + s * fs, f.target.ptr() + (s + 1) * fs));
      const double e = rms_distance(p, t);
      errs.push_back(e);
      csv += std::to_string(s + 1) + "," + format_double(e) + "\n";
      char name[64];
      std::snprintf(name, sizeof name, "rollout_step_%03zu.svg", s + 1);
      write_text_atomic(out_dir / name,
                        frame_svg("Trajectory " + std::to_string(traj) + ", step " + std::to_string(s + 1) +
                                      " (frame " + std::to_string(K + s) + ")",
                                  t, &p, ds.grid));
    }
    std::vector<double> x(steps);
    for (std::size_t s = 0; s < steps; ++s) x[s] = static_cast<double>(s);
    write_text_atomic(out_dir / "rollout_error.svg",
                      svg_line_plot("Rollout RMSE", "step", "RMSE", {{"rmse", x, errs}}, false));
  }
  write_text_atomic(out_dir / "rollout.csv", csv);
  return errs;
}

template <typename T>
BoundReport run_bound(const Checkpoint& ck, const Dataset& ds, std::size_t k_steps, const BoundCheckConfig& bc,
                      std::uint64_t seed, const fs::path& out_dir) {
  const FinoModel<T> model = model_from_checkpoint<T>(ck);
  const Split split = split_trajectories(ds.n_traj(), ck.train.val_fraction);
  const Dataset val = ds.slice(split.n_train, ds.n_traj());
  const BoundReport r = model_bound_check(model, val, ck.train.k_hist, k_steps, bound_options(bc, seed));
  write_text_atomic(out_dir / "bound_report.json", bound_report_to_json(r).dump(2) + "\n");
  std::string csv = "k,e_k,bound,pass\n";
  Series e{"measured e_k", {}, {}}, b{"bound", {}, {}};
  for (const auto& row : r.rows) {
    csv += std::to_string(row.k) + "," + format_double(row.e_k) + "," + format_double(row.bound) + "," +
           (row.pass ? "1" : "0") + "\n";
    e.x.push_back(static_cast<double>(row.k));
    e.y.push_back(row.e_k);
    b.x.push_back(static_cast<double>(row.k));
    b.y.push_back(row.bound);
  }
  write_text_atomic(out_dir / "bound.csv", csv);
  write_text_atomic(out_dir / "bound.svg", svg_line_plot("Rollout error against the bound", "K", "RMS error", {e, b}, true));
  return r;
}

}  // namespace

GenerateResult cmd_generate(const fs::path& config, const fs::path& out, const CommandOptions& opt) {
  RunConfig cfg = load_run_config(config);
  if (opt.seed) cfg.data.seed = *opt.seed;
  resolve(cfg);
  const Dataset ds = generate_dataset(make_pde(cfg.data), cfg.data.n_traj, make_grid(cfg.data), cfg.data.t_frames,
                                      cfg.data.dt_data, cfg.data.seed, opt.threads);
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  const Bytes bytes = encode_dataset(ds);
  write_file_atomic(out, bytes);
  fs::path snap = out;
  snap += ".config.json";
  write_text_atomic(snap, to_json(cfg).dump(2) + "\n");
  const Bytes payload = dataset_payload(ds);
  return {sha256_hex(payload), payload.size()};
}

TrainSummary cmd_train(const fs::path& config, const fs::path& data, const fs::path& out_dir,
                       const CommandOptions& opt) {
  RunConfig cfg = load_run_config(config);
  if (opt.seed) {
    cfg.data.seed = *opt.seed;
    cfg.train.seed = *opt.seed;
  }
  resolve(cfg);
  const Dataset ds = load_dataset(data);
  if (pde_name(ds.spec) != cfg.data.pde)
    throw ConfigError("dataset holds " + pde_name(ds.spec) + " but the config describes " + cfg.data.pde);
  if (ds.grid.dims != cfg.model.spatial_dims) throw ConfigError("dataset dimensionality differs from the config");
  ensure_dir(out_dir);
  write_text_atomic(out_dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
  return cfg.dtype == "float64" ? run_train<double>(cfg, ds, out_dir) : run_train<float>(cfg, ds, out_dir);
}

MetricsReport cmd_eval(const fs::path& ckpt, const fs::path& data, const fs::path& out_dir,
                       const CommandOptions& opt) {
  const EvalConfig ec = eval_section(opt);
  const Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  check_compatible(ck, ds);
  ensure_dir(out_dir);
  write_text_atomic(out_dir / "resolved_config.json",
                    json({{"command", "eval"},
                          {"model", model_config_to_json(ck.model)},
                          {"train", train_config_to_json(ck.train)},
                          {"eval", {{"band_k1", ec.band_k1}, {"band_k2", ec.band_k2}, {"rollout_steps", ec.rollout_steps}}}})
                            .dump(2) +
                        "\n");
  return compute_dtype(ck) == "float64" ? run_eval<double>(ck, ds, ec, out_dir) : run_eval<float>(ck, ds, ec, out_dir);
}

std::vector<double> cmd_rollout(const fs::path& ckpt, const fs::path& data, std::size_t traj_id, std::size_t steps,
                                const fs::path& out_dir, const CommandOptions& opt) {
  if (opt.config) eval_section(opt);  // validates the file when one is given
  const Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  check_compatible(ck, ds);
  if (traj_id >= ds.n_traj())
    throw ConfigError("traj " + std::to_string(traj_id) + " out of range; dataset has " + std::to_string(ds.n_traj()));
  ensure_dir(out_dir);
  write_text_atomic(out_dir / "resolved_config.json",
                    json({{"command", "rollout"}, {"traj", traj_id}, {"steps", steps}, {"model", model_config_to_json(ck.model)},
                          {"train", train_config_to_json(ck.train)}})
                            .dump(2) +
                        "\n");
  return compute_dtype(ck) == "float64" ? run_rollout<double>(ck, ds, traj_id, steps, out_dir)
                                        : run_rollout<float>(ck, ds, traj_id, steps, out_dir);
}

BoundReport cmd_bound_check(const fs::path& ckpt, const fs::path& data, std::size_t k_steps, const fs::path& out_dir,
                            const CommandOptions& opt) {
  BoundCheckConfig bc;
  eval_section(opt, &bc);
  if (k_steps < 1) throw ConfigError("--k-steps must be at least 1");
  const Checkpoint ck = load_checkpoint(ckpt);
  const Dataset ds = load_dataset(data);
  check_compatible(ck, ds);
  ensure_dir(out_dir);
  const std::uint64_t seed = opt.seed.value_or(ck.train.seed);
  write_text_atomic(out_dir / "resolved_config.json",
                    json({{"command", "bound-check"},
                          {"k_steps", k_steps},
                          {"seed", seed},
                          {"bound_check",
                           {{"k_steps", k_steps},
                            {"lipschitz_pairs", bc.lipschitz_pairs},
                            {"perturbation", bc.perturbation},
                            {"tol", bc.tol}}},
                          {"model", model_config_to_json(ck.model)},
                          {"train", train_config_to_json(ck.train)}})
                            .dump(2) +
                        "\n");
  return compute_dtype(ck) == "float64" ? run_bound<double>(ck, ds, k_steps, bc, seed, out_dir)
                                        : run_bound<float>(ck, ds, k_steps, bc, seed, out_dir);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  return 1;
}

}  // namespace fino
