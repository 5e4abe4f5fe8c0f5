#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <variant>

#include "fino/commands.hpp"
#include "fino/config.hpp"
#include "fino/error.hpp"
#include "fino/io.hpp"

namespace py = pybind11;
using namespace fino;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor<double>& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Tensor<double> from_numpy(const Array& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor<double>(std::move(s), std::vector<double>(a.data(), a.data() + a.size()));
}

json dataset_meta(const Dataset& ds) {
  return {{"pde", pde_to_json(ds.spec)}, {"grid", grid_to_json(ds.grid)}, {"dt_data", ds.dt_data}, {"seed", ds.seed}};
}

CommandOptions options(std::optional<std::uint64_t> seed, std::size_t threads,
                       std::optional<std::filesystem::path> config) {
  CommandOptions o;
  o.seed = seed;
  o.threads = threads;
  o.config = std::move(config);
  return o;
}

template <typename M>
struct scalar_of;
template <typename T>
struct scalar_of<FinoModel<T>> {
  using type = T;
};

/// Checkpointed model in its compute precision.
class LoadedModel {
 public:
  explicit LoadedModel(const std::filesystem::path& path) : ck_(load_checkpoint(path)), model_(build(ck_)) {}

  Array forward(const Array& x) const {
    const Tensor<double> in = from_numpy(x);
    return std::visit(
        [&]<typename M>(const M& m) {
          using T = typename scalar_of<M>::type;
          Tensor<T> xt(in.shape());
          for (std::size_t i = 0; i < in.size(); ++i) xt[i] = static_cast<T>(in[i]);
          const Var<T> y = m.forward(nullptr, Var<T>(std::move(xt)));
          const Tensor<T>& yv = y.value();
          Tensor<double> out(yv.shape());
          for (std::size_t i = 0; i < yv.size(); ++i) out[i] = static_cast<double>(yv[i]);
          return to_numpy(out);
        },
        model_);
  }

  std::string config_json() const { return model_config_to_json(ck_.model).dump(); }
  std::string train_json() const { return train_config_to_json(ck_.train).dump(); }
  std::string metrics_json() const { return ck_.metrics.dump(); }
  std::size_t parameter_count() const {
    return std::visit([](const auto& m) { return m.parameter_count(); }, model_);
  }

 private:
  using Variant = std::variant<FinoModel<float>, FinoModel<double>>;

  static Variant build(const Checkpoint& ck) {
    if (ck.data.value("compute_dtype", std::string("float32")) == "float64") return model_from_checkpoint<double>(ck);
    return model_from_checkpoint<float>(ck);
  }

  Checkpoint ck_;
  Variant model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the fino package.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<NumericalError>(m, "NumericalError", base);
  py::register_exception<AutodiffError>(m, "AutodiffError", base);

  m.def("generate", [](const std::filesystem::path& config, const std::filesystem::path& out,
                       std::optional<std::uint64_t> seed, std::size_t threads) {
    const GenerateResult r = cmd_generate(config, out, options(seed, threads, std::nullopt));
    return py::dict(py::arg("sha256") = r.sha256, py::arg("payload_bytes") = r.payload_bytes);
  }, py::arg("config"), py::arg("out"), py::arg("seed") = py::none(), py::arg("threads") = 1);

  m.def("train", [](const std::filesystem::path& config, const std::filesystem::path& data,
                    const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
    TrainSummary s;
    {
      py::gil_scoped_release release;
      s = cmd_train(config, data, out, options(seed, 1, std::nullopt));
    }
    return py::dict(py::arg("best_epoch") = s.best_epoch, py::arg("best_l_full") = s.best_l_full,
                    py::arg("val_nrmse") = s.val_nrmse, py::arg("persistence_nrmse") = s.persistence_nrmse);
  }, py::arg("config"), py::arg("data"), py::arg("out"), py::arg("seed") = py::none());

  m.def("evaluate", [](const std::filesystem::path& ckpt, const std::filesystem::path& data,
                       const std::filesystem::path& out, std::optional<std::filesystem::path> config) {
    return metrics_to_json(cmd_eval(ckpt, data, out, options(std::nullopt, 1, std::move(config)))).dump();
  }, py::arg("ckpt"), py::arg("data"), py::arg("out"), py::arg("config") = py::none());

  m.def("rollout", [](const std::filesystem::path& ckpt, const std::filesystem::path& data, std::size_t traj,
                      std::size_t steps, const std::filesystem::path& out) {
    return cmd_rollout(ckpt, data, traj, steps, out, {});
  }, py::arg("ckpt"), py::arg("data"), py::arg("traj"), py::arg("steps"), py::arg("out"));

  m.def("bound_check", [](const std::filesystem::path& ckpt, const std::filesystem::path& data, std::size_t k_steps,
                          const std::filesystem::path& out) {
    return bound_report_to_json(cmd_bound_check(ckpt, data, k_steps, out, {})).dump();
  }, py::arg("ckpt"), py::arg("data"), py::arg("k_steps"), py::arg("out"));

  m.def("load_dataset", [](const std::filesystem::path& path) {
    const Dataset ds = fino::load_dataset(path);
    return py::make_tuple(to_numpy(ds.frames), dataset_meta(ds).dump());
  }, py::arg("path"));

  m.def("dataset_from_config", [](const std::string& config_json, std::size_t threads) {
    RunConfig cfg = run_config_from_json(json::parse(config_json));
    resolve(cfg);
    const DataConfig& d = cfg.data;
    const Dataset ds =
        generate_dataset(make_pde(d), d.n_traj, make_grid(d), d.t_frames, d.dt_data, d.seed, threads);
    return py::make_tuple(to_numpy(ds.frames), dataset_meta(ds).dump());
  }, py::arg("config_json"), py::arg("threads") = 1);

  m.def("metrics", [](const Array& pred, const Array& target, double k1, double k2) {
    const Tensor<double> p = from_numpy(pred), t = from_numpy(target);
    if (p.shape().size() != 5) throw ShapeError("metrics expect (n_traj, T, V, H, W) arrays");
    const BandCuts cuts = k1 > 0 ? BandCuts{k1, k2} : default_band_cuts(p.dim(3), p.dim(4));
    return metrics_to_json(compute_metrics(p, t, cuts)).dump();
  }, py::arg("pred"), py::arg("target"), py::arg("k1") = 0.0, py::arg("k2") = 0.0);

  m.def("geometric_bound", &geometric_bound, py::arg("c"), py::arg("eps"), py::arg("k"));

  m.def("sha256", [](const py::bytes& b) {
    const std::string s = b;
    return sha256_hex({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
  }, py::arg("data"));

  py::class_<LoadedModel>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("forward", &LoadedModel::forward, py::arg("x"))
      .def_property_readonly("config_json", &LoadedModel::config_json)
      .def_property_readonly("train_json", &LoadedModel::train_json)
      .def_property_readonly("metrics_json", &LoadedModel::metrics_json)
      .def_property_readonly("parameter_count", &LoadedModel::parameter_count);
}
