// Python bindings for the core operations: dense kernels, the state-space
// layer, the full model forward, fidelity metrics, and the bound calculators.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "memmamba/bench.hpp"
#include "memmamba/fidelity.hpp"
#include "memmamba/model.hpp"
#include "memmamba/numerics.hpp"
#include "memmamba/runconfig.hpp"
#include "memmamba/ssm.hpp"
#include "memmamba/tasks.hpp"
#include "memmamba/theory.hpp"
#include "memmamba/train.hpp"

namespace py = pybind11;
using namespace memmamba;

namespace {

using NpArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from(const NpArray& a) {
  std::vector<std::size_t> shape(static_cast<std::size_t>(a.ndim()));
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.shape(i));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> numpy_from(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.rank());
  for (std::size_t i = 0; i < t.rank(); ++i)
    shape[i] = static_cast<py::ssize_t>(t.dim(i));
  py::array_t<double> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

class PyModel {
 public:
  explicit PyModel(const std::string& config_json) {
    cfg_ = cli::model_config_from_json(nlohmann::json::parse(config_json));
    weights_ = model::init_weights(cfg_);
  }

  py::array_t<double> forward(const std::vector<int>& tokens) {
    auto r = model::model_forward(cfg_, weights_, tokens);
    return numpy_from(r.logits);
  }

  py::dict fidelity(const std::vector<int>& tokens) {
    auto r = model::model_forward(cfg_, weights_, tokens);
    std::vector<model::LayerTrace> traces{std::move(r.trace)};
    auto rep =
        fidelity::fidelity_report(traces, weights_.at("embed"), weights_.at("w_out"));
    py::dict d;
    d["etmf"] = rep.etmf;
    py::dict deltas, gaps;
    for (auto [k, v] : rep.etmf_delta) deltas[py::int_(k)] = v;
    for (auto [k, v] : rep.eclmf) gaps[py::int_(k)] = v;
    d["etmf_delta"] = deltas;
    d["eclmf"] = gaps;
    return d;
  }

  py::dict params() const {
    py::dict d;
    for (std::size_t i = 0; i < weights_.count(); ++i)
      d[py::str(weights_.names[i])] = numpy_from(weights_.values[i]);
    return d;
  }

  void set_param(const std::string& name, const NpArray& value) {
    Tensor t = tensor_from(value);
    Tensor& dst = weights_.at(name);
    if (!t.same_shape(dst)) throw DimensionError("parameter shape mismatch: " + name);
    dst = std::move(t);
  }

  std::string config_json() const { return cli::model_config_to_json(cfg_).dump(); }

 private:
  model::ModelConfig cfg_;
  model::Weights weights_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "memmamba core: selective-SSM sequence model with a note pool, "
            "memory-fidelity metrics, and numerical bound checks";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  m.def("matmul", [](const NpArray& a, const NpArray& b) {
    return numpy_from(matmul(tensor_from(a), tensor_from(b)));
  });
  m.def(
      "softmax",
      [](const NpArray& v, double temperature) {
        return numpy_from(softmax(tensor_from(v), temperature));
      },
      py::arg("v"), py::arg("temperature") = 1.0);
  m.def("cosine_similarity", [](const NpArray& a, const NpArray& b) {
    return cosine_similarity(tensor_from(a), tensor_from(b));
  });
  m.def(
      "ridge_fit",
      [](const NpArray& x, const NpArray& y, double lambda) {
        RidgeSolution s = ridge_fit(tensor_from(x), tensor_from(y), lambda);
        return py::make_tuple(numpy_from(s.w), s.residual_fro);
      },
      py::arg("x"), py::arg("y"), py::arg("lambda_") = 1e-4);
  m.def("block_max_pool", [](const NpArray& h, std::size_t w) {
    return numpy_from(block_max_pool(tensor_from(h), w));
  });
  m.def(
      "reconstruct_broadcast",
      [](const NpArray& s, std::size_t w, std::size_t n_rows) {
        return numpy_from(reconstruct_broadcast(tensor_from(s), w, n_rows));
      },
      py::arg("s"), py::arg("w"), py::arg("n_rows") = 0);
  m.def("operator_norm",
        [](const NpArray& m_) { return operator_norm(tensor_from(m_)); });

  m.def("make_stable_A", [](const NpArray& raw) {
    return numpy_from(ssm::make_stable_A(tensor_from(raw)));
  });
  m.def(
      "ssm_scan",
      [](const NpArray& a_diag, const NpArray& b, const NpArray& c, const NpArray& x,
         const NpArray& h0) {
        ssm::SSMParams p;
        p.a_diag = tensor_from(a_diag);
        p.b_in = tensor_from(b);
        p.c_out = tensor_from(c);
        p.state_dim = p.a_diag.dim(0);
        p.width = p.b_in.dim(1);
        p.validate();
        auto r = ssm::ssm_scan(p, tensor_from(x), tensor_from(h0));
        return py::make_tuple(numpy_from(r.h_rows), numpy_from(r.y_rows));
      },
      py::arg("a_diag"), py::arg("b"), py::arg("c"), py::arg("x"), py::arg("h0"));
  m.def("contribution_bound", &ssm::contribution_bound, py::arg("a_norm"),
        py::arg("b_norm"), py::arg("x_norm"), py::arg("k"));
  m.def("empirical_contribution",
        [](const NpArray& a_diag, const NpArray& b, std::size_t k, const NpArray& probe) {
          ssm::SSMParams p;
          p.a_diag = tensor_from(a_diag);
          p.b_in = tensor_from(b);
          p.state_dim = p.a_diag.dim(0);
          p.width = p.b_in.dim(1);
          p.c_out = Tensor({p.width, p.state_dim});
          return ssm::empirical_contribution(p, k, tensor_from(probe));
        });

  m.def("bibo_bound", &theory::bibo_bound, py::arg("a_norm"), py::arg("b_norm"),
        py::arg("x_bound"), py::arg("alpha"), py::arg("c_bound"));
  m.def(
      "layered_decay",
      [](const std::vector<double>& a_norms, std::size_t tau, double h0_norm) {
        return theory::layered_decay(a_norms, tau, h0_norm);
      },
      py::arg("a_norms"), py::arg("tau"), py::arg("h0_norm"));
  m.def(
      "recall_bounds",
      [](double a_norm, double b_norm, double gamma, double theta, std::size_t k,
         double alpha, double delta) {
        auto r = theory::recall_bounds(a_norm, b_norm, gamma, theta, k, alpha, delta);
        return py::make_tuple(r.mamba_upper, r.csa_lower);
      },
      py::arg("a_norm"), py::arg("b_norm"), py::arg("gamma"), py::arg("theta"),
      py::arg("k"), py::arg("alpha"), py::arg("delta"));
  m.def(
      "equal_budget_lengths",
      [](double compute, double lt, double dt, double lo, double do_) {
        auto r = theory::equal_budget_lengths(compute, lt, dt, lo, do_);
        return py::make_tuple(r.n_attention, r.n_linear);
      },
      py::arg("compute"), py::arg("layers_t"), py::arg("width_t"), py::arg("layers_o"),
      py::arg("width_o"));
  m.def("pooling_error_check", [](const NpArray& h, std::size_t w) {
    auto c = theory::pooling_error_check(tensor_from(h), w);
    py::dict d;
    d["name"] = c.name;
    d["lhs"] = c.lhs;
    d["rhs"] = c.rhs;
    d["holds"] = c.holds;
    d["margin"] = c.margin;
    return d;
  });

  m.def("fit_scaling_exponent",
        [](const std::vector<std::pair<double, double>>& points) {
          return bench::fit_scaling_exponent(points);
        });

  m.def(
      "make_synthetic_corpus",
      [](const std::string& path, std::size_t bytes, std::uint64_t seed) {
        tasks::make_synthetic_corpus(path, bytes, seed);
      },
      py::arg("path"), py::arg("bytes"), py::arg("seed") = 7,
      "write a deterministic English-like byte corpus with long-range entity reuse");

  m.def(
      "gen_passkey",
      [](std::size_t seq_len, std::size_t vocab, std::uint64_t seed) {
        tasks::TaskSample s = tasks::gen_passkey(seq_len, vocab, seed);
        py::dict d;
        d["tokens"] = s.tokens;
        d["target"] = s.targets.back();
        d["passkey_pos"] = s.meta.passkey_pos;
        return d;
      },
      py::arg("seq_len"), py::arg("vocab"), py::arg("seed"));

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("config_json"))
      .def("forward", &PyModel::forward, py::arg("tokens"),
           "logits for a token sequence, shape [n, vocab]")
      .def("fidelity", &PyModel::fidelity, py::arg("tokens"))
      .def("params", &PyModel::params)
      .def("set_param", &PyModel::set_param, py::arg("name"), py::arg("value"))
      .def("config_json", &PyModel::config_json);
}
