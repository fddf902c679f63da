#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "treebp/checkpoint.hpp"
#include "treebp/grad.hpp"
#include "treebp/gradcheck.hpp"
#include "treebp/lenet5.hpp"
#include "treebp/optim.hpp"
#include "treebp/plan.hpp"
#include "treebp/routes.hpp"
#include "treebp/sparsity.hpp"
#include "treebp/tree3.hpp"

namespace py = pybind11;
using namespace treebp;

namespace {

py::array_t<float> to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> arr(shape);
  std::memcpy(arr.mutable_data(), t.data(), t.size() * sizeof(float));
  return arr;
}

Tensor<float> from_array(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<std::size_t> shape(std::size_t(arr.ndim()));
  for (py::ssize_t d = 0; d < arr.ndim(); ++d) shape[std::size_t(d)] = std::size_t(arr.shape(d));
  Tensor<float> t(shape);
  std::memcpy(t.data(), arr.data(), t.size() * sizeof(float));
  return t;
}

py::dict grads_dict(double loss, const std::array<ZeroCount, 3>& counts) {
  py::dict d;
  d["loss"] = loss;
  py::list fracs;
  for (const auto& c : counts) fracs.append(c.fraction());
  d["zero_fracs"] = std::move(fracs);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "tree-wired and feedforward classifiers: core operations";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::enum_<Geometry>(m, "Geometry")
      .value("CIFAR", Geometry::CIFAR)
      .value("MNIST", Geometry::MNIST);
  py::enum_<Activation>(m, "Activation")
      .value("ReLU", Activation::ReLU)
      .value("Sigmoid", Activation::Sigmoid);

  py::class_<Tree3Config>(m, "Tree3Config")
      .def(py::init<>())
      .def_readwrite("k", &Tree3Config::k)
      .def_readwrite("m", &Tree3Config::m)
      .def_readwrite("activation", &Tree3Config::activation)
      .def_readwrite("geometry", &Tree3Config::geometry)
      .def_readwrite("outputs", &Tree3Config::outputs)
      .def_property_readonly("channels", &Tree3Config::channels)
      .def_property_readonly("conv_hw", &Tree3Config::conv_hw)
      .def_property_readonly("pool_hw", &Tree3Config::pool_hw)
      .def_property_readonly("rects", &Tree3Config::rects)
      .def_property_readonly("fc_rows", &Tree3Config::fc_rows)
      .def("validate", &Tree3Config::validate);

  py::class_<LeNet5Config>(m, "LeNet5Config")
      .def(py::init<>())
      .def_readwrite("c1", &LeNet5Config::c1)
      .def_readwrite("c2", &LeNet5Config::c2)
      .def_readwrite("f1", &LeNet5Config::f1)
      .def_readwrite("f2", &LeNet5Config::f2)
      .def_readwrite("activation", &LeNet5Config::activation)
      .def_readwrite("bias", &LeNet5Config::bias)
      .def("validate", &LeNet5Config::validate);

  py::class_<Tree3Params<float>>(m, "Tree3Params")
      .def(py::init<>())
      .def_property(
          "w_conv", [](const Tree3Params<float>& p) { return to_array(p.w_conv); },
          [](Tree3Params<float>& p, const py::array_t<float>& a) {
            p.w_conv = from_array(a);
          })
      .def_property(
          "w_tree", [](const Tree3Params<float>& p) { return to_array(p.w_tree); },
          [](Tree3Params<float>& p, const py::array_t<float>& a) {
            p.w_tree = from_array(a);
          })
      .def_property(
          "w_fc", [](const Tree3Params<float>& p) { return to_array(p.w_fc); },
          [](Tree3Params<float>& p, const py::array_t<float>& a) {
            p.w_fc = from_array(a);
          });

  py::class_<LeNet5Params<float>>(m, "LeNet5Params")
      .def(py::init<>())
      .def("tensors",
           [](const LeNet5Params<float>& p) {
             py::list out;
             for (const auto* t : p.tensors()) out.append(to_array(*t));
             return out;
           })
      .def("set_tensors", [](LeNet5Params<float>& p, const py::list& arrays) {
        auto ts = p.tensors();
        if (py::len(arrays) != ts.size()) {
          throw ShapeError("set_tensors: expected " + std::to_string(ts.size()) +
                           " arrays");
        }
        for (std::size_t i = 0; i < ts.size(); ++i) {
          *ts[i] = from_array(arrays[i].cast<py::array_t<float>>());
        }
      });

  m.def("tree3_init", [](const Tree3Config& cfg, std::uint64_t seed) {
    return init_tree3<float>(cfg, seed);
  });
  m.def("tree3_zero", [](const Tree3Config& cfg) { return zero_tree3_params<float>(cfg); });
  m.def("lenet5_init", [](const LeNet5Config& cfg, std::uint64_t seed) {
    return init_lenet5<float>(cfg, seed);
  });
  m.def("lenet5_zero",
        [](const LeNet5Config& cfg) { return zero_lenet5_params<float>(cfg); });

  m.def("tree3_forward", [](const Tree3Params<float>& p, const Tree3Config& cfg,
                            const py::array_t<float>& image) {
    const auto trace = tree3_forward(p, cfg, from_array(image));
    py::dict d;
    d["conv_pre"] = to_array(trace.conv_pre);
    d["pool_out"] = to_array(trace.pool.output);
    d["tree_pre"] = to_array(trace.tree_pre);
    d["tree_out"] = to_array(trace.tree_out);
    d["logits"] = to_array(trace.logits);
    return d;
  });

  m.def("lenet5_forward", [](const LeNet5Params<float>& p, const LeNet5Config& cfg,
                             const py::array_t<float>& image) {
    const auto trace = lenet5_forward(p, cfg, from_array(image));
    py::dict d;
    d["pool1"] = to_array(trace.pool1.output);
    d["pool2"] = to_array(trace.pool2.output);
    d["f1_out"] = to_array(trace.f1_out);
    d["f2_out"] = to_array(trace.f2_out);
    d["logits"] = to_array(trace.logits);
    return d;
  });

  m.def(
      "tree3_backward",
      [](const Tree3Params<float>& p, const Tree3Config& cfg,
         const py::array_t<float>& image, int label, bool pruned) {
        const auto input = from_array(image);
        const auto trace = tree3_forward(p, cfg, input);
        const auto grads = pruned ? backward_pruned_tree3(p, cfg, trace, label)
                                  : backward_reference(p, cfg, trace, label);
        py::dict d = grads_dict(grads.loss, grads.zero_counts);
        d["grads"] = grads.g;
        return d;
      },
      py::arg("params"), py::arg("config"), py::arg("image"), py::arg("label"),
      py::arg("pruned") = false);

  m.def("lenet5_backward", [](const LeNet5Params<float>& p, const LeNet5Config& cfg,
                              const py::array_t<float>& image, int label) {
    const auto trace = lenet5_forward(p, cfg, from_array(image));
    const auto grads = backward_reference(p, cfg, trace, label);
    py::dict d;
    d["loss"] = grads.loss;
    py::list fracs;
    for (const auto& c : grads.zero_counts) fracs.append(c.fraction());
    d["zero_fracs"] = std::move(fracs);
    d["grads"] = grads.g;
    return d;
  });

  m.def("predict_tree3", [](const Tree3Params<float>& p, const Tree3Config& cfg,
                            const py::array_t<float>& image) {
    const auto trace = tree3_forward(p, cfg, from_array(image));
    std::size_t best = 0;
    for (std::size_t o = 1; o < trace.logits.size(); ++o) {
      if (trace.logits[o] > trace.logits[best]) best = o;
    }
    return int(best);
  });

  m.def(
      "sgd_nesterov_step",
      [](Tree3Params<float>& params, const Tree3Params<float>& grads,
         Tree3Params<float>& velocity, double eta, double mu, double alpha) {
        HyperParams hp;
        hp.eta = eta;
        hp.mu = mu;
        hp.alpha = alpha;
        sgd_nesterov_step(params, grads, velocity, hp);
      },
      py::arg("params"), py::arg("grads"), py::arg("velocity"), py::arg("eta"),
      py::arg("mu") = 0.0, py::arg("alpha") = 0.0);

  m.def(
      "sgd_nesterov_step",
      [](LeNet5Params<float>& params, const LeNet5Params<float>& grads,
         LeNet5Params<float>& velocity, double eta, double mu, double alpha) {
        HyperParams hp;
        hp.eta = eta;
        hp.mu = mu;
        hp.alpha = alpha;
        sgd_nesterov_step(params, grads, velocity, hp);
      },
      py::arg("params"), py::arg("grads"), py::arg("velocity"), py::arg("eta"),
      py::arg("mu") = 0.0, py::arg("alpha") = 0.0);

  m.def("threshold_gradients", [](Tree3Params<float>& grads, double theta) {
    return threshold_gradients(grads, theta);
  });

  m.def("fd_check_tree3",
        [](const Tree3Config& cfg, std::uint64_t seed, double eps, bool pruned) {
          const auto report = fd_check_tree3(cfg, seed, eps, 0, pruned);
          py::dict d;
          d["max_rel"] = report.max_rel;
          d["mean_rel"] = report.mean_rel;
          d["checked"] = report.checked;
          return d;
        },
        py::arg("config"), py::arg("seed") = 1, py::arg("eps") = 1e-5,
        py::arg("pruned") = false);

  m.def("count_routes_tree3", &count_routes_tree3);
  m.def("count_routes_lenet5",
        [](const LeNet5Config& cfg) { return count_routes_lenet5(cfg); });
  m.def("count_gradient_instances_tree3",
        [](const Tree3Config& cfg) { return count_gradient_instances_tree3(cfg); });

  m.def("plan_names", [] {
    std::vector<std::string> names;
    for (const auto& plan : builtin_plans()) names.push_back(plan.name);
    return names;
  });
  m.def("plan_json", [](const std::string& name) {
    return find_plan(name).to_json_string();
  });

  m.def("save_tree3_checkpoint", [](const std::string& path,
                                    const Tree3Params<float>& params,
                                    const Tree3Config& cfg) {
    save_checkpoint(path, params, cfg);
  });
  m.def("load_tree3_checkpoint", [](const std::string& path) {
    auto [params, cfg] = load_tree3_checkpoint(path);
    return py::make_tuple(params, cfg);
  });
}
