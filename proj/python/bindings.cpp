#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mkgcn/affinity.hpp"
#include "mkgcn/cli.hpp"
#include "mkgcn/error.hpp"
#include "mkgcn/experiments.hpp"
#include "mkgcn/version.hpp"

namespace py = pybind11;
using namespace mkgcn;

namespace {

Aggregator parse_aggregator(const std::string& name) {
  if (name == "concat") return Aggregator::concat;
  if (name == "maxpool") return Aggregator::maxpool;
  throw ConfigError("aggregator must be 'concat' or 'maxpool', got '" + name + "'");
}

Head parse_head(const std::string& name) {
  if (name == "dense") return Head::dense;
  if (name == "direct") return Head::direct;
  throw ConfigError("head must be 'dense' or 'direct', got '" + name + "'");
}

ScaledLaplacian scaled(const Matrix& adjacency) {
  return rescale_laplacian(build_laplacian(SymmetricMatrix::from_dense(adjacency)));
}

py::dict graph_dict(const PopulationGraph& g) {
  py::dict d;
  d["adjacency"] = g.adjacency().to_dense();
  d["features"] = g.features();
  d["labels"] = g.labels();
  d["train_mask"] = g.train_mask();
  d["test_mask"] = g.test_mask();
  return d;
}

PopulationGraph graph_of(const Matrix& adjacency, const Matrix& features, const std::vector<int>& labels) {
  NodeMask train(labels.size(), true), test(labels.size(), false);
  return PopulationGraph(SymmetricMatrix::from_dense(adjacency), features, labels, train, test);
}

py::dict result_dict(const ExperimentResult& r) {
  py::dict d;
  d["mean"] = r.mean;
  d["sd"] = r.sd;
  d["mean_epochs"] = r.mean_epochs;
  d["failed_folds"] = r.failed_folds;
  d["accuracies"] = r.per_fold_accuracies();
  d["fingerprint"] = hex64(r.fingerprint);
  return d;
}

}  // namespace

PYBIND11_MODULE(_mkgcn, m) {
  m.doc() = "Multi-order Chebyshev graph convolution engine";
  m.attr("__version__") = kVersion;

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<ShapeMismatch>(m, "ShapeMismatch", error.ptr());
  py::register_exception<InvariantViolation>(m, "InvariantViolation", error.ptr());

  m.def(
      "simulate",
      [](int n_per_class, double v1, double v2, double beta, bool random_features, std::uint64_t seed) {
        SimConfig c;
        c.n_per_class = n_per_class;
        c.variances[0] = v1;
        c.variances[1] = v2;
        c.beta = beta;
        c.feature_mode = random_features ? FeatureMode::random : FeatureMode::discriminative;
        c.seed = seed;
        const auto d = generate_with_positions(c);
        py::dict out = graph_dict(d.graph);
        out["positions"] = d.positions;
        return out;
      },
      py::arg("n_per_class") = 300, py::arg("v1") = 0.5, py::arg("v2") = 0.1, py::arg("beta") = 0.5,
      py::arg("random_features") = false, py::arg("seed") = 0,
      "Two Gaussian clusters joined by a distance-threshold graph.");

  m.def(
      "laplacian",
      [](const Matrix& adjacency) { return build_laplacian(SymmetricMatrix::from_dense(adjacency)).matrix.to_dense(); },
      py::arg("adjacency"), "Symmetric normalized Laplacian I - D^-1/2 A D^-1/2.");

  m.def(
      "chebyshev_basis", [](const Matrix& adjacency, const Matrix& x, int k) { return chebyshev_apply(scaled(adjacency), x, k); },
      py::arg("adjacency"), py::arg("x"), py::arg("k"), "T_0(L~)x .. T_k(L~)x with L~ = L - I.");

  m.def(
      "khop_reach",
      [](const Matrix& adjacency, int k) {
        return khop_reach(build_laplacian(SymmetricMatrix::from_dense(adjacency)), k).cast<int>().matrix().eval();
      },
      py::arg("adjacency"), py::arg("k"), "1 where node j lies within k hops of node i.");

  m.def(
      "affinity",
      [](const Matrix& features, const std::map<std::string, std::vector<double>>& meta,
         const std::map<std::string, double>& betas, const std::string& mode, double sigma) {
        std::vector<MetaElement> elements;
        for (const auto& [name, values] : meta) {
          const auto beta = betas.find(name);
          if (beta == betas.end()) throw ConfigError("no beta for meta element '" + name + "'");
          elements.push_back({name, values, beta->second});
        }
        SimilarityKernel kernel;
        kernel.sigma = sigma > 0.0 ? sigma : mean_pairwise_distance(features, kernel.distance);
        AffinityMode m = AffinityMode::mixed();
        if (mode == "mixed-nosim") {
          m = AffinityMode::mixed_nosim();
        } else if (mode != "mixed") {
          std::size_t index = 0;
          while (index < elements.size() && elements[index].name != mode) ++index;
          if (index == elements.size()) throw ConfigError("mode must be 'mixed', 'mixed-nosim' or an element name");
          m = AffinityMode::single(index);
        }
        return build_affinity(elements, features, kernel, m).to_dense();
      },
      py::arg("features"), py::arg("meta"), py::arg("betas"), py::arg("mode") = "mixed", py::arg("sigma") = 0.0,
      "Affinity adjacency from meta-data columns and feature similarity.");

  m.def(
      "predict",
      [](const Matrix& adjacency, const Matrix& features, int num_classes, const std::vector<std::vector<int>>& orders,
         Index width, const std::string& aggregator, const std::string& head, std::uint64_t seed) {
        const auto arch = make_architecture(features.cols(), num_classes, orders, width, parse_aggregator(aggregator),
                                            parse_head(head));
        return network_predict(Network::initialize(arch, seed), scaled(adjacency), features);
      },
      py::arg("adjacency"), py::arg("features"), py::arg("num_classes"), py::arg("orders"), py::arg("width") = 16,
      py::arg("aggregator") = "concat", py::arg("head") = "dense", py::arg("seed") = 0,
      "Class scores of a freshly initialized network.");

  m.def(
      "cross_validate",
      [](const Matrix& adjacency, const Matrix& features, const std::vector<int>& labels,
         const std::vector<std::vector<int>>& orders, Index width, const std::string& aggregator, int epochs,
         double lr, int early_stop, int folds, std::uint64_t seed, int threads) {
        const auto data = make_dataset(graph_of(adjacency, features, labels));
        const auto arch = make_architecture(features.cols(), data.graph.num_classes(), orders, width,
                                            parse_aggregator(aggregator));
        TrainConfig t;
        t.epochs = epochs;
        t.learning_rate = lr;
        t.early_stop_window = early_stop;
        CvConfig cv{folds, seed, threads};
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_cv(data, arch, t, cv);
        }
        return result_dict(r);
      },
      py::arg("adjacency"), py::arg("features"), py::arg("labels"), py::arg("orders"), py::arg("width") = 16,
      py::arg("aggregator") = "concat", py::arg("epochs") = 200, py::arg("lr") = 0.2, py::arg("early_stop") = 0,
      py::arg("folds") = 10, py::arg("seed") = 0, py::arg("threads") = 1,
      "Stratified k-fold transductive training; accuracies are percentages.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one mkgcn command; returns (exit code, stdout, stderr).");
}
