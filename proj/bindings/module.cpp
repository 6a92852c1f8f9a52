#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "pfl/experiment.hpp"
#include "pfl/geometry.hpp"

namespace py = pybind11;

namespace {

py::array_t<double> samples_array(const pfl::Tensor& samples) {
  const std::size_t rows = samples.rows();
  const std::size_t cols = samples.cols();
  py::array_t<double> out({rows, cols});
  std::copy(samples.data.begin(), samples.data.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const pfl::MetricsReport& report) {
  py::dict d;
  d["accuracy"] = report.accuracy;
  d["precision"] = report.precision;
  d["recall"] = report.recall;
  d["f1"] = report.f1;
  d["confusion"] = report.confusion;
  d["support"] = report.support;
  d["total"] = report.total;
  return d;
}

pfl::ExperimentConfig config_from_json_str(const std::string& config_json) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw pfl::ConfigError(std::string("config parse error: ") + e.what());
  }
  return pfl::parse_config_json(root);
}

py::dict result_dict(const pfl::ExperimentResult& result) {
  py::list records;
  for (const pfl::RoundRecord& record : result.records) {
    py::dict r;
    r["round"] = record.round;
    r["selected"] = record.selected;
    r["mean_train_loss"] = record.mean_train_loss;
    r["global"] = report_dict(record.global);
    py::list per_client;
    for (const pfl::MetricsReport& report : record.per_client) {
      per_client.append(report_dict(report));
    }
    r["per_client"] = per_client;
    records.append(r);
  }
  py::dict out;
  out["records"] = records;
  out["csv"] = pfl::render_csv(result.records);
  return out;
}

}  // namespace

PYBIND11_MODULE(_pflsim, m) {
  m.doc() = "Personalized federated learning simulator core";

  py::register_exception<pfl::Error>(m, "PflError");

  m.def("strategies", []() { return pfl::strategy_names(); },
        "Names of the available strategies");

  m.def("simplex_project", &pfl::simplex_project, py::arg("v"),
        "Euclidean projection onto the probability simplex");

  m.def(
      "confusion_matrix",
      [](const std::vector<int>& truth, const std::vector<int>& predictions,
         int num_classes) {
        return pfl::confusion_matrix(truth, predictions, num_classes);
      },
      py::arg("truth"), py::arg("predictions"), py::arg("num_classes"));

  m.def(
      "macro_metrics",
      [](const std::vector<std::vector<int>>& confusion) {
        return report_dict(pfl::macro_metrics(confusion));
      },
      py::arg("confusion"),
      "Accuracy plus macro precision/recall/F1 from a confusion matrix");

  m.def(
      "synthetic_blobs",
      [](int num_classes, int per_class, int dim, double spread, std::uint64_t seed) {
        const pfl::Dataset ds = pfl::synthetic_blobs(num_classes, per_class, dim, spread,
                                                     pfl::SplitRng(seed));
        return py::make_tuple(samples_array(ds.samples), ds.labels);
      },
      py::arg("num_classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"),
      py::arg("seed"));

  m.def(
      "load_idx",
      [](const std::string& images, const std::string& labels) {
        const pfl::Dataset ds = pfl::load_idx(images, labels);
        return py::make_tuple(samples_array(ds.samples), ds.labels);
      },
      py::arg("images"), py::arg("labels"));

  m.def(
      "load_sign_csv",
      [](const std::string& path) {
        const pfl::Dataset ds = pfl::load_sign_csv(path);
        return py::make_tuple(samples_array(ds.samples), ds.labels);
      },
      py::arg("path"));

  m.def(
      "shard_plan",
      [](const std::vector<int>& labels, int num_clients, int shards_per_client,
         int shard_size, std::uint64_t seed) {
        pfl::Dataset ds;
        ds.labels = labels;
        ds.num_classes = labels.empty() ? 1 : *std::max_element(labels.begin(),
                                                                labels.end()) + 1;
        ds.samples = pfl::Tensor::zeros({labels.size(), 1});
        const pfl::ShardPlan plan = pfl::sort_and_shard(
            ds, static_cast<std::size_t>(num_clients),
            static_cast<std::size_t>(shards_per_client),
            static_cast<std::size_t>(shard_size), pfl::SplitRng(seed));
        std::vector<std::vector<std::size_t>> per_client;
        per_client.reserve(plan.num_clients());
        for (std::size_t c = 0; c < plan.num_clients(); ++c) {
          per_client.push_back(plan.client_sample_indices(c));
        }
        return per_client;
      },
      py::arg("labels"), py::arg("num_clients"), py::arg("shards_per_client"),
      py::arg("shard_size"), py::arg("seed"),
      "Per-client sample indices under the label-sorted shard partition");

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        pfl::ExperimentResult result;
        {
          py::gil_scoped_release release;
          const pfl::ExperimentConfig config = config_from_json_str(config_json);
          const pfl::Dataset dataset = pfl::load_configured_dataset(config);
          const pfl::ShardPlan plan = pfl::build_plan(config, dataset);
          result = pfl::run_experiment(config.global, plan, dataset);
        }
        return result_dict(result);
      },
      py::arg("config_json"),
      "Run a configured experiment; returns round records and the csv text");

  m.def(
      "run_to_files",
      [](const std::string& config_json, bool force) {
        const pfl::ExperimentConfig config = config_from_json_str(config_json);
        return pfl::run_to_files(config, force).output_dir;
      },
      py::arg("config_json"), py::arg("force") = false,
      py::call_guard<py::gil_scoped_release>(),
      "Run and write metrics.csv/summary.json/config.json; returns the output dir");

  m.def(
      "partition_report",
      [](const std::string& config_json) {
        return pfl::partition_report(config_from_json_str(config_json));
      },
      py::arg("config_json"));

  m.def(
      "validate_config",
      [](const std::string& config_json) {
        config_from_json_str(config_json).validate();
        return true;
      },
      py::arg("config_json"));

  m.attr("__version__") = "0.1.0";
}
