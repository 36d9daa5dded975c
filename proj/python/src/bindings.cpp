// Copyright 2026 The patchasd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python module _patchasd: NumPy-facing wrappers over the core library.

#include <optional>

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "patchasd/backend.hpp"
#include "patchasd/config.hpp"
#include "patchasd/embed_head.hpp"
#include "patchasd/metrics.hpp"
#include "patchasd/model.hpp"
#include "patchasd/pipeline.hpp"
#include "patchasd/wav.hpp"

namespace py = pybind11;
using namespace patchasd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vec(const Array& a) {
  if (a.ndim() != 1) throw ShapeError("expected a 1-D array, got " + std::to_string(a.ndim()) + "-D");
  return {a.data(), a.data() + a.size()};
}

std::vector<std::vector<double>> to_rows(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(a.shape(0)));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double* r = a.data() + i * a.shape(1);
    rows[i].assign(r, r + a.shape(1));
  }
  return rows;
}

Waveform to_wave(const Array& samples, double sample_rate) {
  Waveform w;
  w.samples = to_vec(samples);
  w.sample_rate = sample_rate;
  return w;
}

std::vector<int> to_labels(const py::array_t<int, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

MelSpectrogram to_spec(const Array& a) {
  MelSpectrogram s;
  s.values = to_tensor(a);
  if (s.values.rank() != 2) throw ShapeError("expected a [frames x mels] array");
  return s;
}

void print_log(const std::string& line) {
  py::gil_scoped_acquire gil;
  py::print(line, py::arg("file") = py::module_::import("sys").attr("stderr"));
}

// Embedding model loaded from a checkpoint.
struct LoadedModel {
  ModelConfig cfg;
  ModelParams params;
  FrontendConfig frontend;
};

}  // namespace

PYBIND11_MODULE(_patchasd, m) {
  m.doc() = "Patch-token anomalous sound detection core";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  // Front end.
  m.def(
      "log_mel",
      [](const Array& samples, double sample_rate, bool standardize) {
        FrontendConfig cfg;
        cfg.sample_rate = sample_rate;
        cfg.standardize = standardize;
        return to_array(extract_features(to_wave(samples, sample_rate), cfg).values);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000.0, py::arg("standardize") = true,
      "Log-mel spectrogram [frames x 128] of a mono waveform.");
  m.def(
      "read_wav",
      [](const std::filesystem::path& path, double target_rate) {
        const Waveform w = read_wav(path, target_rate);
        return py::make_tuple(to_array(Tensor::vector(w.samples)), w.sample_rate);
      },
      py::arg("path"), py::arg("target_rate") = 16000.0);
  m.def(
      "patchify",
      [](const Array& spec, std::size_t patch) {
        const PatchGrid g = patchify(to_spec(spec), patch);
        return py::make_tuple(to_array(g.tokens()), g.rows_freq, g.cols_time);
      },
      py::arg("spec"), py::arg("patch") = 16,
      "Tokens [n_patches x patch^2] and the (rows_freq, cols_time) grid.");

  // Loss.
  m.def(
      "arcface_loss",
      [](const Array& X, const std::vector<std::size_t>& labels, const Array& W, double scale, double margin) {
        return arcface_loss(to_tensor(X), labels, to_tensor(W), ArcFaceConfig{scale, margin});
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("class_matrix"), py::arg("scale") = 30.0,
      py::arg("margin") = 0.5);

  // Scoring.
  m.def(
      "knn_score",
      [](const Array& query, const Array& bank, std::size_t k) {
        return score(to_vec(query), build_bank(to_rows(bank), "bank"), k);
      },
      py::arg("query"), py::arg("bank"), py::arg("k") = 1,
      "Mean of the k smallest cosine distances from query to the bank rows.");
  m.def(
      "soft_score",
      [](const Array& query, const Array& source, const Array& target, std::size_t k) {
        return soft_score(to_vec(query), build_bank(to_rows(source), "source"),
                          build_bank(to_rows(target), "target"), k);
      },
      py::arg("query"), py::arg("source"), py::arg("target"), py::arg("k") = 1);

  // Metrics.
  m.def(
      "auc",
      [](const Array& scores, const py::array_t<int, py::array::c_style | py::array::forcecast>& y) {
        return auc(to_vec(scores), to_labels(y));
      },
      py::arg("scores"), py::arg("is_anomaly"));
  m.def(
      "pauc",
      [](const Array& scores, const py::array_t<int, py::array::c_style | py::array::forcecast>& y, double p) {
        return pauc(to_vec(scores), to_labels(y), p);
      },
      py::arg("scores"), py::arg("is_anomaly"), py::arg("p") = 0.1);

  // Model.
  py::class_<LoadedModel>(m, "Model")
      .def(py::init([](const std::filesystem::path& path) {
             auto [cfg, params] = load_model(path);
             return LoadedModel{cfg, std::move(params), FrontendConfig{}};
           }),
           py::arg("checkpoint"))
      .def_property_readonly("embed_dim", [](const LoadedModel& m) { return m.cfg.embed_dim; })
      .def_property_readonly("num_classes", [](const LoadedModel& m) { return m.cfg.num_classes; })
      .def(
          "embed",
          [](const LoadedModel& m, const Array& samples, double sample_rate) {
            FrontendConfig fe = m.frontend;
            fe.sample_rate = sample_rate;
            const Waveform w = to_wave(samples, sample_rate);
            Tensor e;
            {
              py::gil_scoped_release release;
              e = embed(m.params, m.cfg, patchify(extract_features(w, fe), m.cfg.vit.patch));
            }
            return to_array(e);
          },
          py::arg("samples"), py::arg("sample_rate") = 16000.0, "Clip embedding [embed_dim].")
      .def("__repr__", [](const LoadedModel& m) {
        return "Model(depth=" + std::to_string(m.cfg.vit.depth) + ", dim=" + std::to_string(m.cfg.vit.dim) +
               ", embed_dim=" + std::to_string(m.cfg.embed_dim) + ")";
      });
  // Pipeline stages driven by "key = value" settings.
  m.def(
      "run_stage",
      [](const std::string& stage, const std::map<std::string, std::string>& settings, bool verbose) {
        RunConfig cfg = desk_defaults();
        for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
        const LogFn log = verbose ? LogFn(print_log) : LogFn([](const std::string&) {});
        std::optional<std::string> report;
        {
          py::gil_scoped_release release;
          if (stage == "synth") {
            cmd_synth(cfg, log);
          } else if (stage == "train") {
            cmd_train(cfg, log);
          } else if (stage == "embed") {
            cmd_embed(cfg, log);
          } else if (stage == "score") {
            cmd_score(cfg, log);
          } else if (stage == "eval") {
            report = report_to_json(cmd_eval(cfg, log));
          } else {
            throw Error("unknown stage '" + stage + "'");
          }
        }
        if (!report) return py::object(py::none());
        return py::module_::import("json").attr("loads")(*report);
      },
      py::arg("stage"), py::arg("settings") = std::map<std::string, std::string>{}, py::arg("verbose") = false,
      "Runs one pipeline stage; 'eval' returns the report as a dict.");
  m.def(
      "describe_config",
      [](const std::map<std::string, std::string>& settings) {
        RunConfig cfg = desk_defaults();
        for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
        return describe(cfg);
      },
      py::arg("settings") = std::map<std::string, std::string>{});
}
