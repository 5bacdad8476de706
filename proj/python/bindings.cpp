#include "triaan/check.hpp"
#include "triaan/checkpoint.hpp"
#include "triaan/pipeline.hpp"
#include "triaan/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace triaan;
using json = nlohmann::json;

namespace {

RawAudio audio_from(const std::vector<double>& samples) {
  RawAudio a;
  a.samples = samples;
  return a;
}

AppConfig config_from(const std::string& text) {
  return text.empty() ? AppConfig::for_profile("desk") : app_config_from_json(json::parse(text));
}

py::dict loss_dict(const LossBundle& b) {
  py::dict d;
  d["recon"] = b.recon;
  d["siam_recon"] = b.siam_recon;
  d["consistency"] = b.consistency;
  d["total"] = b.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "TriAAN core: features, kernels, model, training, evaluation";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("MEL_BINS") = kMelBins;

  // features
  m.def("extract_mel", [](const std::vector<double>& s) { return extract_mel(audio_from(s)).data; },
        py::arg("samples"), "80 x T log mel of 16 kHz mono samples");
  m.def(
      "extract_f0",
      [](const std::vector<double>& s) {
        const PitchTrack p = extract_f0(audio_from(s));
        py::dict d;
        d["log_f0"] = p.log_f0;
        d["f0_hz"] = p.f0_hz;
        d["voiced"] = p.voiced;
        d["all_unvoiced"] = p.all_unvoiced;
        return d;
      },
      py::arg("samples"));
  m.def("load_audio", [](const std::filesystem::path& p) { return load_audio(p).samples; });
  m.def("write_wav", [](const std::filesystem::path& p, const std::vector<double>& s) { write_wav(p, s); });

  // kernels
  m.def("instance_normalize", &instance_normalize, py::arg("x"));
  m.def("time_normalize", &time_normalize, py::arg("x"));
  m.def(
      "adaptive_normalize",
      [](const Mat& x, const Vec& mean, const Vec& std) { return adaptive_normalize(x, {mean, std}); },
      py::arg("x"), py::arg("mean"), py::arg("std"));
  m.def(
      "scaled_dot_attention",
      [](const Mat& q, const Mat& k, const Mat& v) {
        const AttentionResult r = scaled_dot_attention(q, k, v);
        return py::make_tuple(r.output, r.weights);
      },
      py::arg("q"), py::arg("k"), py::arg("v"));
  m.def("attentive_stat_pooling", &attentive_stat_pooling, py::arg("stats"), py::arg("w"));

  // model
  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config_json, std::uint64_t seed) {
             ModelConfig c = ModelConfig::desk();
             if (!config_json.empty()) c = json::parse(config_json).get<ModelConfig>();
             return Model(c, seed);
           }),
           py::arg("config_json") = "", py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) {
        Checkpoint c = load_checkpoint(p);
        return Model(c.config, std::move(c.weights));
      })
      .def("save",
           [](const Model& self, const std::filesystem::path& p) {
             Checkpoint c;
             c.config = self.config();
             c.weights = self.weights();
             save_checkpoint(p, c);
           })
      .def_property_readonly("config_json", [](const Model& self) { return json(self.config()).dump(); })
      .def_property_readonly("parameter_count", [](const Model& self) { return self.weights().parameter_count(); })
      .def(
          "forward",
          [](const Model& self, const Mat& content, const Vec& log_f0, const std::vector<Mat>& targets) {
            return self.forward({content, log_f0, targets});
          },
          py::arg("content"), py::arg("log_f0"), py::arg("targets"),
          "converted log mel (80 x T_source); content and targets are H x T maps");

  // training
  m.def("l1_loss", [](const Mat& y, const Mat& y_hat) { return l1_loss(y, y_hat); });
  m.def("combined_loss",
        [](const Mat& y, const Mat& y_hat, const Mat& y_siam) { return loss_dict(combined_loss(y, y_hat, y_siam)); });

  // evaluation
  m.def("wer", [](const std::string& ref, const std::string& hyp) { return wer(Transcript(ref), Transcript(hyp)); });
  m.def("cer", [](const std::string& ref, const std::string& hyp) { return cer(Transcript(ref), Transcript(hyp)); });
  m.def("cosine_similarity", &cosine_similarity);
  m.def(
      "eer_threshold",
      [](const std::vector<double>& genuine, const std::vector<double>& impostor) {
        const EerResult r = eer_threshold({genuine, impostor});
        return py::make_tuple(r.threshold, r.eer);
      },
      py::arg("genuine"), py::arg("impostor"));
  m.def("sv_accept_rate", &sv_accept_rate, py::arg("similarities"), py::arg("threshold"));

  // pipeline
  m.def("default_config", [](const std::string& profile) { return to_json(AppConfig::for_profile(profile)).dump(2); },
        py::arg("profile") = "desk");
  m.def(
      "synth_corpus",
      [](const std::filesystem::path& dir, int speakers, int utterances, std::uint64_t seed) {
        write_synth_corpus(dir, {speakers, utterances, 1.0, 2.0, seed});
      },
      py::arg("dir"), py::arg("speakers") = 4, py::arg("utterances") = 5, py::arg("seed") = 0);
  m.def(
      "prepare",
      [](const std::filesystem::path& corpus, const std::filesystem::path& out, const std::string& cfg) {
        const AppConfig c = config_from(cfg);
        py::gil_scoped_release release;
        return prepare(corpus, out, c.model, {c.split, c.jobs}).records.size();
      },
      py::arg("corpus_dir"), py::arg("out_dir"), py::arg("config_json") = "");
  m.def(
      "train",
      [](const std::filesystem::path& prepared, const std::filesystem::path& ckpt, const std::string& cfg) {
        const AppConfig c = config_from(cfg);
        TrainRunResult r;
        {
          py::gil_scoped_release release;
          r = run_training(prepared, c, ckpt);
        }
        py::list out;
        for (const TrainRecord& rec : r.train.records) {
          py::dict d = loss_dict(rec.loss);
          d["step"] = rec.step;
          d["grad_norm"] = rec.grad_norm;
          out.append(d);
        }
        return out;
      },
      py::arg("prepared_dir"), py::arg("checkpoint"), py::arg("config_json") = "");
  m.def(
      "convert",
      [](const std::filesystem::path& source, const std::vector<std::filesystem::path>& targets,
         const std::filesystem::path& ckpt, const std::filesystem::path& output, const std::string& vocoder,
         int iterations) {
        ConversionJob job;
        job.source = source;
        job.targets = targets;
        job.checkpoint = ckpt;
        job.output = output;
        job.options.vocoder = vocoder;
        job.options.griffin_lim_iterations = iterations;
        py::gil_scoped_release release;
        return convert(job).mel;
      },
      py::arg("source"), py::arg("targets"), py::arg("checkpoint"), py::arg("output"),
      py::arg("vocoder") = "griffin_lim", py::arg("griffin_lim_iterations") = 32);
  m.def(
      "evaluate",
      [](const std::filesystem::path& prepared, const std::filesystem::path& ckpt, const std::filesystem::path& out,
         int targets, const std::string& cfg) {
        const AppConfig c = config_from(cfg);
        EvaluateRun run;
        run.prepared_dir = prepared;
        run.checkpoint = ckpt;
        run.out_dir = out;
        run.targets = targets;
        run.write_audio = false;
        EvaluationReport rep;
        {
          py::gil_scoped_release release;
          rep = run_evaluation(run, c);
        }
        return format_summary_table(rep);
      },
      py::arg("prepared_dir"), py::arg("checkpoint"), py::arg("out_dir"), py::arg("targets") = 1,
      py::arg("config_json") = "");
  m.def(
      "check",
      [](bool full) {
        check::SuiteOptions o;
        o.full = full;
        std::vector<check::CheckResult> results;
        {
          py::gil_scoped_release release;
          results = check::run_checks(o);
        }
        py::list out;
        for (const auto& r : results) out.append(py::make_tuple(r.id, r.name, r.passed, r.detail));
        return out;
      },
      py::arg("full") = false);
}
