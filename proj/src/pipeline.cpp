#include "triaan/pipeline.hpp"

#include "triaan/feature_cache.hpp"
#include "triaan/npy.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <ostream>

namespace triaan {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -------------------------------------------------------------------

AppConfig AppConfig::for_profile(const std::string& profile) {
  AppConfig c;
  c.profile = profile;
  if (profile == "full") {
    c.model = ModelConfig{};
    c.train = TrainConfig::full();
    c.evaluate.pairs = 600;
  } else if (profile != "desk") {
    throw ConfigError("profile must be 'desk' or 'full', got '" + profile + "'");
  }
  return c;
}

void AppConfig::set_seed(std::uint64_t s) {
  seed = s;
  train.seed = s;
  split.seed = s;
}

void AppConfig::validate() const {
  model.validate();
  train.validate();
  split.validate();
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  if (convert.vocoder != "griffin_lim" && convert.vocoder != "adapter")
    throw ConfigError("convert.vocoder must be 'griffin_lim' or 'adapter'");
  if (convert.griffin_lim_iterations < 0)
    throw ConfigError("convert.griffin_lim_iterations must be >= 0");
  if (evaluate.max_speakers < 2) throw ConfigError("evaluate.max_speakers must be >= 2");
}

json to_json(const AppConfig& c) {
  return json{{"profile", c.profile},
              {"seed", c.seed},
              {"model", c.model},
              {"train", c.train},
              {"split",
               {{"train", c.split.train},
                {"valid", c.split.valid},
                {"test", c.split.test},
                {"unseen_speaker_fraction", c.split.unseen_speaker_fraction},
                {"min_unseen_speakers", c.split.min_unseen_speakers}}},
              {"jobs", c.jobs},
              {"convert",
               {{"vocoder", c.convert.vocoder},
                {"vocoder_command", c.convert.vocoder_command},
                {"griffin_lim_iterations", c.convert.griffin_lim_iterations}}},
              {"evaluate",
               {{"pairs", c.evaluate.pairs},
                {"max_speakers", c.evaluate.max_speakers},
                {"embedder", c.evaluate.embedder},
                {"asr", c.evaluate.asr}}}};
}

AppConfig app_config_from_json(const json& j) {
  static const std::vector<std::string> known = {"profile", "seed",  "model",   "train",
                                                 "split",   "jobs",  "convert", "evaluate"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
  AppConfig c = AppConfig::for_profile(j.value("profile", std::string("desk")));
  auto get = [](const json& obj, const char* key, auto& dst) {
    if (obj.contains(key)) obj.at(key).get_to(dst);
  };
  try {
    if (j.contains("model")) from_json(j.at("model"), c.model);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("split")) {
      const json& s = j.at("split");
      get(s, "train", c.split.train);
      get(s, "valid", c.split.valid);
      get(s, "test", c.split.test);
      get(s, "unseen_speaker_fraction", c.split.unseen_speaker_fraction);
      get(s, "min_unseen_speakers", c.split.min_unseen_speakers);
    }
    get(j, "jobs", c.jobs);
    if (j.contains("convert")) {
      const json& s = j.at("convert");
      get(s, "vocoder", c.convert.vocoder);
      get(s, "vocoder_command", c.convert.vocoder_command);
      get(s, "griffin_lim_iterations", c.convert.griffin_lim_iterations);
    }
    if (j.contains("evaluate")) {
      const json& s = j.at("evaluate");
      get(s, "pairs", c.evaluate.pairs);
      get(s, "max_speakers", c.evaluate.max_speakers);
      get(s, "embedder", c.evaluate.embedder);
      get(s, "asr", c.evaluate.asr);
    }
    if (j.contains("seed")) c.set_seed(j.at("seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  c.validate();
  return c;
}

AppConfig load_app_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return app_config_from_json(j);
}

// --- training ------------------------------------------------------------------------

TrainRunResult run_training(const fs::path& prepared_dir, const AppConfig& config,
                            const fs::path& checkpoint_out, std::ostream* log,
                            const std::optional<fs::path>& resume) {
  config.validate();
  const DatasetManifest manifest = DatasetManifest::load(prepared_dir / "manifest.tsv");

  std::optional<Model> model;
  std::optional<AdamState> state;
  if (resume) {
    Checkpoint c = load_checkpoint(*resume);
    if (!(c.config == config.model))
      throw ValidationError("resume checkpoint " + resume->string() +
                            " has a different model config than the run");
    model.emplace(c.config, std::move(c.weights));
    state = std::move(c.optimizer);
    state->step = c.step;
  } else {
    model.emplace(config.model, config.seed);
  }
  const auto data = load_split_features(prepared_dir, manifest, Split::Train, config.model);
  if (log)
    *log << "training on " << data.size() << " utterances, " << model->weights().parameter_count()
         << " parameters\n";

  TrainHooks hooks;
  hooks.log = log;
  hooks.checkpoint_path = checkpoint_out;
  TrainRunResult r;
  r.train = train(*model, data, config.train, hooks, std::move(state));
  r.checkpoint = checkpoint_out;
  return r;
}

// --- conversion ----------------------------------------------------------------------

void ConversionJob::validate() const {
  require(!targets.empty(), "conversion needs at least one target utterance");
  require(fs::exists(source), "source audio not found: " + source.string());
  for (const auto& t : targets) require(fs::exists(t), "target audio not found: " + t.string());
  require(fs::exists(checkpoint), "checkpoint not found: " + checkpoint.string());
  require(!output.empty(), "conversion output path is empty");
}

void check_frontend(const ModelConfig& trained, std::optional<Frontend> requested) {
  if (requested && *requested != trained.frontend)
    throw ValidationError("checkpoint was trained with the '" + to_string(trained.frontend) +
                          "' frontend but '" + to_string(*requested) +
                          "' was requested; pass --frontend " + to_string(trained.frontend) +
                          " or use a checkpoint trained on " + to_string(*requested) +
                          " features");
}

Mat convert_features(const Model& model, const UtteranceFeatures& source,
                     const std::vector<UtteranceFeatures>& targets) {
  ConversionInput in;
  in.content = source.content.data;
  in.log_f0 = source.pitch.log_f0;
  for (const auto& t : targets) in.targets.push_back(t.content.data);
  return model.forward(in);
}

ConversionOutput convert(const ConversionJob& job) {
  job.validate();
  Checkpoint ckpt = load_checkpoint(job.checkpoint);
  check_frontend(ckpt.config, job.frontend);
  const FrontendSelector frontend = frontend_for(ckpt.config);
  const Model model(ckpt.config, std::move(ckpt.weights));

  const UtteranceFeatures src = extract_utterance_features(load_audio(job.source), frontend);
  std::vector<UtteranceFeatures> tgts;
  for (const auto& t : job.targets)
    tgts.push_back(extract_utterance_features(load_audio(t), frontend));

  ConversionOutput out;
  out.mel = convert_features(model, src, tgts);
  const auto vocoder = make_vocoder(job.options.vocoder, job.options.vocoder_command,
                                    {job.options.griffin_lim_iterations, 0});
  out.samples = vocoder->synthesize(out.mel);
  out.mel_path = fs::path(job.output.string() + ".npy");
  out.wav_path = fs::path(job.output.string() + ".wav");
  write_npy(out.mel_path, out.mel);
  write_wav(out.wav_path, out.samples);
  return out;
}

// --- evaluation ----------------------------------------------------------------------

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read transcript " + p.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

EvaluationReport run_evaluation(const EvaluateRun& run, const AppConfig& config,
                                std::ostream* log) {
  config.validate();
  require(run.targets >= 1, "evaluate: targets must be >= 1");
  const DatasetManifest manifest = DatasetManifest::load(run.prepared_dir / "manifest.tsv");
  Checkpoint ckpt = load_checkpoint(run.checkpoint);
  const std::string tag = frontend_tag(ckpt.config);
  const Model model(ckpt.config, std::move(ckpt.weights));

  const auto embedder = make_embedding_adapter(config.evaluate.embedder);
  std::shared_ptr<const TranscriptAdapter> asr;
  if (!config.evaluate.asr.empty() && config.evaluate.asr != "none")
    asr = make_transcript_adapter(config.evaluate.asr);
  const auto vocoder = make_vocoder(config.convert.vocoder, config.convert.vocoder_command,
                                    {config.convert.griffin_lim_iterations, config.seed});

  std::map<std::string, Vec> embeddings;
  auto embedding_of = [&](const std::string& id) -> const Vec& {
    auto it = embeddings.find(id);
    if (it == embeddings.end())
      it = embeddings.emplace(id, embedder->embed(load_audio(manifest.find(id).entry.audio_path)))
               .first;
    return it->second;
  };
  auto features_of = [&](const std::string& id) {
    CachedFeatures c = read_features(feature_path(run.prepared_dir, id));
    if (c.frontend_tag != tag)
      throw ValidationError("cached features of '" + id + "' use '" + c.frontend_tag +
                            "' but the checkpoint expects '" + tag + "'");
    return std::move(c.features);
  };

  // Threshold from genuine/impostor trials over all real test utterances.
  std::vector<std::pair<std::string, Vec>> labelled;
  for (const ManifestRecord* r : manifest.select(Split::Test))
    labelled.emplace_back(r->entry.speaker_id, embedding_of(r->entry.utterance_id));
  EvaluationReport report;
  report.embedder = embedder->name();
  report.eer = eer_threshold(build_trials(labelled));
  if (log)
    *log << "sv threshold " << report.eer.threshold << " (eer " << report.eer.eer << ", "
         << labelled.size() << " test utterances)\n";

  fs::create_directories(run.out_dir);
  for (Scenario sc : run.scenarios) {
    const std::uint64_t pair_seed = config.seed + (sc == Scenario::S2S ? 11 : 23);
    const PairgenResult pg = pairgen(manifest, sc, config.evaluate.pairs, pair_seed, run.targets,
                                     config.evaluate.max_speakers);
    {
      std::ofstream pl(run.out_dir / ("pairs_" + to_string(sc) + ".tsv"));
      write_pairs(pl, pg.pairs);
    }
    if (log) {
      *log << to_string(sc) << ": " << pg.pairs.size() << " pairs over speakers";
      for (const auto& s : pg.speakers) *log << ' ' << s;
      *log << '\n';
    }
    for (std::size_t i = 0; i < pg.pairs.size(); ++i) {
      const ConversionPair& p = pg.pairs[i];
      std::vector<UtteranceFeatures> tgts;
      for (const auto& id : p.target_ids) tgts.push_back(features_of(id));
      const Mat mel = convert_features(model, features_of(p.source_id), tgts);
      RawAudio audio;
      audio.samples = vocoder->synthesize(mel);

      PairRow row;
      row.scenario = to_string(sc);
      row.source_id = p.source_id;
      for (std::size_t k = 0; k < p.target_ids.size(); ++k)
        row.target_id += (k ? "," : "") + p.target_ids[k];
      Vec target_emb = Vec::Zero(embedding_of(p.target_ids[0]).size());
      for (const auto& id : p.target_ids) target_emb += embedding_of(id);
      row.similarity = cosine_similarity(embedder->embed(audio), target_emb);
      row.accepted = row.similarity >= report.eer.threshold;
      const auto& src = manifest.find(p.source_id).entry;
      if (asr && src.transcript_path) {
        const Transcript ref(read_text(*src.transcript_path));
        const Transcript hyp = asr->transcribe(audio);
        row.wer = wer(ref, hyp);
        row.cer = cer(ref, hyp);
      }
      if (run.write_audio) {
        const std::string stem = to_string(sc) + "_" + std::to_string(i) + "_" + p.source_id +
                                 "_to_" + p.target_ids[0];
        write_wav(run.out_dir / "audio" / (stem + ".wav"), audio.samples);
      }
      report.rows.push_back(std::move(row));
    }
  }

  {
    std::ofstream f(run.out_dir / "pairs.tsv");
    write_pairs_tsv(f, report);
  }
  {
    std::ofstream f(run.out_dir / "summary.tsv");
    write_summary_tsv(f, report);
  }
  {
    std::ofstream f(run.out_dir / "summary.txt");
    f << format_summary_table(report);
  }
  return report;
}

}  // namespace triaan
