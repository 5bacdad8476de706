// triaan: command line front end.

#include "triaan/check.hpp"
#include "triaan/pipeline.hpp"
#include "triaan/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace triaan;

namespace {

struct Globals {
  std::string config_path;
  std::string profile = "desk";
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
  std::string scenario = "both";
  std::optional<int> targets;
  std::string frontend;
  std::string vocoder;
  std::string adapter_command;
  std::string vocoder_command;
};

AppConfig resolve_config(const Globals& g) {
  AppConfig cfg = g.config_path.empty() ? AppConfig::for_profile(g.profile)
                                        : load_app_config(g.config_path);
  if (g.seed) cfg.set_seed(*g.seed);
  if (!g.frontend.empty()) {
    cfg.model.frontend = frontend_from_string(g.frontend);
    if (cfg.model.frontend == Frontend::Mel) {
      cfg.model.content_dim = cfg.model.mel_bins;
      cfg.model.adapter_name.clear();
    }
  }
  if (!g.adapter_command.empty()) cfg.model.adapter_name = "command:" + g.adapter_command;
  if (!g.vocoder.empty()) cfg.convert.vocoder = g.vocoder;
  if (!g.vocoder_command.empty()) cfg.convert.vocoder_command = g.vocoder_command;
  cfg.validate();
  return cfg;
}

std::vector<Scenario> scenarios(const std::string& s) {
  if (s == "both") return {Scenario::S2S, Scenario::U2U};
  return {scenario_from_string(s)};
}

fs::path require_checkpoint(const Globals& g) {
  if (g.checkpoint.empty()) throw ConfigError("--checkpoint is required for this command");
  return g.checkpoint;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TriAAN voice conversion: prepare, train, convert, evaluate, check"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (see docs/formats.md)")
      ->check(CLI::ExistingFile);
  app.add_option("--profile", g.profile, "defaults when no --config is given")
      ->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--seed", g.seed, "global seed (split, init, batching, pairs)");
  app.add_option("--checkpoint", g.checkpoint, "checkpoint file");
  app.add_option("--scenario", g.scenario, "conversion scenario")
      ->check(CLI::IsMember({"s2s", "u2u", "both"}));
  app.add_option("--targets", g.targets, "target utterances per conversion")
      ->check(CLI::PositiveNumber);
  app.add_option("--frontend", g.frontend, "content frontend")
      ->check(CLI::IsMember({"mel", "adapter"}));
  app.add_option("--vocoder", g.vocoder, "waveform synthesis")
      ->check(CLI::IsMember({"griffin_lim", "adapter"}));
  app.add_option("--adapter-command", g.adapter_command,
                 "content adapter program, e.g. \"cpc_encode {wav} {npy}\"");
  app.add_option("--vocoder-command", g.vocoder_command,
                 "vocoder adapter program, e.g. \"pwg {mel} {wav}\"");

  // prepare
  auto* prep = app.add_subcommand("prepare", "split a speaker-labelled corpus and cache features");
  prep->fallthrough();
  std::string corpus_dir, prepared_dir;
  int jobs = 0;
  prep->add_option("corpus", corpus_dir, "corpus root: <speaker>/<utterance>.wav")
      ->required()->check(CLI::ExistingDirectory);
  prep->add_option("out", prepared_dir, "prepared output directory")->required();
  prep->add_option("--jobs", jobs, "feature extraction workers");

  // train
  auto* tr = app.add_subcommand("train", "train on a prepared directory");
  tr->fallthrough();
  std::string train_dir, resume, log_path;
  long long steps = -1;
  tr->add_option("prepared", train_dir)->required()->check(CLI::ExistingDirectory);
  tr->add_option("--resume", resume, "continue from this checkpoint")->check(CLI::ExistingFile);
  tr->add_option("--steps", steps, "stop after this many optimizer steps");
  tr->add_option("--log", log_path, "also append step records to this file");

  // convert
  auto* cv = app.add_subcommand("convert", "convert one utterance to a target voice");
  cv->fallthrough();
  std::string source, output;
  std::vector<std::string> target_paths;
  cv->add_option("--source", source)->required()->check(CLI::ExistingFile);
  cv->add_option("--target", target_paths, "target utterance (repeatable)")
      ->required()->check(CLI::ExistingFile);
  cv->add_option("--output", output, "output stem: writes <stem>.wav and <stem>.npy")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "convert and score S2S/U2U pairs");
  ev->fallthrough();
  std::string eval_dir, eval_out;
  std::size_t pairs = 0;
  bool no_audio = false;
  ev->add_option("prepared", eval_dir)->required()->check(CLI::ExistingDirectory);
  ev->add_option("out", eval_out, "report directory")->required();
  ev->add_option("--pairs", pairs, "pairs per scenario");
  ev->add_flag("--no-audio", no_audio, "skip writing converted wavs");

  // pairgen
  auto* pg = app.add_subcommand("pairgen", "write a conversion pair list");
  pg->fallthrough();
  std::string pg_dir, pg_out;
  std::size_t pg_pairs = 0;
  pg->add_option("prepared", pg_dir)->required()->check(CLI::ExistingDirectory);
  pg->add_option("--pairs", pg_pairs, "pairs per scenario");
  pg->add_option("--out", pg_out, "output file (default stdout)");

  // check
  auto* ck = app.add_subcommand("check", "run the invariant, gradient and oracle suite");
  ck->fallthrough();
  bool full = false;
  std::string work_dir;
  ck->add_flag("--full", full, "include the overfit and end-to-end reproducibility runs");
  ck->add_option("--work-dir", work_dir, "scratch directory");

  // synth-corpus
  auto* sy = app.add_subcommand("synth-corpus", "write a small synthetic speaker corpus");
  sy->fallthrough();
  std::string synth_dir;
  SynthCorpusConfig sc;
  sy->add_option("dir", synth_dir)->required();
  sy->add_option("--speakers", sc.speakers)->check(CLI::PositiveNumber);
  sy->add_option("--utterances", sc.utterances_per_speaker)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ck) {
      check::SuiteOptions opts;
      opts.full = full;
      opts.work_dir = work_dir;
      opts.log = &std::cerr;
      const auto results = check::run_checks(opts);
      std::cout << check::format_table(results);
      for (const auto& r : results)
        if (!r.passed) return 1;
      return 0;
    }
    if (*sy) {
      if (g.seed) sc.seed = *g.seed;
      write_synth_corpus(synth_dir, sc);
      std::cout << "wrote " << sc.speakers << " x " << sc.utterances_per_speaker
                << " utterances to " << synth_dir << '\n';
      return 0;
    }

    AppConfig cfg = resolve_config(g);
    if (*prep) {
      if (jobs > 0) cfg.jobs = jobs;
      const DatasetManifest m =
          prepare(corpus_dir, prepared_dir, cfg.model, {cfg.split, cfg.jobs}, &std::cerr);
      std::ofstream(fs::path(prepared_dir) / "config.json") << to_json(cfg).dump(2) << '\n';
      std::cout << "prepared " << m.records.size() << " utterances: "
                << m.select(Split::Train).size() << " train, " << m.select(Split::Valid).size()
                << " valid, " << m.select(Split::Test).size() << " test, "
                << m.speakers(true).size() << " unseen speakers\n";
      return 0;
    }
    if (*tr) {
      if (steps >= 0) cfg.train.max_steps = static_cast<std::uint64_t>(steps);
      std::ofstream log_file;
      if (!log_path.empty()) log_file.open(log_path, std::ios::app);
      struct Tee : std::streambuf {
        std::streambuf *a, *b;
        int overflow(int c) override {
          if (c == EOF) return !EOF;
          a->sputc(static_cast<char>(c));
          if (b) b->sputc(static_cast<char>(c));
          return c;
        }
        int sync() override {
          a->pubsync();
          if (b) b->pubsync();
          return 0;
        }
      } tee;
      tee.a = std::cout.rdbuf();
      tee.b = log_file.is_open() ? log_file.rdbuf() : nullptr;
      std::ostream log(&tee);
      const TrainRunResult r = run_training(
          train_dir, cfg, require_checkpoint(g), &log,
          resume.empty() ? std::nullopt : std::optional<fs::path>(resume));
      log << "wrote " << r.checkpoint.string() << " after " << r.train.steps << " steps\n";
      log.flush();
      return 0;
    }
    if (*cv) {
      const std::size_t k = g.targets ? static_cast<std::size_t>(*g.targets) : target_paths.size();
      if (target_paths.size() < k)
        throw ConfigError("--targets " + std::to_string(k) + " needs at least that many --target files");
      ConversionJob job;
      job.source = source;
      job.targets.assign(target_paths.begin(), target_paths.begin() + static_cast<std::ptrdiff_t>(k));
      job.checkpoint = require_checkpoint(g);
      job.output = output;
      if (!g.frontend.empty()) job.frontend = frontend_from_string(g.frontend);
      job.options = cfg.convert;
      const ConversionOutput out = convert(job);
      std::cout << "wrote " << out.mel_path.string() << " (" << out.mel.rows() << " x "
                << out.mel.cols() << ") and " << out.wav_path.string() << '\n';
      return 0;
    }
    if (*ev) {
      if (pairs > 0) cfg.evaluate.pairs = pairs;
      EvaluateRun run;
      run.prepared_dir = eval_dir;
      run.checkpoint = require_checkpoint(g);
      run.out_dir = eval_out;
      run.scenarios = scenarios(g.scenario);
      run.targets = g.targets.value_or(1);
      run.write_audio = !no_audio;
      const EvaluationReport report = run_evaluation(run, cfg, &std::cerr);
      std::cout << format_summary_table(report);
      return 0;
    }
    if (*pg) {
      const DatasetManifest m = DatasetManifest::load(fs::path(pg_dir) / "manifest.tsv");
      std::vector<ConversionPair> all;
      for (Scenario s : scenarios(g.scenario)) {
        const PairgenResult r = pairgen(m, s, pg_pairs ? pg_pairs : cfg.evaluate.pairs, cfg.seed,
                                        g.targets.value_or(1), cfg.evaluate.max_speakers);
        std::cerr << to_string(s) << " speakers:";
        for (const auto& spk : r.speakers) std::cerr << ' ' << spk;
        std::cerr << '\n';
        all.insert(all.end(), r.pairs.begin(), r.pairs.end());
      }
      if (pg_out.empty()) {
        write_pairs(std::cout, all);
      } else {
        std::ofstream os(pg_out);
        write_pairs(os, all);
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
