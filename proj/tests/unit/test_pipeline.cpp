#include "triaan/npy.hpp"
#include "triaan/pipeline.hpp"
#include "triaan/synth.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace triaan;
namespace fs = std::filesystem;

namespace {

std::vector<CorpusEntry> fake_corpus(int speakers, int utts) {
  std::vector<CorpusEntry> c;
  for (int s = 0; s < speakers; ++s)
    for (int u = 0; u < utts; ++u)
      c.push_back({"s" + std::to_string(s) + "_" + std::to_string(u), "s" + std::to_string(s),
                   "/x/" + std::to_string(s) + "/" + std::to_string(u) + ".wav", std::nullopt, 1.0});
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "triaan_unit" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("split counts, disjointness and determinism") {
  SplitConfig sc;
  sc.seed = 11;
  const auto corpus = fake_corpus(10, 10);
  const DatasetManifest m = make_manifest(corpus, sc);
  CHECK(std::abs(static_cast<int>(m.select(Split::Train).size()) - 60) <= 1);
  CHECK(std::abs(static_cast<int>(m.select(Split::Valid).size()) - 20) <= 1);
  CHECK(std::abs(static_cast<int>(m.select(Split::Test).size()) - 20) <= 1);
  std::set<std::string> ids;
  for (const auto& r : m.records) CHECK(ids.insert(r.entry.utterance_id).second);
  std::set<std::string> train_spk;
  for (const auto* r : m.select(Split::Train)) train_spk.insert(r->entry.speaker_id);
  for (const auto& u : m.speakers(true)) CHECK(train_spk.count(u) == 0);
  std::ostringstream a, b;
  m.write_tsv(a);
  make_manifest(corpus, sc).write_tsv(b);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  std::ostringstream c;
  DatasetManifest::read_tsv(in).write_tsv(c);
  CHECK(c.str() == a.str());
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(make_manifest({}, SplitConfig{}), ValidationError);
  SplitConfig bad;
  bad.train = 0.9;
  CHECK_THROWS(make_manifest(fake_corpus(3, 3), bad));
}

TEST_CASE("pairgen: count, cross-speaker, seeded") {
  SplitConfig sc;
  sc.seed = 2;
  const DatasetManifest m = make_manifest(fake_corpus(10, 10), sc);
  for (Scenario s : {Scenario::S2S, Scenario::U2U}) {
    const PairgenResult a = pairgen(m, s, 20, 5, 3), b = pairgen(m, s, 20, 5, 3);
    REQUIRE(a.pairs.size() == 20);
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
      const auto& p = a.pairs[i];
      CHECK(p.target_ids.size() == 3);
      const std::string src = m.find(p.source_id).entry.speaker_id;
      for (const auto& t : p.target_ids) {
        CHECK(m.find(t).entry.speaker_id != src);
        CHECK(m.find(t).split == Split::Test);
        CHECK(m.find(t).unseen == (s == Scenario::U2U));
      }
      CHECK(p.source_id == b.pairs[i].source_id);
      CHECK(p.target_ids == b.pairs[i].target_ids);
    }
  }
  std::ostringstream os;
  const auto pairs = pairgen(m, Scenario::S2S, 4, 1).pairs;
  write_pairs(os, pairs);
  std::istringstream is(os.str());
  const auto back = read_pairs(is);
  REQUIRE(back.size() == 4);
  CHECK(back[2].target_ids == pairs[2].target_ids);
}

TEST_CASE("pairgen with one speaker fails") {
  SplitConfig sc;
  sc.min_unseen_speakers = 0;
  sc.unseen_speaker_fraction = 0.0;
  CHECK_THROWS_AS(pairgen(make_manifest(fake_corpus(1, 10), sc), Scenario::S2S, 2, 0), ValidationError);
}

TEST_CASE("config profiles and json") {
  const AppConfig full = AppConfig::for_profile("full");
  CHECK(full.model.channels == 512);
  CHECK(full.train.batch_size == 64);
  CHECK(full.evaluate.pairs == 600);
  AppConfig desk = AppConfig::for_profile("desk");
  desk.set_seed(9);
  CHECK(desk.train.seed == 9);
  CHECK(desk.split.seed == 9);
  const AppConfig back = app_config_from_json(to_json(desk));
  CHECK(back.model == desk.model);
  CHECK(back.train == desk.train);
  CHECK_THROWS_AS(app_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(AppConfig::for_profile("huge"), ConfigError);
}

TEST_CASE("shipped config files load") {
  for (const char* name : {"desk.json", "full.json"}) {
    const fs::path p = fs::path(TRIAAN_SOURCE_DIR) / "configs" / name;
    CHECK_NOTHROW(load_app_config(p));
  }
}

TEST_CASE("frontend guard names the remedy") {
  ModelConfig mel = ModelConfig::desk();
  CHECK_NOTHROW(check_frontend(mel, std::nullopt));
  CHECK_NOTHROW(check_frontend(mel, Frontend::Mel));
  try {
    check_frontend(mel, Frontend::Adapter);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("--frontend mel") != std::string::npos);
  }
}

TEST_CASE("prepare, train, convert, evaluate on a synthetic corpus") {
  const fs::path root = scratch("pipeline");
  write_synth_corpus(root / "corpus", {8, 5, 1.0, 1.4, 4});
  CHECK(scan_corpus(root / "corpus").size() == 40);
  AppConfig cfg = AppConfig::for_profile("desk");
  cfg.set_seed(4);
  cfg.train.max_steps = 2;
  cfg.train.batch_size = 2;
  cfg.convert.griffin_lim_iterations = 4;
  cfg.evaluate.pairs = 2;

  const DatasetManifest m = prepare(root / "corpus", root / "prep", cfg.model, {cfg.split, 2});
  CHECK(fs::exists(root / "prep" / "manifest.tsv"));
  for (const auto& r : m.records) CHECK(fs::exists(feature_path(root / "prep", r.entry.utterance_id)));

  const TrainRunResult tr = run_training(root / "prep", cfg, root / "m.ckpt");
  CHECK(tr.train.steps == 2);

  const auto pair = pairgen(m, Scenario::S2S, 1, 4, 3).pairs.at(0);
  ConversionJob job;
  job.source = m.find(pair.source_id).entry.audio_path;
  for (const auto& t : pair.target_ids) job.targets.push_back(m.find(t).entry.audio_path);
  job.checkpoint = root / "m.ckpt";
  job.output = root / "out" / "conv";
  job.options = cfg.convert;
  const ConversionOutput out = convert(job);
  CHECK(out.mel.rows() == 80);
  CHECK(read_npy(out.mel_path) == out.mel);
  const WavData w = read_wav(out.wav_path);
  CHECK(w.sample_rate == 16000);
  CHECK(w.frames() > 0);

  job.frontend = Frontend::Adapter;
  CHECK_THROWS_AS(convert(job), ValidationError);
  job.frontend.reset();
  job.targets.clear();
  CHECK_THROWS_AS(convert(job), ValidationError);

  EvaluateRun run;
  run.prepared_dir = root / "prep";
  run.checkpoint = root / "m.ckpt";
  run.out_dir = root / "eval";
  run.write_audio = false;
  const EvaluationReport rep = run_evaluation(run, cfg);
  CHECK(rep.rows.size() == 4);
  CHECK(fs::exists(root / "eval" / "summary.tsv"));
  CHECK(fs::exists(root / "eval" / "pairs.tsv"));
  for (const auto& row : rep.rows) CHECK(!row.wer.has_value());
}

TEST_CASE("vocoder selection") {
  CHECK_NOTHROW(make_vocoder("griffin_lim", "", {}));
  CHECK_THROWS_AS(make_vocoder("adapter", "", {}), ConfigError);
  CHECK_THROWS_AS(make_vocoder("wavenet", "", {}), ConfigError);
  Rng rng(1);
  const std::vector<double> y = griffin_lim(mel_to_magnitude(rng.normal_matrix(80, 10)), {4, 1});
  CHECK(y.size() == 9 * 160);
}
