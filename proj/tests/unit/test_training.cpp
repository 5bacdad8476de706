#include "triaan/synth.hpp"
#include "triaan/training.hpp"

#include <doctest.h>

using namespace triaan;

namespace {

std::vector<UtteranceFeatures> toy_data(int speakers, int utts, std::uint64_t seed) {
  std::vector<UtteranceFeatures> out;
  Rng rng(seed);
  for (const SynthSpeaker& s : make_synth_speakers(speakers, seed)) {
    for (int i = 0; i < utts; ++i) {
      RawAudio a;
      a.samples = synthesize_utterance(s, rng, 0.6, 0.9).samples;
      UtteranceFeatures u = extract_utterance_features(a, FrontendSelector{});
      u.speaker_id = s.id;
      u.utterance_id = s.id + "_" + std::to_string(i);
      out.push_back(std::move(u));
    }
  }
  return out;
}

TrainConfig small_config() {
  TrainConfig c = TrainConfig::desk();
  c.batch_size = 2;
  c.crop_frames = 32;
  c.learning_rate = 1e-3;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("full-scale training settings") {
  const TrainConfig c = TrainConfig::full();
  CHECK(c.batch_size == 64);
  CHECK(c.epochs == 400);
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.crop_frames == 128);
}

TEST_CASE("l1 loss hand cases") {
  CHECK(l1_loss(Mat::Ones(3, 4), Mat::Ones(3, 4)) == 0.0);
  CHECK(l1_loss(Mat::Zero(1, 1), Mat::Ones(1, 1)) == 1.0);
  CHECK(l1_loss(Mat::Zero(2, 2), Mat::Ones(2, 2)) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(l1_loss(Mat::Zero(2, 2), Mat::Zero(2, 3)), ValidationError);
}

TEST_CASE("combined loss hand case and triangle bound") {
  const LossBundle b = combined_loss(Mat::Zero(1, 1), Mat::Ones(1, 1), Mat::Constant(1, 1, 3.0));
  CHECK(b.total == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(combined_loss(Mat::Ones(2, 2), Mat::Ones(2, 2), Mat::Ones(2, 2)).total == 0.0);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Mat y = rng.normal_matrix(4, 6), a = rng.normal_matrix(4, 6), s = rng.normal_matrix(4, 6);
    const LossBundle r = combined_loss(y, a, s);
    CHECK(r.consistency <= r.recon + r.siam_recon + 1e-12);
    CHECK(l1_loss(a, s) == l1_loss(s, a));
  }
}

TEST_CASE("time mask properties") {
  Rng rng(2);
  const Mat x = rng.normal_matrix(5, 50);
  CHECK(time_mask(x, 0.0, rng) == x);
  for (int i = 0; i < 100; ++i) {
    const MaskSpan s = draw_mask_span(50, 0.1, rng);
    CHECK(s.length <= 5);
    CHECK(s.start + s.length <= 50);
  }
  const Mat y = apply_mask(x, {10, 4});
  CHECK(y.middleCols(10, 4).isZero(0.0));
  CHECK(y.leftCols(10) == x.leftCols(10));
  CHECK(y.rightCols(36) == x.rightCols(36));
  CHECK_THROWS(draw_mask_span(50, 1.0, rng));
}

TEST_CASE("crop keeps streams aligned") {
  const auto data = toy_data(1, 1, 4);
  Rng rng(5);
  const TrainingSample s = crop_sample(data[0], 32, rng);
  CHECK(s.content.cols() == 32);
  CHECK(s.mel.cols() == 32);
  CHECK(s.log_f0.size() == 32);
  const TrainingSample whole = crop_sample(data[0], 100000, rng);
  CHECK(whole.mel.cols() == data[0].frames());
}

TEST_CASE("adam first step moves each weight by about the learning rate") {
  ModelConfig mc = ModelConfig::desk();
  Model m(mc, 6);
  const Weights before = m.weights();
  std::vector<Mat> grads = m.weights().zeros_like();
  for (Mat& g : grads) g.setConstant(0.3);
  AdamState st;
  TrainConfig tc = small_config();
  adam_update(m.weights(), st, grads, tc);
  CHECK(st.step == 1);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK((before.value(i) - m.weights().value(i)).cwiseAbs().maxCoeff() ==
          doctest::Approx(tc.learning_rate).epsilon(1e-4));
}

TEST_CASE("training is seeded, finite and resumable") {
  const auto data = toy_data(2, 2, 7);
  TrainConfig tc = small_config();
  tc.max_steps = 4;
  tc.epochs = 100;
  Model a(ModelConfig::desk(), 8), b(ModelConfig::desk(), 8);
  const TrainResult ra = train(a, data, tc);
  const TrainResult rb = train(b, data, tc);
  REQUIRE(ra.records.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ra.records[i].loss.total == rb.records[i].loss.total);
    CHECK(std::isfinite(ra.records[i].grad_norm));
  }

  Model c(ModelConfig::desk(), 8);
  TrainConfig half = tc;
  half.max_steps = 2;
  const TrainResult first = train(c, data, half);
  const TrainResult second = train(c, data, tc, {}, first.optimizer);
  REQUIRE(second.records.size() == 2);
  CHECK(second.records.back().step == 4);
  CHECK(second.records.back().loss.total == ra.records.back().loss.total);
  for (std::size_t i = 0; i < a.weights().size(); ++i) CHECK(c.weights().value(i) == a.weights().value(i));
}

TEST_CASE("loss trend on a toy set") {
  const auto data = toy_data(2, 3, 9);
  TrainConfig tc = small_config();
  tc.max_steps = 60;
  tc.epochs = 1000;
  Model m(ModelConfig::desk(), 10);
  const TrainResult r = train(m, data, tc);
  double first = 0, last = 0;
  for (int i = 0; i < 10; ++i) {
    first += r.records[static_cast<std::size_t>(i)].loss.total;
    last += r.records[r.records.size() - 10 + static_cast<std::size_t>(i)].loss.total;
  }
  CHECK(last < first);
}

TEST_CASE("record format is parsable") {
  TrainRecord r;
  r.step = 3;
  r.loss = {1.5, 2.5, 0.25, 2.25};
  r.grad_norm = 0.5;
  const std::string s = format_train_record(r);
  CHECK(s.rfind("step=3 ", 0) == 0);
  CHECK(s.find("total=2.25") != std::string::npos);
}

TEST_CASE("non-finite batches are refused without touching weights") {
  Model m(ModelConfig::desk(), 11);
  const Weights before = m.weights();
  Rng rng(12);
  TrainingSample s{rng.normal_matrix(80, 16), rng.normal_matrix(16, 1), rng.normal_matrix(80, 16)};
  s.mel(0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState st;
  CHECK_THROWS_AS(train_step(m, st, {s}, small_config(), rng), TrainingError);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(m.weights().value(i) == before.value(i));
}
