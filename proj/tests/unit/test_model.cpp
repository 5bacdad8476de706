#include "triaan/checkpoint.hpp"
#include "triaan/model.hpp"

#include <doctest.h>

#include <filesystem>

using namespace triaan;

namespace {

ConversionInput random_input(Rng& rng, const ModelConfig& c, Eigen::Index t, std::vector<Eigen::Index> ts) {
  ConversionInput in;
  in.content = rng.normal_matrix(c.content_dim, t);
  in.log_f0 = rng.normal_matrix(t, 1);
  for (Eigen::Index n : ts) in.targets.push_back(rng.normal_matrix(c.content_dim, n));
  return in;
}

}  // namespace

TEST_CASE("full-scale model defaults") {
  const ModelConfig c;
  CHECK(c.content_dim == 256);
  CHECK(c.channels == 512);
  CHECK(c.layers == 6);
  CHECK(c.mel_bins == 80);
  CHECK(c.postnet.layers == 5);
  CHECK(parameter_count(c) > parameter_count(ModelConfig::desk()));
}

TEST_CASE("desk model parameter count is a pure function of the config") {
  const ModelConfig c = ModelConfig::desk();
  CHECK(parameter_count(c) == 140256);
  CHECK(Model(c, 1).weights().parameter_count() == parameter_count(c));
}

TEST_CASE("output is 80 x T_source independent of T_target") {
  const Model m(ModelConfig::desk(), 2);
  Rng rng(3);
  for (auto [t, ts] : {std::pair<Eigen::Index, Eigen::Index>{1, 5}, {37, 200}, {128, 3}}) {
    const Mat y = m.forward(random_input(rng, m.config(), t, {ts}));
    CHECK(y.rows() == 80);
    CHECK(y.cols() == t);
    CHECK(y.allFinite());
  }
}

TEST_CASE("speaker pyramid has L maps of T_s x C") {
  ModelConfig c = ModelConfig::desk();
  c.layers = 3;
  const Model m(c, 4);
  Rng rng(5);
  const SpeakerFeaturePyramid p = m.speaker_encode(rng.normal_matrix(80, 23));
  CHECK(p.layers() == 3);
  for (const Mat& f : p.maps) {
    CHECK(f.rows() == 23);
    CHECK(f.cols() == c.channels);
  }
}

TEST_CASE("mirror pairing: first decoder layer sees the deepest encoder layer") {
  ModelConfig c = ModelConfig::desk();
  c.layers = 4;
  const Model mirror(c, 1);
  CHECK(mirror.pyramid_index_for_decoder_layer(0) == 3);
  CHECK(mirror.pyramid_index_for_decoder_layer(3) == 0);
  c.pyramid_pairing = PyramidPairing::Same;
  const Model same(c, 1);
  CHECK(same.pyramid_index_for_decoder_layer(0) == 0);
}

TEST_CASE("zero-initialized PostNet output leaves mel_pre unchanged") {
  const Model m(ModelConfig::desk(), 6);
  Rng rng(7);
  const Mat pre = rng.normal_matrix(80, 15);
  CHECK(m.postnet(pre) == pre);
}

TEST_CASE("encoder preserves T and handles zero weights") {
  ModelConfig c = ModelConfig::desk();
  Model m(c, 8);
  Rng rng(9);
  CHECK(m.content_encode(rng.normal_matrix(80, 1)).cols() == 1);
  CHECK(m.content_encode(rng.normal_matrix(80, 33)).rows() == c.channels);
  for (std::size_t i = 0; i < m.weights().size(); ++i) m.weights().value(i).setZero();
  CHECK(m.forward(random_input(rng, c, 12, {9})).allFinite());
}

TEST_CASE("bottleneck: zero pitch is fine, time reversal matters") {
  const Model m(ModelConfig::desk(), 10);
  Rng rng(11);
  const Mat x = rng.normal_matrix(32, 20);
  const SpeakerFeaturePyramid pyr = m.speaker_encode(rng.normal_matrix(80, 14));
  CHECK(m.bottleneck(x, Vec::Zero(20), pyr).allFinite());
  const Vec f0 = rng.normal_matrix(20, 1);
  const Mat fwd = m.bottleneck(x, f0, pyr);
  const Mat rev = m.bottleneck(x.rowwise().reverse(), f0.reverse(), pyr).rowwise().reverse();
  CHECK((fwd - rev).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("multi-target conversion differs from one-shot; targets matter") {
  const Model m(ModelConfig::desk(), 12);
  Rng rng(13);
  ConversionInput in = random_input(rng, m.config(), 30, {20, 25, 18});
  const Mat three = m.forward(in);
  ConversionInput one = in;
  one.targets.resize(1);
  CHECK((three - m.forward(one)).cwiseAbs().sum() > 0.0);
  ConversionInput other = one;
  other.targets[0] = rng.normal_matrix(80, 20);
  CHECK((m.forward(other) - m.forward(one)).cwiseAbs().sum() > 0.0);
}

TEST_CASE("average multi-target mode runs") {
  ModelConfig c = ModelConfig::desk();
  c.multi_target = MultiTargetMode::Average;
  const Model m(c, 14);
  Rng rng(15);
  CHECK(m.forward(random_input(rng, c, 10, {12, 30})).cols() == 10);
}

TEST_CASE("forward is deterministic and seeds differ") {
  Rng rng(16);
  const ConversionInput in = random_input(rng, ModelConfig::desk(), 21, {17});
  CHECK(Model(ModelConfig::desk(), 1).forward(in) == Model(ModelConfig::desk(), 1).forward(in));
  CHECK(Model(ModelConfig::desk(), 1).forward(in) != Model(ModelConfig::desk(), 2).forward(in));
}

TEST_CASE("invalid inputs are rejected") {
  const Model m(ModelConfig::desk(), 17);
  Rng rng(18);
  ConversionInput in = random_input(rng, m.config(), 10, {});
  CHECK_THROWS_AS(m.forward(in), ValidationError);
  in = random_input(rng, m.config(), 10, {5});
  in.log_f0 = Vec::Zero(9);
  CHECK_THROWS_AS(m.forward(in), ValidationError);
  in = random_input(rng, m.config(), 10, {5});
  in.content = rng.normal_matrix(79, 10);
  CHECK_THROWS_AS(m.forward(in), ValidationError);
  ModelConfig bad = ModelConfig::desk();
  bad.conv_kernel = 4;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config json round trip") {
  ModelConfig c = ModelConfig::desk();
  c.sa_residual = false;
  c.pyramid_pairing = PyramidPairing::Same;
  nlohmann::json j = c;
  CHECK(j.get<ModelConfig>() == c);
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto path = std::filesystem::temp_directory_path() / "triaan_unit" / "model.ckpt";
  std::filesystem::create_directories(path.parent_path());
  const Model m(ModelConfig::desk(), 19);
  Checkpoint ck;
  ck.config = m.config();
  ck.weights = m.weights();
  ck.step = 7;
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.step == 7);
  CHECK(back.config == m.config());
  Rng rng(20);
  const ConversionInput in = random_input(rng, m.config(), 16, {11});
  CHECK(Model(back.config, std::move(back.weights)).forward(in) == m.forward(in));
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), IoError);
}
