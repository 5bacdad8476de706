#include "triaan/audio.hpp"
#include "triaan/feature_cache.hpp"
#include "triaan/features.hpp"
#include "triaan/npy.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace triaan;
namespace fs = std::filesystem;

namespace {

std::vector<double> tone(double hz, double seconds, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(seconds * kSampleRate));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate);
  return x;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "triaan_unit" / name;
  fs::create_directories(p.parent_path());
  return p;
}

}  // namespace

TEST_CASE("mel frames follow the 10 ms hop") {
  RawAudio a;
  a.samples = tone(440.0, 1.0);
  const MelSpectrogram m = extract_mel(a);
  CHECK(m.data.rows() == kMelBins);
  CHECK(m.data.cols() == 101);
  CHECK(m.data.allFinite());
}

TEST_CASE("mel energy peaks at the tone's filter") {
  RawAudio a;
  a.samples = tone(1000.0, 0.5);
  const MelSpectrogram m = extract_mel(a);
  Eigen::Index peak = 0;
  m.data.col(m.frames() / 2).maxCoeff(&peak);
  // HTK mel of 1 kHz is ~1000 mel; 80 bins up to ~2840 mel put it near bin 27.
  CHECK(peak >= 24);
  CHECK(peak <= 30);
}

TEST_CASE("silence hits the log floor") {
  RawAudio a;
  a.samples.assign(3200, 0.0);
  const MelSpectrogram m = extract_mel(a);
  CHECK(m.data.maxCoeff() == doctest::Approx(std::log(kLogFloor)));
}

TEST_CASE("hann window and filterbank shapes") {
  CHECK(hann_window().size() == kFftSize);
  CHECK(hann_window()(0) == doctest::Approx(0.0));
  CHECK(mel_filterbank().rows() == kMelBins);
  CHECK(mel_filterbank().cols() == kFftSize / 2 + 1);
  CHECK(mel_filterbank().minCoeff() >= 0.0);
}

TEST_CASE("stft/istft round trip") {
  const std::vector<double> x = tone(300.0, 0.3);
  const std::vector<double> y = istft(stft(x), x.size());
  REQUIRE(y.size() == x.size());
  double err = 0.0;
  for (std::size_t i = 400; i + 400 < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
  CHECK(err < 1e-9);
}

TEST_CASE("pitch tracks a harmonic tone and z-scores voiced frames") {
  RawAudio a;
  for (int i = 0; i < kSampleRate; ++i) {
    double s = 0.0;
    for (int h = 1; h <= 4; ++h) s += std::sin(2.0 * std::numbers::pi * 220.0 * h * i / kSampleRate) / h;
    a.samples.push_back(0.3 * s);
  }
  const PitchTrack p = extract_f0(a);
  CHECK(p.frames() == frame_count(a.size()));
  int voiced = 0;
  double mean = 0.0;
  for (Eigen::Index t = 0; t < p.frames(); ++t) {
    if (!p.voiced[static_cast<std::size_t>(t)]) {
      CHECK(p.log_f0(t) == 0.0);
      continue;
    }
    ++voiced;
    mean += p.log_f0(t);
    CHECK(p.f0_hz(t) == doctest::Approx(220.0).epsilon(0.05));
  }
  CHECK(voiced > p.frames() / 2);
  CHECK(std::abs(mean / voiced) < 1e-9);
}

TEST_CASE("unvoiced input gives a zero track with the warning flag") {
  RawAudio a;
  a.samples.assign(8000, 0.0);
  const PitchTrack p = extract_f0(a);
  CHECK(p.all_unvoiced);
  CHECK(p.log_f0.isZero(0.0));
}

TEST_CASE("utterance features share one length") {
  RawAudio a;
  a.samples = tone(180.0, 0.7);
  const UtteranceFeatures u = extract_utterance_features(a, FrontendSelector{});
  CHECK(u.content.frames() == u.mel.frames());
  CHECK(u.pitch.frames() == u.mel.frames());
  CHECK(u.content.data == u.mel.data);
}

TEST_CASE("align_lengths truncates to the shortest stream") {
  const auto out = align_lengths({Mat::Ones(2, 7), Mat::Ones(3, 5), Mat::Ones(1, 9)});
  for (const Mat& m : out) CHECK(m.cols() == 5);
  CHECK_THROWS_AS(align_lengths({Mat::Ones(2, 0)}), ValidationError);
}

TEST_CASE("adapter frontend without a registered adapter points at the mel fallback") {
  ModelConfig c = ModelConfig::desk();
  c.frontend = Frontend::Adapter;
  c.adapter_name = "missing";
  try {
    frontend_for(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("--frontend mel") != std::string::npos);
  }
}

TEST_CASE("registered adapters are used for content") {
  struct Fixed : ContentAdapter {
    std::string name() const override { return "fixed4"; }
    int hidden_size() const override { return 4; }
    Mat encode(const RawAudio& a) const override {
      return Mat::Constant(4, frame_count(a.size()) + 2, 0.5);
    }
  };
  register_content_adapter(std::make_shared<Fixed>());
  ModelConfig c = ModelConfig::desk();
  c.frontend = Frontend::Adapter;
  c.adapter_name = "fixed4";
  c.content_dim = 4;
  RawAudio a;
  a.samples = tone(200.0, 0.3);
  const UtteranceFeatures u = extract_utterance_features(a, frontend_for(c));
  CHECK(u.content.channels() == 4);
  CHECK(u.content.frames() == u.mel.frames());
  c.content_dim = 5;
  CHECK_THROWS_AS(frontend_for(c), ConfigError);
}

TEST_CASE("wav write/read round trip and resampling length") {
  const fs::path p = scratch("tone.wav");
  const std::vector<double> x = tone(500.0, 0.25);
  write_wav(p, x);
  const WavData w = read_wav(p);
  CHECK(w.sample_rate == kSampleRate);
  CHECK(w.channels == 1);
  REQUIRE(w.frames() == x.size());
  for (std::size_t i = 0; i < x.size(); i += 97) CHECK(w.interleaved[i] == doctest::Approx(x[i]).epsilon(1e-4).scale(1.0));
  CHECK(resample(x, 16000, 8000).size() == x.size() / 2);
  CHECK(resample(x, 16000, 22050).size() == static_cast<std::size_t>(std::lround(x.size() * 22050.0 / 16000)));
}

TEST_CASE("conditioning downmixes and resamples to 16 kHz") {
  const std::vector<double> mono = tone(300.0, 0.1);
  WavData w;
  w.sample_rate = 44100;
  w.channels = 2;
  for (double v : resample(mono, 16000, 44100)) {
    w.interleaved.push_back(v);
    w.interleaved.push_back(0.0);
  }
  const RawAudio a = condition_audio(w);
  CHECK(a.sample_rate == kSampleRate);
  CHECK(a.size() == doctest::Approx(static_cast<double>(mono.size())).epsilon(0.01));
  double peak = 0.0;
  for (double v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("corrupt wav is rejected") {
  const fs::path p = scratch("bad.wav");
  std::ofstream(p) << "RIFFnope";
  CHECK_THROWS_AS(read_wav(p), IoError);
}

TEST_CASE("npy round trip preserves values bitwise") {
  const fs::path p = scratch("m.npy");
  Mat m(3, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::sin(static_cast<double>(i)) * 1e3;
  write_npy(p, m);
  const Mat r = read_npy(p);
  CHECK(r == m);
}

TEST_CASE("feature cache round trip") {
  const fs::path p = scratch("u.feat");
  RawAudio a;
  a.samples = tone(210.0, 0.4);
  UtteranceFeatures u = extract_utterance_features(a, FrontendSelector{});
  u.utterance_id = "spk_000";
  u.speaker_id = "spk";
  write_features(p, u, "mel");
  const CachedFeatures c = read_features(p);
  CHECK(c.frontend_tag == "mel");
  CHECK(c.features.utterance_id == "spk_000");
  CHECK(c.features.mel.data == u.mel.data);
  CHECK(c.features.pitch.log_f0 == u.pitch.log_f0);
}

TEST_CASE("pure 220 Hz sine: raw f0 within 3 Hz") {
  RawAudio a;
  a.samples = tone(220.0, 1.0);
  const PitchTrack p = extract_f0(a);
  int voiced = 0;
  for (Eigen::Index t = 0; t < p.frames(); ++t)
    if (p.voiced[static_cast<std::size_t>(t)]) {
      ++voiced;
      CHECK(std::abs(p.f0_hz(t) - 220.0) <= 3.0);
    }
  CHECK(voiced > 80);
}

TEST_CASE("110 Hz then 220 Hz shows the octave step") {
  RawAudio a;
  a.samples = tone(110.0, 0.5);
  const auto hi = tone(220.0, 0.5);
  a.samples.insert(a.samples.end(), hi.begin(), hi.end());
  const PitchTrack p = extract_f0(a);
  CHECK(p.f0_hz(20) == doctest::Approx(110.0).epsilon(0.03));
  CHECK(p.f0_hz(80) == doctest::Approx(220.0).epsilon(0.03));
}

TEST_CASE("48 kHz stereo, 3 s conditions to 48000 samples") {
  WavData w;
  w.sample_rate = 48000;
  w.channels = 2;
  w.interleaved.assign(2 * 3 * 48000, 0.1);
  CHECK(condition_audio(w).size() == 48000);
}

TEST_CASE("16 kHz mono passes through unchanged") {
  WavData w;
  w.sample_rate = kSampleRate;
  w.channels = 1;
  w.interleaved = tone(330.0, 0.2);
  CHECK(condition_audio(w).samples == w.interleaved);
}
