#include "triaan/synth.hpp"

#include "triaan/audio.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace triaan {

namespace {

struct Vowel {
  const char* spelling;
  std::array<double, 3> formants;
};

// Average adult formant frequencies (Hz).
constexpr std::array<Vowel, 5> kVowels = {{{"a", {730, 1090, 2440}},
                                           {"e", {530, 1840, 2480}},
                                           {"i", {270, 2290, 3010}},
                                           {"o", {570, 840, 2410}},
                                           {"u", {300, 870, 2240}}}};
constexpr std::array<const char*, 8> kOnsets = {"b", "d", "k", "l", "m", "n", "s", "t"};

class Resonator {
 public:
  Resonator(double freq, double bandwidth) {
    const double r = std::exp(-std::numbers::pi * bandwidth / kSampleRate);
    b1_ = 2.0 * r * std::cos(2.0 * std::numbers::pi * freq / kSampleRate);
    b2_ = -r * r;
    gain_ = 1.0 - b1_ - b2_;
  }
  double operator()(double x) {
    const double y = gain_ * x + b1_ * y1_ + b2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b1_ = 0, b2_ = 0, gain_ = 1, y1_ = 0, y2_ = 0;
};

}  // namespace

std::vector<SynthSpeaker> make_synth_speakers(int count, std::uint64_t seed) {
  require(count > 0, "make_synth_speakers: count must be positive");
  Rng rng(seed);
  std::vector<SynthSpeaker> out;
  for (int i = 0; i < count; ++i) {
    SynthSpeaker s;
    char id[16];
    std::snprintf(id, sizeof id, "spk%02d", i);
    s.id = id;
    // alternate low and high voices so any subset mixes both
    const bool low = i % 2 == 0;
    s.f0_hz = low ? rng.uniform(85.0, 140.0) : rng.uniform(170.0, 260.0);
    s.formant_scale = low ? rng.uniform(0.88, 1.0) : rng.uniform(1.05, 1.2);
    s.breath = rng.uniform(0.005, 0.04);
    out.push_back(s);
  }
  return out;
}

SynthUtterance synthesize_utterance(const SynthSpeaker& speaker, Rng& rng, double min_seconds,
                                    double max_seconds) {
  require(min_seconds > 0.05 && max_seconds >= min_seconds,
          "synthesize_utterance: invalid duration range");
  const double target = rng.uniform(min_seconds, max_seconds);
  const auto total = static_cast<std::size_t>(target * kSampleRate);
  SynthUtterance u;
  u.samples.assign(total, 0.0);

  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.05, 0.12) * kSampleRate);
  double phase = 0.0;
  std::string word;
  while (pos < total) {
    const Vowel& v = kVowels[rng.below(kVowels.size())];
    const char* onset = kOnsets[rng.below(kOnsets.size())];
    const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.24) * kSampleRate);
    const std::size_t end = std::min(total, pos + len);
    if (end - pos < static_cast<std::size_t>(0.05 * kSampleRate)) break;
    word += onset;
    word += v.spelling;

    std::array<Resonator, 3> tract = {
        Resonator(v.formants[0] * speaker.formant_scale, 80.0),
        Resonator(v.formants[1] * speaker.formant_scale, 100.0),
        Resonator(v.formants[2] * speaker.formant_scale, 140.0)};
    const double f0_start = speaker.f0_hz * rng.uniform(0.92, 1.08);
    const double f0_end = f0_start * rng.uniform(0.85, 1.05);
    const double n = static_cast<double>(end - pos);
    for (std::size_t i = pos; i < end; ++i) {
      const double a = static_cast<double>(i - pos) / n;
      const double f0 = f0_start + (f0_end - f0_start) * a;
      phase += f0 / kSampleRate;
      double excitation = 0.0;
      if (phase >= 1.0) {
        phase -= 1.0;
        excitation = 1.0;
      }
      excitation += speaker.breath * rng.normal();
      double y = 0.0;
      for (auto& r : tract) y += r(excitation);
      const double env = std::sin(std::numbers::pi * a);
      u.samples[i] = 0.6 * env * y;
    }
    pos = end;
    if (rng.uniform() < 0.35 || pos >= total) {
      if (!u.transcript.empty()) u.transcript += ' ';
      u.transcript += word;
      word.clear();
      pos += static_cast<std::size_t>(rng.uniform(0.04, 0.1) * kSampleRate);
    }
  }
  if (!word.empty()) {
    if (!u.transcript.empty()) u.transcript += ' ';
    u.transcript += word;
  }
  double peak = 0.0;
  for (double s : u.samples) peak = std::max(peak, std::abs(s));
  if (peak > 0.0)
    for (double& s : u.samples) s *= 0.8 / peak;
  return u;
}

void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpusConfig& config) {
  require(config.utterances_per_speaker > 0, "write_synth_corpus: utterances must be positive");
  const auto speakers = make_synth_speakers(config.speakers, config.seed);
  Rng rng(config.seed ^ 0x5EEDC0DEULL);
  for (const SynthSpeaker& s : speakers) {
    const auto sdir = dir / s.id;
    std::filesystem::create_directories(sdir);
    for (int i = 0; i < config.utterances_per_speaker; ++i) {
      char name[48];
      std::snprintf(name, sizeof name, "%s_%03d", s.id.c_str(), i);
      const SynthUtterance u =
          synthesize_utterance(s, rng, config.min_seconds, config.max_seconds);
      write_wav(sdir / (std::string(name) + ".wav"), u.samples);
      std::ofstream txt(sdir / (std::string(name) + ".txt"));
      txt << u.transcript << '\n';
      if (!txt) throw IoError("cannot write transcript in " + sdir.string());
    }
  }
}

}  // namespace triaan
