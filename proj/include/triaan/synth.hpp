#pragma once

// Synthetic speech-like corpus: per-speaker pitch and vocal-tract scale applied
// to a source-filter vowel model. Used by tests and demos so that no download
// is needed.

#include "triaan/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace triaan {

struct SynthSpeaker {
  std::string id;
  double f0_hz = 120.0;
  double formant_scale = 1.0;
  double breath = 0.02;  // aspiration noise level
};

struct SynthUtterance {
  std::vector<double> samples;  // 16 kHz
  std::string transcript;
};

/// Speakers with pitch and formant scale spread deterministically by seed.
std::vector<SynthSpeaker> make_synth_speakers(int count, std::uint64_t seed);

/// Syllable sequence voiced by `speaker`; same rng state gives the same audio.
SynthUtterance synthesize_utterance(const SynthSpeaker& speaker, Rng& rng,
                                    double min_seconds = 1.0, double max_seconds = 2.0);

struct SynthCorpusConfig {
  int speakers = 4;
  int utterances_per_speaker = 5;
  double min_seconds = 1.0;
  double max_seconds = 2.0;
  std::uint64_t seed = 0;
};

/// Writes <dir>/<speaker>/<speaker>_<nnn>.wav plus a .txt transcript each.
void write_synth_corpus(const std::filesystem::path& dir, const SynthCorpusConfig& config);

}  // namespace triaan
