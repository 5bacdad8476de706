#pragma once

#include "triaan/common.hpp"

#include <filesystem>
#include <vector>

namespace triaan {

inline constexpr int kSampleRate = 16000;

/// Mono waveform in [-1, 1] at kSampleRate.
struct RawAudio {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
  void validate() const;
};

/// Interleaved-channel PCM as stored in a WAV file.
struct WavData {
  int sample_rate = 0;
  int channels = 0;
  std::vector<double> interleaved;  // in [-1, 1]

  std::size_t frames() const { return channels ? interleaved.size() / channels : 0; }
};

/// Reads RIFF/WAVE with PCM 8/16/24/32-bit integer or 32/64-bit float data.
WavData read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate = kSampleRate);

/// Band-limited resampling (windowed sinc). Output length round(n * to / from).
std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate);

/// Downmix, resample to 16 kHz and peak-normalize when the peak exceeds 1.
RawAudio load_audio(const std::filesystem::path& path);

/// Same conditioning applied to in-memory PCM.
RawAudio condition_audio(const WavData& wav);

}  // namespace triaan
