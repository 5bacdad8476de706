#pragma once

// Log-mel to waveform synthesis. Griffin-Lim is bundled; a neural vocoder can
// be plugged in through an external command.

#include "triaan/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace triaan {

/// Linear magnitude (201 x T) recovered from a log-mel power spectrogram via
/// the filterbank pseudo-inverse, clamped at zero.
Mat mel_to_magnitude(const Mat& log_mel);

struct GriffinLimConfig {
  int iterations = 32;
  std::uint64_t seed = 0;
};

/// Phase reconstruction for a 201 x T magnitude. Output has (T - 1) * hop
/// samples. Requires T >= 3.
std::vector<double> griffin_lim(const Mat& magnitude, const GriffinLimConfig& config = {});

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual std::string name() const = 0;
  /// log_mel: 80 x T. Returns 16 kHz samples.
  virtual std::vector<double> synthesize(const Mat& log_mel) const = 0;
};

class GriffinLimVocoder : public Vocoder {
 public:
  explicit GriffinLimVocoder(GriffinLimConfig config = {}) : config_(config) {}
  std::string name() const override { return "griffin_lim"; }
  std::vector<double> synthesize(const Mat& log_mel) const override;

 private:
  GriffinLimConfig config_;
};

/// Runs "<program> {mel} {wav}": the mel is written as an 80 x T float64 .npy,
/// the program must write a WAV which is loaded and conditioned to 16 kHz.
class CommandVocoder : public Vocoder {
 public:
  explicit CommandVocoder(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "adapter"; }
  std::vector<double> synthesize(const Mat& log_mel) const override;

 private:
  std::string command_;
};

/// kind: "griffin_lim" or "adapter" (needs a non-empty command).
std::unique_ptr<Vocoder> make_vocoder(const std::string& kind, const std::string& command,
                                      const GriffinLimConfig& gl = {});

}  // namespace triaan
