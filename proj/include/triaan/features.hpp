#pragma once

// Model inputs derived from audio: content features, pitch track and log mel
// spectrogram, all at a 10 ms frame rate and aligned to one length.

#include "triaan/audio.hpp"
#include "triaan/model.hpp"

#include <memory>
#include <string>
#include <vector>

namespace triaan {

inline constexpr int kFftSize = 400;  // 25 ms window
inline constexpr int kHopSize = 160;  // 10 ms hop
inline constexpr int kMelBins = 80;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kFrameRate = static_cast<double>(kSampleRate) / kHopSize;

/// C x T feature map at kFrameRate.
struct FeatureSequence {
  Mat data;
  double frame_rate = kFrameRate;

  Eigen::Index channels() const { return data.rows(); }
  Eigen::Index frames() const { return data.cols(); }
};

/// 80 x T log-mel.
struct MelSpectrogram {
  Mat data;

  Eigen::Index frames() const { return data.cols(); }
};

struct PitchTrack {
  Vec log_f0;                   // z-scored log f0 on voiced frames, 0 elsewhere
  std::vector<bool> voiced;
  Vec f0_hz;                    // raw estimate, 0 where unvoiced
  bool all_unvoiced = false;    // warning flag, not an error

  Eigen::Index frames() const { return log_f0.size(); }
  void truncate(Eigen::Index frames);
};

/// Number of frames produced for `samples` input samples (center padding).
inline Eigen::Index frame_count(std::size_t samples) {
  return static_cast<Eigen::Index>(samples / kHopSize) + 1;
}

// --- spectral analysis -------------------------------------------------------

/// Periodic Hann window of kFftSize points.
const Vec& hann_window();

/// 80 x 201 HTK-scale triangular filterbank spanning 0 .. 8 kHz (no area norm).
const Mat& mel_filterbank();

struct Spectrum {
  Mat real;  // 201 x T
  Mat imag;  // 201 x T
};

/// Reflect-padded, Hann-windowed STFT with kFftSize/kHopSize.
Spectrum stft(const std::vector<double>& samples);

/// Overlap-add inverse of stft() for `length` output samples.
std::vector<double> istft(const Spectrum& spec, std::size_t length);

MelSpectrogram extract_mel(const RawAudio& audio);

// --- pitch ---------------------------------------------------------------------

struct PitchConfig {
  double f0_floor = 71.0;
  double f0_ceil = 800.0;
  double channels_in_octave = 2.0;
  double analysis_rate = 4000.0;
  double max_relative_deviation = 0.1;  // voicing threshold on candidate spread
  double silence_rms = 1e-4;
  int min_voiced_run = 3;
};

/// DIO-style estimate: raw f0 in Hz per 10 ms frame, 0 where unvoiced.
Vec estimate_f0_hz(const RawAudio& audio, const PitchConfig& config = {});

/// Log f0 on voiced frames, z-scored over voiced frames, 0 on unvoiced ones.
PitchTrack extract_f0(const RawAudio& audio, const PitchConfig& config = {});

/// Builds a PitchTrack from raw per-frame f0 (0 = unvoiced).
PitchTrack pitch_from_f0(const Vec& f0_hz);

// --- content features ----------------------------------------------------------

/// External pretrained content encoder (e.g. a CPC model) producing H x T
/// features at 100 Hz.
class ContentAdapter {
 public:
  virtual ~ContentAdapter() = default;
  virtual std::string name() const = 0;
  virtual int hidden_size() const = 0;
  virtual Mat encode(const RawAudio& audio) const = 0;
};

/// Runs `command` with {wav} and {npy} substituted; the program writes an
/// H x T float64 .npy for the 16 kHz mono wav.
class CommandContentAdapter : public ContentAdapter {
 public:
  CommandContentAdapter(std::string command, int hidden_size)
      : command_(std::move(command)), hidden_(hidden_size) {}
  std::string name() const override { return "command:" + command_; }
  int hidden_size() const override { return hidden_; }
  Mat encode(const RawAudio& audio) const override;

 private:
  std::string command_;
  int hidden_;
};

struct FrontendSelector {
  Frontend kind = Frontend::Mel;
  std::shared_ptr<const ContentAdapter> adapter;  // required for Frontend::Adapter
};

FeatureSequence extract_content_features(const RawAudio& audio, const FrontendSelector& frontend);

/// Process-wide adapter lookup for the CLI and bindings.
void register_content_adapter(std::shared_ptr<const ContentAdapter> adapter);
std::shared_ptr<const ContentAdapter> find_content_adapter(const std::string& name);
/// Resolves a selector for a model config. Adapter names of the form
/// "command:<prog {wav} {npy}>" resolve to a CommandContentAdapter. Throws
/// ConfigError when the adapter is not available.
FrontendSelector frontend_for(const ModelConfig& config);

// --- alignment -----------------------------------------------------------------

/// Truncates every C x T stream to the shortest T.
std::vector<Mat> align_lengths(std::vector<Mat> streams);

struct UtteranceFeatures {
  std::string utterance_id;
  std::string speaker_id;
  FeatureSequence content;
  MelSpectrogram mel;
  PitchTrack pitch;

  Eigen::Index frames() const { return mel.frames(); }
  /// Asserts all three streams share one length.
  void validate() const;
};

/// Extracts and aligns all three streams of one utterance.
UtteranceFeatures extract_utterance_features(const RawAudio& audio,
                                             const FrontendSelector& frontend);

}  // namespace triaan
