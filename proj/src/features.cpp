#include "triaan/features.hpp"

#include "triaan/audio.hpp"
#include "triaan/npy.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace triaan {

namespace {

constexpr int kBins = kFftSize / 2 + 1;

struct DftTables {
  Mat fwd_cos, fwd_sin;  // kBins x kFftSize
  Mat inv_cos, inv_sin;  // kFftSize x kBins, including 1/N and the one-sided weights

  DftTables() : fwd_cos(kBins, kFftSize), fwd_sin(kBins, kFftSize),
                inv_cos(kFftSize, kBins), inv_sin(kFftSize, kBins) {
    for (int k = 0; k < kBins; ++k) {
      const double weight = (k == 0 || k == kFftSize / 2) ? 1.0 : 2.0;
      for (int n = 0; n < kFftSize; ++n) {
        // Reduce the phase index mod N so the tables are exact at large k*n.
        const double phase = 2.0 * std::numbers::pi * static_cast<double>((k * n) % kFftSize) /
                             kFftSize;
        fwd_cos(k, n) = std::cos(phase);
        fwd_sin(k, n) = std::sin(phase);
        inv_cos(n, k) = weight * std::cos(phase) / kFftSize;
        inv_sin(n, k) = weight * std::sin(phase) / kFftSize;
      }
    }
  }
};

const DftTables& dft() {
  static const DftTables tables;
  return tables;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

const Vec& hann_window() {
  static const Vec w = [] {
    Vec v(kFftSize);
    for (int n = 0; n < kFftSize; ++n)
      v(n) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFftSize);
    return v;
  }();
  return w;
}

const Mat& mel_filterbank() {
  static const Mat fb = [] {
    Mat m = Mat::Zero(kMelBins, kBins);
    const double lo = hz_to_mel(0.0);
    const double hi = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kMelBins + 2);
    for (int i = 0; i < kMelBins + 2; ++i)
      edges[i] = mel_to_hz(lo + (hi - lo) * i / (kMelBins + 1));
    for (int b = 0; b < kMelBins; ++b) {
      for (int k = 0; k < kBins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        const double up = (f - edges[b]) / (edges[b + 1] - edges[b]);
        const double down = (edges[b + 2] - f) / (edges[b + 2] - edges[b + 1]);
        m(b, k) = std::max(0.0, std::min(up, down));
      }
    }
    return m;
  }();
  return fb;
}

Spectrum stft(const std::vector<double>& samples) {
  const auto n = static_cast<long long>(samples.size());
  const int pad = kFftSize / 2;
  require(n > pad, "stft: signal of " + std::to_string(n) + " samples too short for padding");
  auto at = [&](long long i) {
    // reflect padding without repeating the edge sample
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return samples[static_cast<std::size_t>(i)];
  };
  const Eigen::Index frames = frame_count(samples.size());
  Mat framed(kFftSize, frames);
  const Vec& w = hann_window();
  for (Eigen::Index t = 0; t < frames; ++t)
    for (int i = 0; i < kFftSize; ++i)
      framed(i, t) = w(i) * at(t * kHopSize + i - pad);
  Spectrum s;
  s.real = dft().fwd_cos * framed;
  s.imag = -(dft().fwd_sin * framed);
  return s;
}

std::vector<double> istft(const Spectrum& spec, std::size_t length) {
  require(spec.real.rows() == kBins && spec.imag.rows() == kBins &&
              spec.real.cols() == spec.imag.cols(),
          "istft: spectrum shape");
  const Eigen::Index frames = spec.real.cols();
  const Mat framed = dft().inv_cos * spec.real - dft().inv_sin * spec.imag;
  const std::size_t padded = static_cast<std::size_t>((frames - 1) * kHopSize + kFftSize);
  std::vector<double> acc(padded, 0.0), norm(padded, 0.0);
  const Vec& w = hann_window();
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int i = 0; i < kFftSize; ++i) {
      const std::size_t pos = static_cast<std::size_t>(t * kHopSize + i);
      acc[pos] += w(i) * framed(i, t);
      norm[pos] += w(i) * w(i);
    }
  }
  std::vector<double> out(length, 0.0);
  const std::size_t pad = kFftSize / 2;
  for (std::size_t i = 0; i < length && i + pad < padded; ++i) {
    const double d = norm[i + pad];
    out[i] = d > 1e-8 ? acc[i + pad] / d : 0.0;
  }
  return out;
}

MelSpectrogram extract_mel(const RawAudio& audio) {
  audio.validate();
  require(audio.size() >= static_cast<std::size_t>(kFftSize),
          "extract_mel: audio of " + std::to_string(audio.size()) +
              " samples is shorter than one 400-sample window");
  const Spectrum s = stft(audio.samples);
  const Mat power = s.real.array().square() + s.imag.array().square();
  MelSpectrogram mel;
  mel.data = (mel_filterbank() * power).cwiseMax(kLogFloor).array().log();
  return mel;
}

void PitchTrack::truncate(Eigen::Index frames) {
  require(frames <= log_f0.size(), "PitchTrack::truncate: cannot extend");
  log_f0.conservativeResize(frames);
  f0_hz.conservativeResize(frames);
  voiced.resize(static_cast<std::size_t>(frames));
}

FeatureSequence extract_content_features(const RawAudio& audio, const FrontendSelector& frontend) {
  FeatureSequence f;
  if (frontend.kind == Frontend::Mel) {
    f.data = extract_mel(audio).data;
    return f;
  }
  if (!frontend.adapter)
    throw ConfigError(
        "content adapter frontend requested but no adapter is available; use the mel "
        "fallback frontend (--frontend mel) or register an adapter");
  audio.validate();
  f.data = frontend.adapter->encode(audio);
  if (f.data.rows() != frontend.adapter->hidden_size())
    throw ValidationError("content adapter '" + frontend.adapter->name() + "' returned " +
                          std::to_string(f.data.rows()) + " channels, declared " +
                          std::to_string(frontend.adapter->hidden_size()));
  require(f.data.cols() >= 1 && f.data.allFinite(),
          "content adapter '" + frontend.adapter->name() + "' returned empty or non-finite features");
  return f;
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, std::shared_ptr<const ContentAdapter>>& registry() {
  static std::map<std::string, std::shared_ptr<const ContentAdapter>> r;
  return r;
}

}  // namespace

Mat CommandContentAdapter::encode(const RawAudio& audio) const {
  static std::atomic<unsigned> counter{0};
  const auto dir = std::filesystem::temp_directory_path();
  const std::string stem =
      "triaan_content_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
  const auto wav_path = dir / (stem + ".wav");
  const auto npy_path = dir / (stem + ".npy");
  std::string cmd = command_;
  for (const auto& [key, path] : {std::pair{"{wav}", wav_path}, std::pair{"{npy}", npy_path}}) {
    const auto pos = cmd.find(key);
    if (pos == std::string::npos)
      throw ConfigError("content adapter command must contain {wav} and {npy}: " + command_);
    cmd.replace(pos, std::string(key).size(), "'" + path.string() + "'");
  }
  write_wav(wav_path, audio.samples, kSampleRate);
  const int status = std::system(cmd.c_str());
  std::filesystem::remove(wav_path);
  if (status != 0)
    throw ConfigError("content adapter command failed (status " + std::to_string(status) +
                      "): " + cmd);
  Mat h = read_npy(npy_path);
  std::filesystem::remove(npy_path);
  if (h.rows() != hidden_)
    throw ValidationError("content adapter returned " + shape_str(h) + ", expected H=" +
                          std::to_string(hidden_));
  return h;
}

void register_content_adapter(std::shared_ptr<const ContentAdapter> adapter) {
  require(adapter != nullptr, "register_content_adapter: null adapter");
  std::lock_guard lock(registry_mutex());
  registry()[adapter->name()] = std::move(adapter);
}

std::shared_ptr<const ContentAdapter> find_content_adapter(const std::string& name) {
  std::lock_guard lock(registry_mutex());
  auto it = registry().find(name);
  return it == registry().end() ? nullptr : it->second;
}

FrontendSelector frontend_for(const ModelConfig& config) {
  FrontendSelector s;
  s.kind = config.frontend;
  if (s.kind == Frontend::Adapter) {
    s.adapter = find_content_adapter(config.adapter_name);
    if (!s.adapter && config.adapter_name.rfind("command:", 0) == 0)
      s.adapter = std::make_shared<CommandContentAdapter>(config.adapter_name.substr(8),
                                                          config.content_dim);
    if (!s.adapter)
      throw ConfigError("content adapter '" + config.adapter_name +
                        "' is not available; use the mel fallback frontend (--frontend mel)");
    if (s.adapter->hidden_size() != config.content_dim)
      throw ConfigError("content adapter '" + config.adapter_name + "' has H=" +
                        std::to_string(s.adapter->hidden_size()) + " but the model expects H=" +
                        std::to_string(config.content_dim));
  }
  return s;
}

std::vector<Mat> align_lengths(std::vector<Mat> streams) {
  require(!streams.empty(), "align_lengths: no streams");
  Eigen::Index shortest = streams.front().cols();
  for (std::size_t i = 0; i < streams.size(); ++i) {
    require(streams[i].cols() > 0, "align_lengths: stream " + std::to_string(i) + " is empty");
    shortest = std::min(shortest, streams[i].cols());
  }
  for (Mat& s : streams)
    if (s.cols() != shortest) s = s.leftCols(shortest).eval();
  return streams;
}

void UtteranceFeatures::validate() const {
  const auto t = mel.frames();
  require(t >= 1, "features: empty utterance");
  require(content.frames() == t && pitch.frames() == t &&
              pitch.voiced.size() == static_cast<std::size_t>(t),
          "features: stream lengths differ (content " + std::to_string(content.frames()) +
              ", mel " + std::to_string(t) + ", pitch " + std::to_string(pitch.frames()) + ")");
}

UtteranceFeatures extract_utterance_features(const RawAudio& audio,
                                             const FrontendSelector& frontend) {
  UtteranceFeatures u;
  u.mel = extract_mel(audio);
  const Vec f0 = estimate_f0_hz(audio);
  u.content = frontend.kind == Frontend::Mel ? FeatureSequence{u.mel.data, kFrameRate}
                                             : extract_content_features(audio, frontend);
  Mat f0_row = f0.transpose();
  auto aligned = align_lengths({u.content.data, u.mel.data, f0_row});
  u.content.data = std::move(aligned[0]);
  u.mel.data = std::move(aligned[1]);
  // z-scoring runs after truncation so the statistics describe the aligned track
  u.pitch = pitch_from_f0(aligned[2].row(0).transpose());
  u.validate();
  return u;
}

}  // namespace triaan
