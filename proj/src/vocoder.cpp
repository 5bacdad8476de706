#include "triaan/vocoder.hpp"

#include "triaan/audio.hpp"
#include "triaan/features.hpp"
#include "triaan/npy.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>

#include <unistd.h>

namespace triaan {

namespace {

const Mat& filterbank_pinv() {
  static const Mat pinv = mel_filterbank().completeOrthogonalDecomposition().pseudoInverse();
  return pinv;
}

}  // namespace

Mat mel_to_magnitude(const Mat& log_mel) {
  require(log_mel.rows() == kMelBins, "mel_to_magnitude: expected 80 mel bins, got " +
                                          shape_str(log_mel));
  const Mat power = (filterbank_pinv() * log_mel.array().exp().matrix()).cwiseMax(0.0);
  return power.array().sqrt();
}

std::vector<double> griffin_lim(const Mat& magnitude, const GriffinLimConfig& config) {
  require(magnitude.rows() == kFftSize / 2 + 1, "griffin_lim: magnitude must have 201 rows");
  require(magnitude.cols() >= 3, "griffin_lim: needs at least 3 frames");
  require(config.iterations >= 0, "griffin_lim: negative iteration count");
  const std::size_t length = static_cast<std::size_t>((magnitude.cols() - 1) * kHopSize);

  Rng rng(config.seed);
  const Mat phase = rng.uniform_matrix(magnitude.rows(), magnitude.cols(), 0.0,
                                       2.0 * std::numbers::pi);
  Spectrum spec{magnitude.cwiseProduct(phase.array().cos().matrix()),
                magnitude.cwiseProduct(phase.array().sin().matrix())};
  std::vector<double> x = istft(spec, length);
  for (int it = 0; it < config.iterations; ++it) {
    const Spectrum est = stft(x);
    const Mat norm = (est.real.array().square() + est.imag.array().square()).sqrt();
    for (Eigen::Index t = 0; t < magnitude.cols(); ++t)
      for (Eigen::Index f = 0; f < magnitude.rows(); ++f) {
        const double n = norm(f, t);
        // undefined phase keeps the zero-phase direction
        const double c = n > 1e-12 ? est.real(f, t) / n : 1.0;
        const double s = n > 1e-12 ? est.imag(f, t) / n : 0.0;
        spec.real(f, t) = magnitude(f, t) * c;
        spec.imag(f, t) = magnitude(f, t) * s;
      }
    x = istft(spec, length);
  }
  return x;
}

std::vector<double> GriffinLimVocoder::synthesize(const Mat& log_mel) const {
  return griffin_lim(mel_to_magnitude(log_mel), config_);
}

std::vector<double> CommandVocoder::synthesize(const Mat& log_mel) const {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string stem = "triaan_voc_" + std::to_string(::getpid());
  const auto mel_path = dir / (stem + ".npy");
  const auto wav_path = dir / (stem + ".wav");
  write_npy(mel_path, log_mel);

  std::string cmd = command_;
  auto substitute = [&cmd](const std::string& key, const std::filesystem::path& p) {
    const auto pos = cmd.find(key);
    if (pos == std::string::npos) return false;
    cmd.replace(pos, key.size(), "'" + p.string() + "'");
    return true;
  };
  if (!substitute("{mel}", mel_path) || !substitute("{wav}", wav_path)) {
    std::filesystem::remove(mel_path);
    throw ConfigError("vocoder command must contain {mel} and {wav}: " + command_);
  }
  const int status = std::system(cmd.c_str());
  std::filesystem::remove(mel_path);
  if (status != 0) throw ConfigError("vocoder command failed (status " + std::to_string(status) +
                                     "): " + cmd);
  RawAudio audio = load_audio(wav_path);
  std::filesystem::remove(wav_path);
  return std::move(audio.samples);
}

std::unique_ptr<Vocoder> make_vocoder(const std::string& kind, const std::string& command,
                                      const GriffinLimConfig& gl) {
  if (kind == "griffin_lim") return std::make_unique<GriffinLimVocoder>(gl);
  if (kind == "adapter") {
    if (command.empty())
      throw ConfigError(
          "vocoder 'adapter' needs a command (vocoder_command: \"prog {mel} {wav}\"); "
          "use --vocoder griffin_lim for the bundled fallback");
    return std::make_unique<CommandVocoder>(command);
  }
  throw ConfigError("vocoder must be 'griffin_lim' or 'adapter', got '" + kind + "'");
}

}  // namespace triaan
