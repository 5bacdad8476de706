#include "triaan/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace triaan {

void RawAudio::validate() const {
  require(!samples.empty(), "audio: no samples");
  require(sample_rate == kSampleRate,
          "audio: sample rate " + std::to_string(sample_rate) + " Hz, expected 16000 Hz");
  for (double s : samples) require(std::isfinite(s), "audio: non-finite sample");
}

namespace {

std::uint32_t u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = " in '" + path.string() + "'";
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file" + where);

  int format = -1, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw IoError("truncated fmt chunk" + where);
      format = u16le(bytes.data() + body);
      channels = u16le(bytes.data() + body + 2);
      rate = static_cast<int>(u32le(bytes.data() + body + 4));
      bits = u16le(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        if (size < 26) throw IoError("truncated extensible fmt chunk" + where);
        format = u16le(bytes.data() + body + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1u);
  }
  if (format < 0) throw IoError("missing fmt chunk" + where);
  if (!data) throw IoError("missing data chunk" + where);
  if (channels <= 0 || rate <= 0) throw IoError("invalid channel count or rate" + where);

  const int width = bits / 8;
  const bool pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == 3 && (bits == 32 || bits == 64);
  if (!pcm && !flt)
    throw IoError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bit)" + where);

  WavData wav;
  wav.sample_rate = rate;
  wav.channels = channels;
  const std::size_t count = data_size / static_cast<std::size_t>(width);
  wav.interleaved.resize(count - count % static_cast<std::size_t>(channels));
  for (std::size_t i = 0; i < wav.interleaved.size(); ++i) {
    const unsigned char* p = data + i * static_cast<std::size_t>(width);
    double v = 0.0;
    if (flt && bits == 32) {
      float f;
      std::uint32_t raw = u32le(p);
      std::memcpy(&f, &raw, 4);
      v = f;
    } else if (flt) {
      std::uint64_t raw = static_cast<std::uint64_t>(u32le(p)) |
                          (static_cast<std::uint64_t>(u32le(p + 4)) << 32);
      std::memcpy(&v, &raw, 8);
    } else if (bits == 8) {
      v = (static_cast<int>(p[0]) - 128) / 128.0;
    } else if (bits == 16) {
      v = static_cast<std::int16_t>(u16le(p)) / 32768.0;
    } else if (bits == 24) {
      std::int32_t s = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (s & 0x800000) s -= 0x1000000;
      v = s / 8388608.0;
    } else {
      v = static_cast<std::int32_t>(u32le(p)) / 2147483648.0;
    }
    wav.interleaved[i] = v;
  }
  return wav;
}

void write_wav(const std::filesystem::path& path, const std::vector<double>& samples,
               int sample_rate) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(std::isfinite(s) ? s : 0.0, -1.0, 1.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<double> resample(const std::vector<double>& x, int from_rate, int to_rate) {
  require(from_rate > 0 && to_rate > 0, "resample: rates must be positive");
  if (from_rate == to_rate || x.empty()) return x;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio) * 0.95;  // normalized to input Nyquist
  constexpr double kZeros = 16.0;
  const double half_width = kZeros / cutoff;  // in input samples
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  const auto n_in = static_cast<long long>(x.size());
  std::vector<double> y(n_out, 0.0);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long long lo = std::max<long long>(0, static_cast<long long>(std::ceil(t - half_width)));
    const long long hi = std::min<long long>(n_in - 1, static_cast<long long>(std::floor(t + half_width)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double u = t - static_cast<double>(k);
      const double arg = std::numbers::pi * cutoff * u;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double win = 0.5 + 0.5 * std::cos(std::numbers::pi * u / half_width);
      acc += x[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    y[n] = acc;
  }
  return y;
}

RawAudio condition_audio(const WavData& wav) {
  require(wav.channels > 0 && wav.frames() > 0, "audio: zero-length input");
  std::vector<double> mono(wav.frames());
  for (std::size_t i = 0; i < mono.size(); ++i) {
    double acc = 0.0;
    for (int c = 0; c < wav.channels; ++c)
      acc += wav.interleaved[i * static_cast<std::size_t>(wav.channels) + c];
    mono[i] = acc / wav.channels;
  }
  RawAudio audio;
  audio.samples = resample(mono, wav.sample_rate, kSampleRate);
  require(!audio.samples.empty(), "audio: zero-length after resampling");
  double peak = 0.0;
  for (double s : audio.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0)
    for (double& s : audio.samples) s /= peak;
  audio.validate();
  return audio;
}

RawAudio load_audio(const std::filesystem::path& path) { return condition_audio(read_wav(path)); }

}  // namespace triaan
