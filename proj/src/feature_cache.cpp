#include "triaan/feature_cache.hpp"

#include "triaan/binary_io.hpp"

namespace triaan {

namespace {
constexpr char kMagic[8] = {'T', 'R', 'V', 'C', 'F', 'E', 'A', 'T'};
}

std::string frontend_tag(const ModelConfig& config) {
  return config.frontend == Frontend::Mel ? "mel" : "adapter:" + config.adapter_name;
}

void write_features(const std::filesystem::path& path, const UtteranceFeatures& u,
                    const std::string& tag) {
  u.validate();
  binio::Writer w(path);
  w.bytes(kMagic, 8);
  w.u32(kFeatureCacheVersion);
  w.str(u.utterance_id);
  w.str(u.speaker_id);
  w.str(tag);
  w.matrix(u.content.data);
  w.matrix(u.mel.data);
  Mat pitch(3, u.frames());
  for (Eigen::Index t = 0; t < u.frames(); ++t) {
    pitch(0, t) = u.pitch.log_f0(t);
    pitch(1, t) = u.pitch.voiced[static_cast<std::size_t>(t)] ? 1.0 : 0.0;
    pitch(2, t) = u.pitch.f0_hz(t);
  }
  w.matrix(pitch);
  w.finish();
}

CachedFeatures read_features(const std::filesystem::path& path) {
  binio::Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a feature record: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kFeatureCacheVersion)
    throw IoError("feature record version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kFeatureCacheVersion) + "): " + path.string());
  CachedFeatures c;
  UtteranceFeatures& u = c.features;
  u.utterance_id = r.str();
  u.speaker_id = r.str();
  c.frontend_tag = r.str();
  u.content.data = r.matrix();
  u.mel.data = r.matrix();
  const Mat pitch = r.matrix();
  if (pitch.rows() != 3) throw IoError("malformed pitch block in " + path.string());
  u.pitch.log_f0 = pitch.row(0).transpose();
  u.pitch.f0_hz = pitch.row(2).transpose();
  u.pitch.voiced.resize(static_cast<std::size_t>(pitch.cols()));
  bool any = false;
  for (Eigen::Index t = 0; t < pitch.cols(); ++t) {
    u.pitch.voiced[static_cast<std::size_t>(t)] = pitch(1, t) > 0.5;
    any = any || pitch(1, t) > 0.5;
  }
  u.pitch.all_unvoiced = !any;
  u.validate();
  return c;
}

}  // namespace triaan
