#include "triaan/checkpoint.hpp"

#include "triaan/binary_io.hpp"
#include "triaan/feature_cache.hpp"

#include <chrono>
#include <ctime>

namespace triaan {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'T', 'R', 'I', 'A', 'A', 'N', 'C', 'K'};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto shapes = parameter_shapes(ckpt.config);
  require(shapes.size() == ckpt.weights.size(), "save_checkpoint: weights do not match config");
  const bool has_moments = !ckpt.optimizer.empty();
  if (has_moments)
    require(ckpt.optimizer.m.size() == shapes.size() && ckpt.optimizer.v.size() == shapes.size(),
            "save_checkpoint: optimizer state does not match weights");

  json tensors = json::array();
  for (std::size_t i = 0; i < ckpt.weights.size(); ++i)
    tensors.push_back({{"name", ckpt.weights.name(i)},
                       {"rows", ckpt.weights.value(i).rows()},
                       {"cols", ckpt.weights.value(i).cols()}});
  json header = {
      {"format_version", kCheckpointVersion},
      {"config", ckpt.config},
      {"step", ckpt.step},
      {"metadata",
       {{"created", ckpt.metadata.created},
        {"code_version", ckpt.metadata.code_version},
        {"frontend", ckpt.metadata.frontend.empty() ? frontend_tag(ckpt.config)
                                                    : ckpt.metadata.frontend}}},
      {"tensors", tensors},
      {"optimizer", {{"kind", "adam"}, {"step", ckpt.optimizer.step}, {"moments", has_moments}}},
      {"train_config", ckpt.train_config},
  };
  const std::string text = header.dump();

  binio::Writer w(path);
  w.bytes(kMagic, 8);
  w.u32(kCheckpointVersion);
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  auto payload = [&w](const Mat& m) {
    w.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  };
  for (std::size_t i = 0; i < ckpt.weights.size(); ++i) payload(ckpt.weights.value(i));
  if (has_moments) {
    for (const Mat& m : ckpt.optimizer.m) payload(m);
    for (const Mat& v : ckpt.optimizer.v) payload(v);
  }
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  binio::Reader r(path);
  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(kCheckpointVersion) + "): " + path.string());
  const std::uint64_t len = r.u64();
  std::string text(len, '\0');
  r.bytes(text.data(), len);

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }

  Checkpoint c;
  c.config = header.at("config").get<ModelConfig>();
  c.step = header.at("step").get<std::uint64_t>();
  const json& meta = header.at("metadata");
  c.metadata.created = meta.value("created", "");
  c.metadata.code_version = meta.value("code_version", "");
  c.metadata.frontend = meta.value("frontend", "");
  c.train_config = header.value("train_config", json());

  const auto shapes = parameter_shapes(c.config);
  const json& table = header.at("tensors");
  if (table.size() != shapes.size())
    throw ValidationError("checkpoint " + path.string() + " holds " +
                          std::to_string(table.size()) + " tensors, its config implies " +
                          std::to_string(shapes.size()));
  auto read_tensor = [&r](Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    r.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
  };
  std::vector<std::pair<std::string, Mat>> named;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const json& t = table[i];
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (name != shapes[i].name || rows != shapes[i].rows || cols != shapes[i].cols)
      throw ValidationError("checkpoint tensor '" + name + "' (" + std::to_string(rows) + " x " +
                            std::to_string(cols) + ") does not match config entry '" +
                            shapes[i].name + "' (" + std::to_string(shapes[i].rows) + " x " +
                            std::to_string(shapes[i].cols) + ")");
    named.emplace_back(name, read_tensor(rows, cols));
  }
  c.weights = Weights(c.config, std::move(named));

  const json& opt = header.at("optimizer");
  c.optimizer.step = opt.value("step", std::uint64_t{0});
  if (opt.value("moments", false)) {
    for (std::size_t i = 0; i < shapes.size(); ++i)
      c.optimizer.m.push_back(read_tensor(shapes[i].rows, shapes[i].cols));
    for (std::size_t i = 0; i < shapes.size(); ++i)
      c.optimizer.v.push_back(read_tensor(shapes[i].rows, shapes[i].cols));
  }
  if (!r.at_end()) throw IoError("trailing bytes in checkpoint " + path.string());
  return c;
}

}  // namespace triaan
