#include "triaan/model.hpp"

#include <cmath>
#include <limits>

namespace triaan {

using nlohmann::json;

std::string to_string(PyramidPairing p) { return p == PyramidPairing::Mirror ? "mirror" : "same"; }
std::string to_string(MultiTargetMode m) {
  return m == MultiTargetMode::Concat ? "concat" : "average";
}
std::string to_string(Frontend f) { return f == Frontend::Mel ? "mel" : "adapter"; }

PyramidPairing pyramid_pairing_from_string(const std::string& s) {
  if (s == "mirror") return PyramidPairing::Mirror;
  if (s == "same") return PyramidPairing::Same;
  throw ConfigError("pyramid_pairing must be 'mirror' or 'same', got '" + s + "'");
}

MultiTargetMode multi_target_from_string(const std::string& s) {
  if (s == "concat") return MultiTargetMode::Concat;
  if (s == "average") return MultiTargetMode::Average;
  throw ConfigError("multi_target must be 'concat' or 'average', got '" + s + "'");
}

Frontend frontend_from_string(const std::string& s) {
  if (s == "mel") return Frontend::Mel;
  if (s == "adapter") return Frontend::Adapter;
  throw ConfigError("frontend must be 'mel' or 'adapter', got '" + s + "'");
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("ModelConfig.") + name + " must be positive");
  };
  positive(content_dim, "content_dim");
  positive(channels, "channels");
  positive(layers, "layers");
  positive(mel_bins, "mel_bins");
  positive(gru_layers_bottleneck, "gru_layers_bottleneck");
  positive(gru_layers_refine, "gru_layers_refine");
  positive(postnet.layers, "postnet.layers");
  positive(postnet.channels, "postnet.channels");
  if (conv_kernel % 2 == 0 || conv_kernel < 1 || input_kernel % 2 == 0 || input_kernel < 1 ||
      postnet.kernel % 2 == 0 || postnet.kernel < 1)
    throw ConfigError("ModelConfig: kernel sizes must be odd and positive");
  if (postnet.layers < 2) throw ConfigError("ModelConfig.postnet.layers must be >= 2");
  if (frontend == Frontend::Mel && content_dim != mel_bins)
    throw ConfigError("ModelConfig: mel frontend requires content_dim == mel_bins (" +
                      std::to_string(mel_bins) + ")");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.content_dim = 80;
  c.channels = 32;
  c.layers = 2;
  c.postnet = {5, 32, 5};
  c.frontend = Frontend::Mel;
  return c;
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"content_dim", c.content_dim},
           {"channels", c.channels},
           {"layers", c.layers},
           {"mel_bins", c.mel_bins},
           {"conv_kernel", c.conv_kernel},
           {"input_kernel", c.input_kernel},
           {"sa_residual", c.sa_residual},
           {"pyramid_pairing", to_string(c.pyramid_pairing)},
           {"multi_target", to_string(c.multi_target)},
           {"gru_layers_bottleneck", c.gru_layers_bottleneck},
           {"gru_layers_refine", c.gru_layers_refine},
           {"postnet",
            {{"layers", c.postnet.layers},
             {"channels", c.postnet.channels},
             {"kernel", c.postnet.kernel}}},
           {"frontend", to_string(c.frontend)},
           {"adapter_name", c.adapter_name}};
}

void from_json(const json& j, ModelConfig& c) {
  // Missing keys keep their current value, so a partial object overrides.
  auto get = [&j](const char* key, auto& dst) {
    if (j.contains(key)) j.at(key).get_to(dst);
  };
  get("content_dim", c.content_dim);
  get("channels", c.channels);
  get("layers", c.layers);
  get("mel_bins", c.mel_bins);
  get("conv_kernel", c.conv_kernel);
  get("input_kernel", c.input_kernel);
  get("sa_residual", c.sa_residual);
  get("gru_layers_bottleneck", c.gru_layers_bottleneck);
  get("gru_layers_refine", c.gru_layers_refine);
  get("adapter_name", c.adapter_name);
  if (j.contains("pyramid_pairing"))
    c.pyramid_pairing = pyramid_pairing_from_string(j.at("pyramid_pairing"));
  if (j.contains("multi_target")) c.multi_target = multi_target_from_string(j.at("multi_target"));
  if (j.contains("frontend")) c.frontend = frontend_from_string(j.at("frontend"));
  if (j.contains("postnet")) {
    const json& p = j.at("postnet");
    if (p.contains("layers")) p.at("layers").get_to(c.postnet.layers);
    if (p.contains("channels")) p.at("channels").get_to(c.postnet.channels);
    if (p.contains("kernel")) p.at("kernel").get_to(c.postnet.kernel);
  }
}

namespace {

void add_conv(std::vector<ParamShape>& out, const std::string& prefix, int cin, int cout,
              int kernel, bool zero = false) {
  const double fan_in = static_cast<double>(cin) * kernel;
  out.push_back({prefix + ".w", cout, static_cast<Eigen::Index>(cin) * kernel,
                 zero ? InitKind::Zero : InitKind::FanInUniform, fan_in});
  out.push_back({prefix + ".b", cout, 1, InitKind::Zero, fan_in});
}

void add_square(std::vector<ParamShape>& out, const std::string& name, int c) {
  out.push_back({name, c, c, InitKind::FanInUniform, static_cast<double>(c)});
}

void add_attention(std::vector<ParamShape>& out, const std::string& prefix, int c) {
  add_square(out, prefix + ".w_q", c);
  add_square(out, prefix + ".w_k", c);
  add_square(out, prefix + ".w_v", c);
}

void add_gru(std::vector<ParamShape>& out, const std::string& prefix, int in, int hidden) {
  const double h = hidden;
  out.push_back({prefix + ".w_ih", 3 * hidden, in, InitKind::RecurrentUniform, h});
  out.push_back({prefix + ".w_hh", 3 * hidden, hidden, InitKind::RecurrentUniform, h});
  out.push_back({prefix + ".b_ih", 3 * hidden, 1, InitKind::RecurrentUniform, h});
  out.push_back({prefix + ".b_hh", 3 * hidden, 1, InitKind::RecurrentUniform, h});
}

void add_conv_block(std::vector<ParamShape>& out, const std::string& prefix, int c, int k) {
  add_conv(out, prefix + ".conv1", c, c, k);
  add_conv(out, prefix + ".conv2", c, c, k);
}

void add_dual(std::vector<ParamShape>& out, const std::string& prefix, int c) {
  add_attention(out, prefix + ".duan_in", c);
  add_attention(out, prefix + ".duan_tin", c);
  add_conv(out, prefix + ".fuse", 2 * c, c, 1);
}

std::string layer(const std::string& part, int i) { return part + ".layer" + std::to_string(i); }

}  // namespace

std::vector<ParamShape> parameter_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const int c = cfg.channels;
  std::vector<ParamShape> out;
  add_conv(out, "content.input", cfg.content_dim, c, cfg.input_kernel);
  for (int i = 0; i < cfg.layers; ++i) add_conv_block(out, layer("content", i), c, cfg.conv_kernel);

  add_conv(out, "speaker.input", cfg.content_dim, c, cfg.input_kernel);
  for (int i = 0; i < cfg.layers; ++i) {
    add_conv_block(out, layer("speaker", i), c, cfg.conv_kernel);
    add_attention(out, layer("speaker", i) + ".sa", c);
  }

  for (int i = 0; i < cfg.gru_layers_bottleneck; ++i)
    add_gru(out, "bottleneck.gru" + std::to_string(i), i == 0 ? c + 1 : c, c);
  add_dual(out, "bottleneck", c);

  for (int i = 0; i < cfg.layers; ++i) {
    const std::string p = layer("decoder", i);
    add_conv_block(out, p, c, cfg.conv_kernel);
    add_dual(out, p + ".triaan", c);
    add_square(out, p + ".triaan.glan.w_mu", c);
    add_square(out, p + ".triaan.glan.w_sigma", c);
  }

  for (int i = 0; i < cfg.gru_layers_refine; ++i) add_gru(out, "refine.gru" + std::to_string(i), c, c);
  add_conv(out, "refine.out", c, cfg.mel_bins, 1);

  const auto& pn = cfg.postnet;
  for (int i = 0; i < pn.layers; ++i) {
    const int cin = i == 0 ? cfg.mel_bins : pn.channels;
    const int cout = i == pn.layers - 1 ? cfg.mel_bins : pn.channels;
    add_conv(out, "postnet.conv" + std::to_string(i), cin, cout, pn.kernel, i == pn.layers - 1);
  }
  return out;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes(cfg)) n += static_cast<std::size_t>(s.size());
  return n;
}

Weights::Weights(const ModelConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  for (const ParamShape& s : parameter_shapes(config)) {
    Mat m;
    switch (s.init) {
      case InitKind::Zero:
        m = Mat::Zero(s.rows, s.cols);
        break;
      case InitKind::FanInUniform: {
        const double bound = std::sqrt(3.0 / s.fan_in);
        m = rng.uniform_matrix(s.rows, s.cols, -bound, bound);
        break;
      }
      case InitKind::RecurrentUniform: {
        const double bound = 1.0 / std::sqrt(s.fan_in);
        m = rng.uniform_matrix(s.rows, s.cols, -bound, bound);
        break;
      }
    }
    index_[s.name] = static_cast<int>(names_.size());
    names_.push_back(s.name);
    values_.push_back(std::move(m));
  }
}

Weights::Weights(const ModelConfig& config, std::vector<std::pair<std::string, Mat>> named) {
  const auto shapes = parameter_shapes(config);
  if (named.size() != shapes.size())
    throw ValidationError("weights: expected " + std::to_string(shapes.size()) +
                          " tensors for this config, got " + std::to_string(named.size()));
  std::unordered_map<std::string, Mat> by_name;
  for (auto& [n, m] : named) by_name[n] = std::move(m);
  for (const ParamShape& s : shapes) {
    auto it = by_name.find(s.name);
    if (it == by_name.end()) throw ValidationError("weights: missing tensor '" + s.name + "'");
    if (it->second.rows() != s.rows || it->second.cols() != s.cols)
      throw ValidationError("weights: tensor '" + s.name + "' has shape " +
                            shape_str(it->second) + ", config expects (" +
                            std::to_string(s.rows) + " x " + std::to_string(s.cols) + ")");
    index_[s.name] = static_cast<int>(names_.size());
    names_.push_back(s.name);
    values_.push_back(std::move(it->second));
  }
}

int Weights::slot(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("weights: no tensor named '" + name + "'");
  return it->second;
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const Mat& m : values_) n += static_cast<std::size_t>(m.size());
  return n;
}

std::vector<Mat> Weights::zeros_like() const {
  std::vector<Mat> out;
  out.reserve(values_.size());
  for (const Mat& m : values_) out.push_back(Mat::Zero(m.rows(), m.cols()));
  return out;
}

ad::Var WeightBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const int slot = weights_.slot(name);
  ad::Var v = graph_.parameter(weights_.value(slot), slot);
  bound_.emplace(name, v);
  return v;
}

namespace diff {

ad::Var conv_block(WeightBinder& w, const std::string& prefix, ad::Var x, int kernel) {
  ad::Var h = ad::relu(ad::conv1d(x, w(prefix + ".conv1.w"), w(prefix + ".conv1.b"), kernel));
  h = ad::conv1d(h, w(prefix + ".conv2.w"), w(prefix + ".conv2.b"), kernel);
  return ad::add(x, h);
}

ad::Var gru_layer(WeightBinder& w, const std::string& prefix, ad::Var x) {
  return ad::gru(x, w(prefix + ".w_ih"), w(prefix + ".w_hh"), w(prefix + ".b_ih"),
                 w(prefix + ".b_hh"));
}

ad::Var postnet(WeightBinder& w, const ModelConfig& cfg, ad::Var mel_pre) {
  ad::Var h = mel_pre;
  for (int i = 0; i < cfg.postnet.layers; ++i) {
    const std::string p = "postnet.conv" + std::to_string(i);
    h = ad::conv1d(h, w(p + ".w"), w(p + ".b"), cfg.postnet.kernel);
    if (i + 1 < cfg.postnet.layers) h = ad::tanh(h);
  }
  return h;
}

AttentionVars attention_vars(WeightBinder& w, const std::string& prefix) {
  return {w(prefix + ".w_q"), w(prefix + ".w_k"), w(prefix + ".w_v")};
}

}  // namespace diff

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), weights_(config_, seed) {}

Model::Model(ModelConfig config, Weights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  const auto shapes = parameter_shapes(config_);
  require(shapes.size() == weights_.size(), "Model: weights do not match config");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    require(weights_.name(i) == shapes[i].name && weights_.value(i).rows() == shapes[i].rows &&
                weights_.value(i).cols() == shapes[i].cols,
            "Model: tensor '" + shapes[i].name + "' does not match config");
  }
}

std::size_t Model::pyramid_index_for_decoder_layer(std::size_t i) const {
  const auto layers = static_cast<std::size_t>(config_.layers);
  require(i < layers, "decoder layer index out of range");
  return config_.pyramid_pairing == PyramidPairing::Mirror ? layers - 1 - i : i;
}

ad::Var Model::build_content_encoder(WeightBinder& w, ad::Var x) const {
  require(x.rows() == config_.content_dim,
          "content_encode: input has " + std::to_string(x.rows()) + " channels, config expects " +
              std::to_string(config_.content_dim));
  ad::Var h = ad::conv1d(x, w("content.input.w"), w("content.input.b"), config_.input_kernel);
  for (int i = 0; i < config_.layers; ++i) {
    h = diff::conv_block(w, layer("content", i), h, config_.conv_kernel);
    h = ad::standardize_rows(h, kNormEps);
  }
  return h;
}

std::vector<ad::Var> Model::build_speaker_encoder(WeightBinder& w, ad::Var x) const {
  require(x.rows() == config_.content_dim,
          "speaker_encode: input has " + std::to_string(x.rows()) + " channels, config expects " +
              std::to_string(config_.content_dim));
  ad::Var h = ad::conv1d(x, w("speaker.input.w"), w("speaker.input.b"), config_.input_kernel);
  std::vector<ad::Var> pyramid;
  for (int i = 0; i < config_.layers; ++i) {
    const std::string p = layer("speaker", i);
    h = ad::standardize_rows(diff::conv_block(w, p, h, config_.conv_kernel), kNormEps);
    ad::Var f = diff::speaker_attention(ad::transpose(h), diff::attention_vars(w, p + ".sa"),
                                        config_.sa_residual);
    pyramid.push_back(f);
    h = ad::transpose(f);
  }
  return pyramid;
}

std::vector<ad::Var> Model::build_speaker_pyramid(WeightBinder& w,
                                                  const std::vector<Mat>& targets) const {
  require(!targets.empty(), "speaker input: at least one target utterance required");
  ad::Graph& g = w.graph();
  if (config_.multi_target == MultiTargetMode::Concat || targets.size() == 1) {
    std::vector<ad::Var> parts;
    for (const Mat& t : targets) parts.push_back(g.constant(t));
    ad::Var joined = parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
    return build_speaker_encoder(w, joined);
  }
  // Average: per-utterance pyramids truncated to the shortest target.
  std::vector<std::vector<ad::Var>> all;
  Eigen::Index shortest = std::numeric_limits<Eigen::Index>::max();
  for (const Mat& t : targets) {
    all.push_back(build_speaker_encoder(w, g.constant(t)));
    shortest = std::min(shortest, t.cols());
  }
  std::vector<ad::Var> out;
  const double inv = 1.0 / static_cast<double>(targets.size());
  for (int l = 0; l < config_.layers; ++l) {
    ad::Var acc = ad::slice_rows(all[0][l], 0, shortest);
    for (std::size_t k = 1; k < all.size(); ++k)
      acc = ad::add(acc, ad::slice_rows(all[k][l], 0, shortest));
    out.push_back(ad::scale(acc, inv));
  }
  return out;
}

ad::Var Model::build_bottleneck(WeightBinder& w, ad::Var content, ad::Var pitch,
                                const std::vector<ad::Var>& pyramid) const {
  require(pitch.rows() == 1 && pitch.cols() == content.cols(),
          "bottleneck: pitch track length " + std::to_string(pitch.cols()) +
              " does not match content length " + std::to_string(content.cols()));
  ad::Var h = ad::concat_rows({content, pitch});
  for (int i = 0; i < config_.gru_layers_bottleneck; ++i)
    h = diff::gru_layer(w, "bottleneck.gru" + std::to_string(i), h);
  ad::Var converted = diff::dual_convert(
      ad::transpose(h), pyramid.back(), diff::attention_vars(w, "bottleneck.duan_in"),
      diff::attention_vars(w, "bottleneck.duan_tin"), w("bottleneck.fuse.w"),
      w("bottleneck.fuse.b"));
  return ad::transpose(converted);
}

ad::Var Model::build_decoder(WeightBinder& w, ad::Var x, const std::vector<ad::Var>& pyramid) const {
  require(pyramid.size() == static_cast<std::size_t>(config_.layers),
          "decode: pyramid has " + std::to_string(pyramid.size()) + " layers, config expects " +
              std::to_string(config_.layers));
  ad::Var h = x;
  for (int i = 0; i < config_.layers; ++i) {
    const std::string p = layer("decoder", i);
    h = diff::conv_block(w, p, h, config_.conv_kernel);
    diff::TriaanBlockVars v{diff::attention_vars(w, p + ".triaan.duan_in"),
                            diff::attention_vars(w, p + ".triaan.duan_tin"),
                            w(p + ".triaan.fuse.w"),
                            w(p + ".triaan.fuse.b"),
                            {w(p + ".triaan.glan.w_mu"), w(p + ".triaan.glan.w_sigma")}};
    const ad::Var f_l = pyramid[pyramid_index_for_decoder_layer(static_cast<std::size_t>(i))];
    h = ad::transpose(diff::triaan_block(ad::transpose(h), f_l, pyramid, v));
  }
  for (int i = 0; i < config_.gru_layers_refine; ++i)
    h = diff::gru_layer(w, "refine.gru" + std::to_string(i), h);
  return ad::conv1d(h, w("refine.out.w"), w("refine.out.b"), 1);
}

void Model::validate_input(const ConversionInput& in) const {
  require(in.content.rows() == config_.content_dim,
          "forward: source features have " + std::to_string(in.content.rows()) +
              " channels, model expects " + std::to_string(config_.content_dim));
  require(in.content.cols() >= 1, "forward: empty source");
  require(in.log_f0.size() == in.content.cols(),
          "forward: pitch length " + std::to_string(in.log_f0.size()) +
              " differs from feature length " + std::to_string(in.content.cols()));
  require(!in.targets.empty(), "forward: at least one target utterance required");
  for (const Mat& t : in.targets) {
    require(t.rows() == config_.content_dim,
            "forward: target features have " + std::to_string(t.rows()) + " channels");
    require(t.cols() >= 1, "forward: empty target");
  }
  require(in.content.allFinite() && in.log_f0.allFinite(), "forward: non-finite source input");
}

ForwardNodes Model::build_forward(WeightBinder& w, const ConversionInput& in) const {
  validate_input(in);
  ad::Graph& g = w.graph();
  return build_forward(w, g.constant(in.content), g.constant(in.log_f0.transpose()),
                       build_speaker_pyramid(w, in.targets));
}

ForwardNodes Model::build_forward(WeightBinder& w, ad::Var content, ad::Var pitch,
                                  const std::vector<ad::Var>& pyramid) const {
  ForwardNodes n;
  n.pyramid = pyramid;
  n.content = build_content_encoder(w, content);
  n.bottleneck = build_bottleneck(w, n.content, pitch, n.pyramid);
  n.mel_pre = build_decoder(w, n.bottleneck, n.pyramid);
  n.mel = ad::add(n.mel_pre, diff::postnet(w, config_, n.mel_pre));
  return n;
}

Mat Model::content_encode(const Mat& x) const {
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  return build_content_encoder(w, g.constant(x)).value();
}

SpeakerFeaturePyramid Model::speaker_encode(const Mat& x_s) const {
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  SpeakerFeaturePyramid p;
  for (const ad::Var& v : build_speaker_encoder(w, g.constant(x_s))) p.maps.push_back(v.value());
  return p;
}

Mat Model::bottleneck(const Mat& content, const Vec& log_f0,
                      const SpeakerFeaturePyramid& pyr) const {
  pyr.validate();
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  std::vector<ad::Var> p;
  for (const Mat& m : pyr.maps) p.push_back(g.constant(m));
  return build_bottleneck(w, g.constant(content), g.constant(log_f0.transpose()), p).value();
}

Mat Model::decode(const Mat& x, const SpeakerFeaturePyramid& pyr) const {
  pyr.validate();
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  std::vector<ad::Var> p;
  for (const Mat& m : pyr.maps) p.push_back(g.constant(m));
  return build_decoder(w, g.constant(x), p).value();
}

Mat Model::postnet(const Mat& mel_pre) const {
  require(mel_pre.rows() == config_.mel_bins, "postnet: expected " +
                                                  std::to_string(config_.mel_bins) +
                                                  " mel bins, got " + shape_str(mel_pre));
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  ad::Var x = g.constant(mel_pre);
  return ad::add(x, diff::postnet(w, config_, x)).value();
}

Mat Model::forward(const ConversionInput& in) const {
  ad::Graph g(false);
  WeightBinder w(g, weights_);
  return build_forward(w, in).mel.value();
}

}  // namespace triaan
