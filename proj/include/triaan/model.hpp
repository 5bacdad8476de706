#pragma once

// Full conversion network: content encoder, speaker encoder with speaker
// attention, GRU bottleneck with pitch and dual adaptive conversion, decoder
// of TriAAN blocks, refinement GRUs and PostNet.
//
// All sequence maps are channel-major (C x T) between stages; the attention
// based blocks see time-major views.

#include "triaan/autodiff.hpp"
#include "triaan/triaan_block.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <unordered_map>
#include <vector>

namespace triaan {

enum class PyramidPairing { Mirror, Same };
enum class MultiTargetMode { Concat, Average };
enum class Frontend { Mel, Adapter };

std::string to_string(PyramidPairing p);
std::string to_string(MultiTargetMode m);
std::string to_string(Frontend f);
PyramidPairing pyramid_pairing_from_string(const std::string& s);
MultiTargetMode multi_target_from_string(const std::string& s);
Frontend frontend_from_string(const std::string& s);

struct PostnetConfig {
  int layers = 5;
  int channels = 512;
  int kernel = 5;

  bool operator==(const PostnetConfig&) const = default;
};

struct ModelConfig {
  int content_dim = 256;  // H
  int channels = 512;     // C
  int layers = 6;         // L
  int mel_bins = 80;      // M
  int conv_kernel = 3;
  int input_kernel = 1;
  bool sa_residual = true;
  PyramidPairing pyramid_pairing = PyramidPairing::Mirror;
  MultiTargetMode multi_target = MultiTargetMode::Concat;
  int gru_layers_bottleneck = 1;
  int gru_layers_refine = 2;
  PostnetConfig postnet;
  Frontend frontend = Frontend::Adapter;
  std::string adapter_name;  // only for Frontend::Adapter

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// Desk-scale profile on mel input features.
  static ModelConfig desk();
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class InitKind { FanInUniform, RecurrentUniform, Zero };

struct ParamShape {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  InitKind init = InitKind::Zero;
  double fan_in = 1.0;

  Eigen::Index size() const { return rows * cols; }
};

/// Ordered shape table of every trainable tensor. Pure function of config.
std::vector<ParamShape> parameter_shapes(const ModelConfig& config);
std::size_t parameter_count(const ModelConfig& config);

/// Named tensor map in shape-table order.
class Weights {
 public:
  Weights() = default;
  /// Allocates per the shape table and initializes from `seed`.
  Weights(const ModelConfig& config, std::uint64_t seed);
  /// Adopts tensors; validates names and shapes against the config.
  Weights(const ModelConfig& config, std::vector<std::pair<std::string, Mat>> named);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Mat& value(std::size_t i) const { return values_[i]; }
  Mat& value(std::size_t i) { return values_[i]; }
  int slot(const std::string& name) const;
  const Mat& at(const std::string& name) const { return values_[slot(name)]; }
  Mat& at(const std::string& name) { return values_[slot(name)]; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t parameter_count() const;

  std::vector<Mat> zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::unordered_map<std::string, int> index_;
};

/// Binds named weights into a graph, one leaf per tensor.
class WeightBinder {
 public:
  WeightBinder(ad::Graph& g, const Weights& w) : graph_(g), weights_(w) {}

  ad::Var operator()(const std::string& name);
  ad::Graph& graph() { return graph_; }

 private:
  ad::Graph& graph_;
  const Weights& weights_;
  std::unordered_map<std::string, ad::Var> bound_;
};

namespace diff {

/// x + conv2(relu(conv1(x))) with `prefix`.conv{1,2}.{w,b}.
ad::Var conv_block(WeightBinder& w, const std::string& prefix, ad::Var x, int kernel);
ad::Var gru_layer(WeightBinder& w, const std::string& prefix, ad::Var x);
/// Residual produced by PostNet for a M x T input.
ad::Var postnet(WeightBinder& w, const ModelConfig& cfg, ad::Var mel_pre);

}  // namespace diff

/// Intermediate nodes of one forward pass.
struct ForwardNodes {
  ad::Var content;  // C x T after content encoder
  std::vector<ad::Var> pyramid;  // L maps, T_s x C
  ad::Var bottleneck;  // C x T
  ad::Var mel_pre;     // M x T
  ad::Var mel;         // M x T
};

struct ConversionInput {
  Mat content;                // H x T
  Vec log_f0;                 // T
  std::vector<Mat> targets;   // k >= 1 maps, H x T_s each
};

class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed);
  Model(ModelConfig config, Weights weights);

  const ModelConfig& config() const { return config_; }
  const Weights& weights() const { return weights_; }
  Weights& weights() { return weights_; }

  /// Decoder layer i (0-based) -> pyramid index.
  std::size_t pyramid_index_for_decoder_layer(std::size_t i) const;

  // Graph builders used by training and gradient checks.
  ad::Var build_content_encoder(WeightBinder& w, ad::Var x) const;
  std::vector<ad::Var> build_speaker_encoder(WeightBinder& w, ad::Var x) const;
  std::vector<ad::Var> build_speaker_pyramid(WeightBinder& w,
                                             const std::vector<Mat>& targets) const;
  ad::Var build_bottleneck(WeightBinder& w, ad::Var content, ad::Var pitch,
                           const std::vector<ad::Var>& pyramid) const;
  ad::Var build_decoder(WeightBinder& w, ad::Var x, const std::vector<ad::Var>& pyramid) const;
  ForwardNodes build_forward(WeightBinder& w, const ConversionInput& in) const;
  /// Forward pass reusing an already built speaker pyramid. content: H x T,
  /// pitch: 1 x T.
  ForwardNodes build_forward(WeightBinder& w, ad::Var content, ad::Var pitch,
                             const std::vector<ad::Var>& pyramid) const;

  // Inference.
  Mat content_encode(const Mat& x) const;
  SpeakerFeaturePyramid speaker_encode(const Mat& x_s) const;
  Mat bottleneck(const Mat& content, const Vec& log_f0, const SpeakerFeaturePyramid& pyr) const;
  Mat decode(const Mat& x, const SpeakerFeaturePyramid& pyr) const;
  /// Returns mel_pre + PostNet(mel_pre).
  Mat postnet(const Mat& mel_pre) const;
  /// Converted log mel (M x T_source).
  Mat forward(const ConversionInput& in) const;

  void validate_input(const ConversionInput& in) const;

 private:
  ModelConfig config_;
  Weights weights_;
};

}  // namespace triaan
