#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nrl/image.hpp"
#include "nrl/nn/layers.hpp"

namespace nrl {

enum class EncoderKind { small_residual_18, vgg_19_like, toy_cnn };

std::string_view to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(std::string_view text);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::toy_cnn;
  int input_channels = 1;
  int input_height = 16;
  int input_width = 16;
  int num_classes = 4;
  int group_size = 4;          // M; the mixup head sees M concatenated features
  int projection_layers = 1;   // Z in {1, 2}
  int projection_dim = 128;    // p
  int mixup_head_layers = 2;   // N in {1, 2, 3}
  int toy_feature_dim = 256;   // d for the toy encoder; the deep encoders use 512

  int feature_dim() const { return encoder == EncoderKind::toy_cnn ? toy_feature_dim : 512; }
  // Throws ValidationError on out-of-range settings.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One feature encoder shared by three heads: classifier C, projection H and
// mixup-attention M. Every head consumes the same encoder output.
class NoiseRobustModel {
 public:
  NoiseRobustModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  int feature_dim() const { return config_.feature_dim(); }

  // Forward-only conveniences; rows are samples.
  nn::Mat encode(std::span<const Image> images, nn::Mode mode = nn::Mode::eval);
  nn::Mat classify(const nn::Mat& features);
  nn::Mat project(const nn::Mat& features);
  // Input: K rows of M concatenated feature vectors (width d*M). Output: K x M in (0, 1).
  nn::Mat attention_weights(const nn::Mat& group_features);

  // Training access to the underlying modules.
  nn::Module& encoder() { return *encoder_; }
  nn::Sequential& classifier() { return classifier_; }
  nn::Sequential& projection() { return projection_; }
  nn::Sequential& mixup_head() { return mixup_head_; }

  std::vector<nn::Parameter*> encoder_parameters() { return encoder_->parameters(); }
  std::vector<nn::Parameter*> classifier_parameters() { return classifier_.parameters(); }
  std::vector<nn::Parameter*> projection_parameters() { return projection_.parameters(); }
  std::vector<nn::Parameter*> mixup_parameters() { return mixup_head_.parameters(); }
  std::vector<nn::Parameter*> all_parameters();

  // Layer widths of the mixup head, input first: e.g. {2048, 512, 4} for d=512, M=4, N=2.
  std::vector<int> mixup_head_dims() const;

 private:
  void check_features(const nn::Mat& features, const char* op) const;

  ModelConfig config_;
  std::unique_ptr<nn::Sequential> encoder_;
  nn::Sequential classifier_;
  nn::Sequential projection_;
  nn::Sequential mixup_head_;
};

// FNV-1a over the raw bytes of the given parameters' values.
std::uint64_t parameter_checksum(std::span<nn::Parameter* const> params);

}  // namespace nrl
