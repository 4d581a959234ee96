#include "nrl/model.hpp"

#include <cstring>

#include "nrl/error.hpp"

namespace nrl {

using nn::Mat;
using nn::Mode;
using nn::Tensor;

std::string_view to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::small_residual_18: return "small_residual_18";
    case EncoderKind::vgg_19_like: return "vgg_19_like";
    case EncoderKind::toy_cnn: return "toy_cnn";
  }
  return "?";
}

EncoderKind parse_encoder_kind(std::string_view text) {
  if (text == "small_residual_18" || text == "resnet18") return EncoderKind::small_residual_18;
  if (text == "vgg_19_like" || text == "vgg19") return EncoderKind::vgg_19_like;
  if (text == "toy_cnn") return EncoderKind::toy_cnn;
  throw ValidationError("unknown encoder kind '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  if (input_channels != 1 && input_channels != 3) throw ValidationError("model: input_channels must be 1 or 3");
  if (input_height < 4 || input_width < 4) throw ValidationError("model: input must be at least 4x4");
  if (num_classes < 2) throw ValidationError("model: num_classes must be >= 2");
  if (group_size < 1) throw ValidationError("model: group_size must be >= 1");
  if (projection_layers != 1 && projection_layers != 2) throw ValidationError("model: projection_layers must be 1 or 2");
  if (projection_dim < 1) throw ValidationError("model: projection_dim must be >= 1");
  if (mixup_head_layers < 1 || mixup_head_layers > 3) throw ValidationError("model: mixup_head_layers must be 1, 2 or 3");
  if (toy_feature_dim < 1) throw ValidationError("model: toy_feature_dim must be >= 1");
}

namespace {

std::unique_ptr<nn::Sequential> make_toy_cnn(const ModelConfig& c, Rng& rng) {
  auto net = std::make_unique<nn::Sequential>();
  net->emplace<nn::Conv2d>("encoder.conv1", c.input_channels, 8, 3, 1, 1, true, rng);
  net->emplace<nn::ReLU>();
  net->emplace<nn::MaxPool2d>(2, 2);
  net->emplace<nn::Conv2d>("encoder.conv2", 8, 16, 3, 1, 1, true, rng);
  net->emplace<nn::ReLU>();
  net->emplace<nn::MaxPool2d>(2, 2);
  net->emplace<nn::Flatten>();
  const int flat = 16 * (c.input_height / 4) * (c.input_width / 4);
  net->emplace<nn::Linear>("encoder.fc", flat, c.toy_feature_dim, rng);
  net->emplace<nn::ReLU>();
  return net;
}

// Standard 18-layer residual network: 7x7/2 stem, 3x3/2 max pool, four stages
// of two basic blocks (64, 128, 256, 512 channels), global average pool.
std::unique_ptr<nn::Sequential> make_resnet18(const ModelConfig& c, Rng& rng) {
  auto net = std::make_unique<nn::Sequential>();
  net->emplace<nn::Conv2d>("encoder.stem.conv", c.input_channels, 64, 7, 2, 3, false, rng);
  net->emplace<nn::BatchNorm2d>("encoder.stem.bn", 64);
  net->emplace<nn::ReLU>();
  net->emplace<nn::MaxPool2d>(3, 2, 1);
  const int widths[] = {64, 128, 256, 512};
  int in = 64;
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < 2; ++block) {
      const int stride = (stage > 0 && block == 0) ? 2 : 1;
      const std::string name = "encoder.layer" + std::to_string(stage + 1) + "." + std::to_string(block);
      net->emplace<nn::BasicBlock>(name, in, widths[stage], stride, rng);
      in = widths[stage];
    }
  }
  net->emplace<nn::GlobalAvgPool>();
  return net;
}

// Sixteen 3x3 conv-BN-ReLU layers in the VGG-19 arrangement with five max
// pools, then global average pooling to a 512-wide feature.
std::unique_ptr<nn::Sequential> make_vgg19(const ModelConfig& c, Rng& rng) {
  auto net = std::make_unique<nn::Sequential>();
  const int plan[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0};
  int in = c.input_channels;
  int idx = 0;
  for (int width : plan) {
    if (width == 0) {
      net->emplace<nn::MaxPool2d>(2, 2);
      continue;
    }
    const std::string name = "encoder.conv" + std::to_string(++idx);
    net->emplace<nn::Conv2d>(name, in, width, 3, 1, 1, false, rng);
    net->emplace<nn::BatchNorm2d>(name + ".bn", width);
    net->emplace<nn::ReLU>();
    in = width;
  }
  net->emplace<nn::GlobalAvgPool>();
  return net;
}

}  // namespace

NoiseRobustModel::NoiseRobustModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  // Each component draws from its own stream so that adding or resizing one
  // head never changes another's initialization.
  Rng enc_rng(derive_seed(seed, {1}));
  switch (config_.encoder) {
    case EncoderKind::toy_cnn: encoder_ = make_toy_cnn(config_, enc_rng); break;
    case EncoderKind::small_residual_18: encoder_ = make_resnet18(config_, enc_rng); break;
    case EncoderKind::vgg_19_like: encoder_ = make_vgg19(config_, enc_rng); break;
  }
  const int d = feature_dim();

  Rng cls_rng(derive_seed(seed, {2}));
  classifier_.emplace<nn::Linear>("classifier.fc", d, config_.num_classes, cls_rng);

  Rng proj_rng(derive_seed(seed, {3}));
  if (config_.projection_layers == 1) {
    projection_.emplace<nn::Linear>("projection.fc1", d, config_.projection_dim, proj_rng);
  } else {
    projection_.emplace<nn::Linear>("projection.fc1", d, d, proj_rng);
    projection_.emplace<nn::ReLU>();
    projection_.emplace<nn::Linear>("projection.fc2", d, config_.projection_dim, proj_rng);
  }

  Rng mix_rng(derive_seed(seed, {4}));
  const auto dims = mixup_head_dims();
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (i > 0) mixup_head_.emplace<nn::ReLU>();
    mixup_head_.emplace<nn::Linear>("mixup.fc" + std::to_string(i + 1), dims[i], dims[i + 1], mix_rng);
  }
  mixup_head_.emplace<nn::Sigmoid>();
}

std::vector<int> NoiseRobustModel::mixup_head_dims() const {
  const int d = feature_dim();
  const int m = config_.group_size;
  std::vector<int> dims{d * m};
  for (int i = 1; i < config_.mixup_head_layers; ++i) dims.push_back(d);
  dims.push_back(m);
  return dims;
}

std::vector<nn::Parameter*> NoiseRobustModel::all_parameters() {
  std::vector<nn::Parameter*> out;
  encoder_->collect(out);
  classifier_.collect(out);
  projection_.collect(out);
  mixup_head_.collect(out);
  return out;
}

Mat NoiseRobustModel::encode(std::span<const Image> images, Mode mode) {
  for (const auto& img : images) {
    if (img.channels != config_.input_channels || img.height != config_.input_height ||
        img.width != config_.input_width) {
      throw ValidationError("encode: image shape " + std::to_string(img.channels) + "x" + std::to_string(img.height) +
                            "x" + std::to_string(img.width) + " does not match the configured input " +
                            std::to_string(config_.input_channels) + "x" + std::to_string(config_.input_height) +
                            "x" + std::to_string(config_.input_width));
    }
  }
  return encoder_->forward(nn::images_to_tensor(images), mode).data;
}

void NoiseRobustModel::check_features(const Mat& features, const char* op) const {
  if (features.cols() != feature_dim()) {
    throw ValidationError(std::string(op) + ": feature width " + std::to_string(features.cols()) +
                          " does not match d=" + std::to_string(feature_dim()));
  }
}

Mat NoiseRobustModel::classify(const Mat& features) {
  check_features(features, "classify");
  return classifier_.forward(Tensor::from_matrix(features), Mode::eval).data;
}

Mat NoiseRobustModel::project(const Mat& features) {
  check_features(features, "project");
  return projection_.forward(Tensor::from_matrix(features), Mode::eval).data;
}

Mat NoiseRobustModel::attention_weights(const Mat& group_features) {
  const int expected = feature_dim() * config_.group_size;
  if (group_features.cols() != expected) {
    throw ValidationError("attention_weights: input width " + std::to_string(group_features.cols()) +
                          " does not match d*M=" + std::to_string(expected));
  }
  return mixup_head_.forward(Tensor::from_matrix(group_features), Mode::eval).data;
}

std::uint64_t parameter_checksum(std::span<nn::Parameter* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = static_cast<std::size_t>(p->value.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace nrl
