#include <doctest.h>

#include <filesystem>

#include "nrl/config.hpp"
#include "nrl/error.hpp"
#include "nrl/random.hpp"

using namespace nrl;

namespace {

template <typename E>
E pick(Rng& rng, std::initializer_list<E> options) {
  return *(options.begin() + rng.below(options.size()));
}

ExperimentConfig random_config(Rng& rng) {
  ExperimentConfig c;
  c.name = "cfg" + std::to_string(rng.below(1000));
  c.export_features = rng.bernoulli(0.5);
  c.dataset.source = pick(rng, {DatasetSource::synthetic, DatasetSource::folder});
  c.dataset.train_root = "/data/train";
  c.dataset.test_root = "/data/test";
  c.dataset.height = 4 + static_cast<int>(rng.below(60));
  c.dataset.width = 4 + static_cast<int>(rng.below(60));
  c.dataset.channels = rng.bernoulli(0.5) ? 1 : 3;
  if (rng.bernoulli(0.5)) c.dataset.class_names = {"a", "b c", "d\"e"};
  c.dataset.standardize = rng.bernoulli(0.5);
  c.dataset.synthetic.num_classes = 2 + static_cast<int>(rng.below(7));
  c.dataset.synthetic.train_size = 1 + static_cast<int>(rng.below(5000));
  c.dataset.synthetic.seed = rng.next_u64();
  c.dataset.synthetic.pixel_noise = rng.uniform01() * 0.2;
  c.noise.kind = pick(rng, {NoiseKind::none, NoiseKind::symmetric, NoiseKind::asymmetric, NoiseKind::instance_dependent});
  c.noise.rate = 0.49 * rng.uniform01();
  c.noise.convention = pick(rng, {SymmetricConvention::uniform_all, SymmetricConvention::uniform_off_diagonal});
  c.noise.seed = rng.next_u64();
  c.noise.instance_tolerance = 0.01 + rng.uniform01() * 0.1;
  c.noise.instance_proxy_learning_rate = 1e-5 + rng.uniform01() * 1e-3;
  TrainConfig& t = c.train;
  t.method = pick(rng, {Method::ours, Method::default_baseline, Method::label_smooth});
  t.stage1_epochs = static_cast<int>(rng.below(50));
  t.stage2_epochs = static_cast<int>(rng.below(100));
  t.learning_rate = 1e-5 + rng.uniform01() * 1e-2;
  t.lr_decay_factor = 0.05 + 0.9 * rng.uniform01();
  t.lr_decay_every = 1 + static_cast<int>(rng.below(20));
  t.groups_per_batch = 1 + static_cast<int>(rng.below(8));
  t.group_size = 2 + static_cast<int>(rng.below(6));
  t.remainder_policy = pick(rng, {RemainderPolicy::drop, RemainderPolicy::resample});
  t.mixup_grouping = pick(rng, {MixupGrouping::intra_class, MixupGrouping::inter_class});
  t.temperature = 0.05 + rng.uniform01();
  t.lambda = rng.uniform01();
  t.include_positive_in_denominator = rng.bernoulli(0.5);
  t.use_mixup = rng.bernoulli(0.5);
  t.use_contrastive = rng.bernoulli(0.5);
  t.learn_sigma = rng.bernoulli(0.5);
  t.smooth_epsilon = rng.uniform01() * 0.5;
  t.baseline_augment = rng.bernoulli(0.5);
  t.seed = rng.next_u64();
  t.log_batches = rng.bernoulli(0.5);
  t.encoder = pick(rng, {EncoderKind::toy_cnn, EncoderKind::small_residual_18, EncoderKind::vgg_19_like});
  t.projection_layers = 1 + static_cast<int>(rng.below(2));
  t.mixup_head_layers = 1 + static_cast<int>(rng.below(3));
  t.toy_feature_dim = 1 + static_cast<int>(rng.below(512));
  t.augment.max_rotation_deg = rng.uniform01() * 30;
  t.augment.jitter_min = 0.5 + rng.uniform01() * 0.5;
  return c;
}

}  // namespace

TEST_CASE("defaults parse from an empty object") {
  CHECK(parse_config("{}") == ExperimentConfig{});
  const TrainConfig t;
  CHECK(t.group_size == 4);
  CHECK(t.groups_per_batch == 2);
  CHECK(t.batch_size() == 8);
  CHECK(t.temperature == 0.5);
  CHECK(t.lambda == 0.1);
}

TEST_CASE("property: parse(serialize(c)) == c") {
  Rng rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    const ExperimentConfig c = random_config(rng);
    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
    CHECK(parse_train_config(serialize_train_config(c.train)) == c.train);
  }
}

TEST_CASE("file round trip") {
  Rng rng(1);
  const ExperimentConfig c = random_config(rng);
  const auto path = std::filesystem::temp_directory_path() / "nrl_test_config.json";
  save_config(path, c);
  CHECK(load_config(path) == c);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_config(path), IoError);
}

TEST_CASE("invalid configs are rejected with the offending key") {
  CHECK_THROWS_AS(parse_config("{"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"grop_size": 4}})"), doctest::Contains("grop_size"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"train": {"group_size": "four"}})"), doctest::Contains("group_size"),
                       ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"method": "magic"}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"noise": {"rate": 1.5}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"channels": 2}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"train": {"temperature": 0}})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"source": "folder"}})"), ValidationError);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig t;
  t.stage1_epochs = 30;
  t.learning_rate = 1e-3;
  CHECK(t.learning_rate_at(0) == 1e-3);
  CHECK(t.learning_rate_at(39) == 1e-3);
  CHECK(t.learning_rate_at(40) == doctest::Approx(1e-4));
  CHECK(t.learning_rate_at(55) == doctest::Approx(1e-5));
}

TEST_CASE("model config follows the dataset shape") {
  TrainConfig t;
  t.group_size = 3;
  t.toy_feature_dim = 32;
  const ModelConfig m = model_config_for(t, 3, 20, 24, 6);
  CHECK(m.input_channels == 3);
  CHECK(m.input_height == 20);
  CHECK(m.input_width == 24);
  CHECK(m.num_classes == 6);
  CHECK(m.group_size == 3);
  CHECK(m.feature_dim() == 32);
}
