#include "nrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nrl/error.hpp"

namespace nrl {

using json = nlohmann::ordered_json;

std::string_view to_string(Method method) {
  switch (method) {
    case Method::ours: return "ours";
    case Method::default_baseline: return "default";
    case Method::label_smooth: return "label_smooth";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "ours") return Method::ours;
  if (text == "default" || text == "default_baseline") return Method::default_baseline;
  if (text == "label_smooth") return Method::label_smooth;
  throw ValidationError("unknown method '" + std::string(text) + "'");
}

std::string_view to_string(MixupGrouping grouping) {
  return grouping == MixupGrouping::intra_class ? "intra_class" : "inter_class";
}

MixupGrouping parse_mixup_grouping(std::string_view text) {
  if (text == "intra_class") return MixupGrouping::intra_class;
  if (text == "inter_class") return MixupGrouping::inter_class;
  throw ValidationError("unknown mixup grouping '" + std::string(text) + "'");
}

double TrainConfig::learning_rate_at(int epoch) const {
  if (epoch < stage1_epochs) return learning_rate;
  const int decays = (epoch - stage1_epochs) / lr_decay_every;
  return learning_rate * std::pow(lr_decay_factor, decays);
}

void TrainConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0) throw ValidationError("train: epoch counts must be >= 0");
  if (!(learning_rate > 0.0)) throw ValidationError("train: learning_rate must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ValidationError("train: lr_decay_factor must lie in (0, 1]");
  if (lr_decay_every < 1) throw ValidationError("train: lr_decay_every must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("train: Adam betas must lie in [0, 1)");
  if (groups_per_batch < 1) throw ValidationError("train: groups_per_batch (K) must be >= 1");
  if (group_size < 1) throw ValidationError("train: group_size (M) must be >= 1");
  if (!(temperature > 0.0)) throw ValidationError("train: temperature must be > 0");
  if (!(lambda >= 0.0)) throw ValidationError("train: lambda must be >= 0");
  if (!(smooth_epsilon >= 0.0 && smooth_epsilon <= 1.0)) throw ValidationError("train: smooth_epsilon must lie in [0, 1]");
  if (eval_batch_size < 1) throw ValidationError("train: eval_batch_size must be >= 1");
  if (method == Method::ours && use_contrastive && batch_size() < 2) {
    throw ValidationError("train: the contrastive loss needs a batch of at least 2 samples");
  }
}

void ExperimentConfig::validate() const {
  train.validate();
  if (dataset.channels != 1 && dataset.channels != 3) throw ValidationError("dataset: channels must be 1 or 3");
  if (dataset.height < 4 || dataset.width < 4) throw ValidationError("dataset: image size must be at least 4x4");
  if (dataset.source == DatasetSource::synthetic) {
    const auto& s = dataset.synthetic;
    if (s.num_classes < 2 || s.num_classes > 8) throw ValidationError("dataset.synthetic: num_classes must lie in [2, 8]");
    if (s.train_size < 1 || s.test_size < 1) throw ValidationError("dataset.synthetic: split sizes must be >= 1");
  } else if (dataset.train_root.empty() || dataset.test_root.empty()) {
    throw ValidationError("dataset: folder source needs train_root and test_root");
  }
  if (!(noise.rate >= 0.0 && noise.rate < 1.0)) throw ValidationError("noise: rate must lie in [0, 1)");
  if (!(noise.instance_tolerance > 0.0)) throw ValidationError("noise: instance_tolerance must be > 0");
  if (noise.instance_proxy_epochs < 1) throw ValidationError("noise: instance_proxy_epochs must be >= 1");
  if (!(noise.instance_proxy_learning_rate > 0.0)) {
    throw ValidationError("noise: instance_proxy_learning_rate must be > 0");
  }
}

ModelConfig model_config_for(const TrainConfig& train, int channels, int height, int width, int num_classes) {
  ModelConfig m;
  m.encoder = train.encoder;
  m.input_channels = channels;
  m.input_height = height;
  m.input_width = width;
  m.num_classes = num_classes;
  m.group_size = train.group_size;
  m.projection_layers = train.projection_layers;
  m.projection_dim = train.projection_dim;
  m.mixup_head_layers = train.mixup_head_layers;
  m.toy_feature_dim = train.toy_feature_dim;
  return m;
}

// ---------------------------------------------------------------- JSON

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("config: bad value for '" + path_ + key + "': " + e.what());
    }
  }

  template <typename E, typename Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    if (!j_.contains(key)) return;
    get(key, s);
    out = parse(s);
  }

  const json* child(const char* key) {
    if (!j_.contains(key)) return nullptr;
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw ValidationError("config: unknown key '" + path_ + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json augment_to_json(const AugmentConfig& a) {
  return json{{"rotate_prob", a.rotate_prob},   {"max_rotation_deg", a.max_rotation_deg},
              {"vflip_prob", a.vflip_prob},     {"hflip_prob", a.hflip_prob},
              {"blur_prob", a.blur_prob},       {"blur_sigma_min", a.blur_sigma_min},
              {"blur_sigma_max", a.blur_sigma_max}, {"jitter_prob", a.jitter_prob},
              {"jitter_min", a.jitter_min},     {"jitter_max", a.jitter_max}};
}

void augment_from_json(const json& j, AugmentConfig& a) {
  Reader r(j, "train.augment.");
  r.get("rotate_prob", a.rotate_prob);
  r.get("max_rotation_deg", a.max_rotation_deg);
  r.get("vflip_prob", a.vflip_prob);
  r.get("hflip_prob", a.hflip_prob);
  r.get("blur_prob", a.blur_prob);
  r.get("blur_sigma_min", a.blur_sigma_min);
  r.get("blur_sigma_max", a.blur_sigma_max);
  r.get("jitter_prob", a.jitter_prob);
  r.get("jitter_min", a.jitter_min);
  r.get("jitter_max", a.jitter_max);
  r.finish();
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["method"] = to_string(t.method);
  j["stage1_epochs"] = t.stage1_epochs;
  j["stage2_epochs"] = t.stage2_epochs;
  j["learning_rate"] = t.learning_rate;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["lr_decay_factor"] = t.lr_decay_factor;
  j["lr_decay_every"] = t.lr_decay_every;
  j["groups_per_batch"] = t.groups_per_batch;
  j["group_size"] = t.group_size;
  j["remainder_policy"] = to_string(t.remainder_policy);
  j["mixup_grouping"] = to_string(t.mixup_grouping);
  j["temperature"] = t.temperature;
  j["lambda"] = t.lambda;
  j["include_positive_in_denominator"] = t.include_positive_in_denominator;
  j["use_mixup"] = t.use_mixup;
  j["use_contrastive"] = t.use_contrastive;
  j["learn_sigma"] = t.learn_sigma;
  j["smooth_epsilon"] = t.smooth_epsilon;
  j["baseline_augment"] = t.baseline_augment;
  j["seed"] = t.seed;
  j["eval_batch_size"] = t.eval_batch_size;
  j["log_batches"] = t.log_batches;
  j["encoder"] = to_string(t.encoder);
  j["projection_layers"] = t.projection_layers;
  j["projection_dim"] = t.projection_dim;
  j["mixup_head_layers"] = t.mixup_head_layers;
  j["toy_feature_dim"] = t.toy_feature_dim;
  j["augment"] = augment_to_json(t.augment);
  return j;
}

void train_from_json(const json& j, TrainConfig& t) {
  Reader r(j, "train.");
  r.get_enum("method", t.method, parse_method);
  r.get("stage1_epochs", t.stage1_epochs);
  r.get("stage2_epochs", t.stage2_epochs);
  r.get("learning_rate", t.learning_rate);
  r.get("beta1", t.beta1);
  r.get("beta2", t.beta2);
  r.get("lr_decay_factor", t.lr_decay_factor);
  r.get("lr_decay_every", t.lr_decay_every);
  r.get("groups_per_batch", t.groups_per_batch);
  r.get("group_size", t.group_size);
  r.get_enum("remainder_policy", t.remainder_policy, parse_remainder_policy);
  r.get_enum("mixup_grouping", t.mixup_grouping, parse_mixup_grouping);
  r.get("temperature", t.temperature);
  r.get("lambda", t.lambda);
  r.get("include_positive_in_denominator", t.include_positive_in_denominator);
  r.get("use_mixup", t.use_mixup);
  r.get("use_contrastive", t.use_contrastive);
  r.get("learn_sigma", t.learn_sigma);
  r.get("smooth_epsilon", t.smooth_epsilon);
  r.get("baseline_augment", t.baseline_augment);
  r.get("seed", t.seed);
  r.get("eval_batch_size", t.eval_batch_size);
  r.get("log_batches", t.log_batches);
  r.get_enum("encoder", t.encoder, parse_encoder_kind);
  r.get("projection_layers", t.projection_layers);
  r.get("projection_dim", t.projection_dim);
  r.get("mixup_head_layers", t.mixup_head_layers);
  r.get("toy_feature_dim", t.toy_feature_dim);
  if (const json* a = r.child("augment")) augment_from_json(*a, t.augment);
  r.finish();
}

DatasetSource parse_source(std::string_view s) {
  if (s == "synthetic") return DatasetSource::synthetic;
  if (s == "folder") return DatasetSource::folder;
  throw ValidationError("unknown dataset source '" + std::string(s) + "'");
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["export_features"] = c.export_features;
  const auto& d = c.dataset;
  json syn{{"num_classes", d.synthetic.num_classes}, {"train_size", d.synthetic.train_size},
           {"test_size", d.synthetic.test_size},     {"seed", d.synthetic.seed},
           {"pixel_noise", d.synthetic.pixel_noise}, {"min_scale", d.synthetic.min_scale},
           {"max_scale", d.synthetic.max_scale}};
  j["dataset"] = json{{"source", d.source == DatasetSource::synthetic ? "synthetic" : "folder"},
                      {"train_root", d.train_root},
                      {"test_root", d.test_root},
                      {"height", d.height},
                      {"width", d.width},
                      {"channels", d.channels},
                      {"class_names", d.class_names},
                      {"standardize", d.standardize},
                      {"synthetic", syn}};
  const auto& n = c.noise;
  j["noise"] = json{{"kind", to_string(n.kind)},
                    {"rate", n.rate},
                    {"convention", to_string(n.convention)},
                    {"seed", n.seed},
                    {"manifest", n.manifest},
                    {"instance_tolerance", n.instance_tolerance},
                    {"instance_proxy_epochs", n.instance_proxy_epochs},
                    {"instance_proxy_learning_rate", n.instance_proxy_learning_rate}};
  j["train"] = train_to_json(c.train);
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader root(j, "");
  root.get("name", c.name);
  root.get("export_features", c.export_features);
  if (const json* d = root.child("dataset")) {
    Reader r(*d, "dataset.");
    r.get_enum("source", c.dataset.source, parse_source);
    r.get("train_root", c.dataset.train_root);
    r.get("test_root", c.dataset.test_root);
    r.get("height", c.dataset.height);
    r.get("width", c.dataset.width);
    r.get("channels", c.dataset.channels);
    r.get("class_names", c.dataset.class_names);
    r.get("standardize", c.dataset.standardize);
    if (const json* s = r.child("synthetic")) {
      Reader rs(*s, "dataset.synthetic.");
      auto& syn = c.dataset.synthetic;
      rs.get("num_classes", syn.num_classes);
      rs.get("train_size", syn.train_size);
      rs.get("test_size", syn.test_size);
      rs.get("seed", syn.seed);
      rs.get("pixel_noise", syn.pixel_noise);
      rs.get("min_scale", syn.min_scale);
      rs.get("max_scale", syn.max_scale);
      rs.finish();
    }
    r.finish();
  }
  if (const json* n = root.child("noise")) {
    Reader r(*n, "noise.");
    r.get_enum("kind", c.noise.kind, parse_noise_kind);
    r.get("rate", c.noise.rate);
    r.get_enum("convention", c.noise.convention, parse_convention);
    r.get("seed", c.noise.seed);
    r.get("manifest", c.noise.manifest);
    r.get("instance_tolerance", c.noise.instance_tolerance);
    r.get("instance_proxy_epochs", c.noise.instance_proxy_epochs);
    r.get("instance_proxy_learning_rate", c.noise.instance_proxy_learning_rate);
    r.finish();
  }
  if (const json* t = root.child("train")) train_from_json(*t, c.train);
  root.finish();
  c.validate();
  return c;
}

std::string serialize_train_config(const TrainConfig& config) { return train_to_json(config).dump(); }

TrainConfig parse_train_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("train config: invalid JSON: ") + e.what());
  }
  TrainConfig t;
  train_from_json(j, t);
  t.validate();
  return t;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << serialize_config(config);
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace nrl
