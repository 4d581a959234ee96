#include "nrl/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "nrl/augmentation.hpp"
#include "nrl/error.hpp"
#include "nrl/grouping_sampler.hpp"

namespace nrl {

using nn::Mat;
using nn::Mode;
using nn::Tensor;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kModelStream = 1;
constexpr std::uint64_t kAugmentStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kGroupStream = 4;
constexpr std::uint64_t kBatchStream = 5;

std::uint64_t view_seed(const TrainConfig& cfg, int epoch, std::size_t index) {
  return derive_seed(cfg.seed, {kAugmentStream, static_cast<std::uint64_t>(epoch), index});
}

struct Accumulator {
  double loss = 0, contrastive = 0, mix = 0, supervised = 0;
  long correct = 0, seen = 0;
  int steps = 0;

  void add(const StepResult& r, long batch) {
    loss += r.loss;
    contrastive += r.contrastive_loss;
    mix += r.mix_loss;
    supervised += r.supervised_loss;
    correct += r.correct;
    seen += batch;
    ++steps;
  }
};

[[noreturn]] void diverged(const TrainState& state, int epoch, int step, const StepResult& r) {
  const UncertaintyWeights w = state.sigmas();
  std::ostringstream os;
  os << "non-finite loss at epoch " << epoch << ", step " << step << " (phase " << to_string(state.phase)
     << "): total=" << r.loss << " contrastive=" << r.contrastive_loss << " mix=" << r.mix_loss
     << " supervised=" << r.supervised_loss << " sigma1=" << w.sigma_mix() << " sigma2=" << w.sigma_supervised()
     << " params_checksum=" << std::hex << parameter_checksum(state.model->all_parameters());
  throw TrainingError(os.str());
}

std::vector<Image> weak_views(const NoisyDataset& data, std::span<const std::size_t> idx, const TrainConfig& cfg,
                              int epoch) {
  const bool augment = cfg.method == Method::ours || cfg.baseline_augment;
  std::vector<Image> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    out.push_back(augment ? weak_view_seeded(data.images.at(i), view_seed(cfg, epoch, i), cfg.augment)
                          : data.images.at(i));
  }
  return out;
}

// Strong views interleaved by sample: a0, b0, a1, b1, ...
std::vector<Image> strong_pairs(const NoisyDataset& data, std::span<const std::size_t> idx, const TrainConfig& cfg,
                                int epoch) {
  std::vector<Image> out;
  out.reserve(2 * idx.size());
  for (std::size_t i : idx) {
    const std::uint64_t s = view_seed(cfg, epoch, i);
    out.push_back(strong_view_seeded(data.images.at(i), s, 0, cfg.augment));
    out.push_back(strong_view_seeded(data.images.at(i), s, 1, cfg.augment));
  }
  return out;
}

std::vector<nn::Parameter*> concat(std::vector<nn::Parameter*> a, const std::vector<nn::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void finish_epoch(TrainState& state, int epoch, TrainPhase phase, double lr, const Accumulator& acc,
                  const NoisyDataset* test, const TrainHooks& hooks, bool supervised) {
  EpochMetrics m;
  m.epoch = epoch;
  m.phase = phase;
  m.learning_rate = lr;
  m.steps = acc.steps;
  if (acc.steps > 0) {
    m.loss = acc.loss / acc.steps;
    m.contrastive_loss = acc.contrastive / acc.steps;
    m.mix_loss = acc.mix / acc.steps;
    m.supervised_loss = acc.supervised / acc.steps;
  }
  const UncertaintyWeights w = state.sigmas();
  m.sigma_mix = w.sigma_mix();
  m.sigma_supervised = w.sigma_supervised();
  if (!(m.sigma_mix > 0.0) || !(m.sigma_supervised > 0.0)) {
    throw TrainingError("sigma left the positive range at epoch " + std::to_string(epoch));
  }
  if (supervised && acc.seen > 0) m.train_accuracy = 100.0 * static_cast<double>(acc.correct) / acc.seen;
  std::optional<MetricsReport> report;
  if (test != nullptr && test->size() > 0) {
    report = evaluate(*state.model, *test, state.config.eval_batch_size);
    report->epoch = epoch;
    m.test_accuracy = report->accuracy;
  }
  state.history.push_back(m);
  state.epoch = epoch + 1;
  if (hooks.on_epoch_end) hooks.on_epoch_end(state, m, report ? &*report : nullptr);
}

}  // namespace

std::string_view to_string(TrainPhase phase) {
  switch (phase) {
    case TrainPhase::initial: return "initial";
    case TrainPhase::stage1: return "stage1";
    case TrainPhase::stage2: return "stage2";
    case TrainPhase::baseline: return "baseline";
    case TrainPhase::finished: return "finished";
  }
  return "?";
}

TrainPhase parse_train_phase(std::string_view text) {
  for (TrainPhase p : {TrainPhase::initial, TrainPhase::stage1, TrainPhase::stage2, TrainPhase::baseline,
                       TrainPhase::finished}) {
    if (text == to_string(p)) return p;
  }
  throw ValidationError("unknown training phase '" + std::string(text) + "'");
}

UncertaintyWeights TrainState::sigmas() const {
  if (!log_sigma) return {};
  return {log_sigma->value(0, 0), log_sigma->value(0, 1)};
}

std::vector<nn::Parameter*> TrainState::all_parameters() {
  auto params = model->all_parameters();
  params.push_back(log_sigma.get());
  return params;
}

TrainState init_state(const TrainConfig& config, const ModelConfig& model_config) {
  config.validate();
  model_config.validate();
  if (model_config.group_size != config.group_size) {
    throw ValidationError("init_state: model group size differs from the training group size");
  }
  TrainState s;
  s.config = config;
  s.model_config = model_config;
  s.model = std::make_unique<NoiseRobustModel>(model_config, derive_seed(config.seed, {kModelStream}));
  s.log_sigma = std::make_unique<nn::Parameter>("log_sigma", Mat::Zero(1, 2), config.learn_sigma);
  s.optimizer = nn::Adam({config.beta1, config.beta2, 1e-8});
  return s;
}

StepResult stage1_step(TrainState& state, const NoisyDataset& train, std::span<const std::size_t> idx, int epoch,
                       double lr, StepAction action) {
  const TrainConfig& cfg = state.config;
  NoiseRobustModel& model = *state.model;
  const Mat features = model.encode(strong_pairs(train, idx, cfg, epoch), Mode::train);
  ContrastiveBatch batch;
  batch.options = {cfg.temperature, cfg.include_positive_in_denominator};
  batch.embeddings = model.projection().forward(Tensor::from_matrix(features), Mode::train).data;
  const ContrastiveLoss lc = contrastive_loss(batch, action != StepAction::loss_only);

  StepResult r;
  r.loss = r.contrastive_loss = lc.mean;
  if (action == StepAction::loss_only || !std::isfinite(r.loss)) return r;
  auto params = concat(model.encoder_parameters(), model.projection_parameters());
  nn::zero_grad(params);
  const double scale = 1.0 / static_cast<double>(batch.embeddings.rows());
  const Tensor d_features = model.projection().backward(Tensor::from_matrix(lc.grad_sum * scale));
  model.encoder().backward(d_features);
  if (action == StepAction::update) state.optimizer.step(params, lr);
  return r;
}

StepResult stage2_step(TrainState& state, const NoisyDataset& train, const MiniGroupBatch& batch, int epoch,
                       double lr, StepAction action) {
  const bool apply_update = action != StepAction::loss_only;
  const TrainConfig& cfg = state.config;
  NoiseRobustModel& model = *state.model;
  const bool ours = cfg.method == Method::ours;
  const bool use_contrastive = ours && cfg.use_contrastive && cfg.lambda > 0.0;
  const bool use_mixup = ours && cfg.use_mixup;

  const auto idx = batch.indices();
  const int b = static_cast<int>(idx.size());
  const int k = batch.groups_per_batch;
  const int m = batch.group_size;
  const int d = model.feature_dim();
  const int c = train.num_classes;

  std::vector<int> given(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) given[i] = train.records.at(idx[i]).given_label;
  const Mat targets = cfg.method == Method::label_smooth ? smooth_labels(given, c, cfg.smooth_epsilon)
                                                         : one_hot(given, c);

  std::vector<Image> views = weak_views(train, idx, cfg, epoch);
  if (use_contrastive) {
    auto strong = strong_pairs(train, idx, cfg, epoch);
    views.insert(views.end(), std::make_move_iterator(strong.begin()), std::make_move_iterator(strong.end()));
  }
  const Mat features = model.encode(views, Mode::train);
  const Mat v = features.topRows(b);

  StepResult r;
  Mat d_features = Mat::Zero(features.rows(), features.cols());

  // Contrastive branch on the strong-view rows.
  ContrastiveLoss lc;
  if (use_contrastive) {
    ContrastiveBatch cb;
    cb.options = {cfg.temperature, cfg.include_positive_in_denominator};
    cb.embeddings = model.projection().forward(Tensor::from_matrix(features.bottomRows(2 * b)), Mode::train).data;
    lc = contrastive_loss(cb, apply_update);
    r.contrastive_loss = lc.mean;
  }

  // Mixup branch: attention weights per group, mixed features and labels.
  Mat attention, v_mix, y_mix;
  if (use_mixup) {
    const Mat grouped = Eigen::Map<const Mat>(v.data(), k, static_cast<Eigen::Index>(m) * d);
    attention = model.mixup_head().forward(Tensor::from_matrix(grouped), Mode::train).data;
    v_mix.resize(k, d);
    y_mix.resize(k, c);
    for (int g = 0; g < k; ++g) {
      const MixupResult mr = mixup(v.middleRows(g * m, m), targets.middleRows(g * m, m), attention.row(g).transpose());
      v_mix.row(g) = mr.mixed_feature.transpose();
      y_mix.row(g) = mr.mixed_label.transpose();
    }
  }

  Mat classifier_in = v;
  if (use_mixup) {
    classifier_in.conservativeResize(b + k, Eigen::NoChange);
    classifier_in.bottomRows(k) = v_mix;
  }
  const Mat logits = model.classifier().forward(Tensor::from_matrix(classifier_in), Mode::train).data;
  const SupervisedLoss ls = supervised_loss(logits.topRows(b), targets, apply_update);
  r.supervised_loss = ls.value;
  SupervisedLoss lm;
  if (use_mixup) {
    lm = supervised_loss(logits.bottomRows(k), y_mix, apply_update);
    r.mix_loss = lm.value;
  }

  const UncertaintyWeights w = state.sigmas();
  double coef_mix = 1.0, coef_sup = 1.0;
  if (use_mixup) {
    r.loss = decision_loss(r.mix_loss, r.supervised_loss, w);
    coef_mix = std::exp(-w.log_sigma_mix);
    coef_sup = std::exp(-w.log_sigma_supervised);
  } else {
    r.loss = r.supervised_loss;
  }
  if (use_contrastive) r.loss += cfg.lambda * r.contrastive_loss;

  const auto pred = argmax_rows(logits.topRows(b));
  for (int i = 0; i < b; ++i) r.correct += pred[static_cast<std::size_t>(i)] == given[static_cast<std::size_t>(i)];

  if (!apply_update || !std::isfinite(r.loss)) return r;

  auto params = state.all_parameters();
  nn::zero_grad(params);

  Mat d_logits(logits.rows(), logits.cols());
  d_logits.topRows(b) = coef_sup * ls.grad;
  if (use_mixup) d_logits.bottomRows(k) = coef_mix * lm.grad;
  const Mat d_classifier_in = model.classifier().backward(Tensor::from_matrix(std::move(d_logits))).data;
  d_features.topRows(b) = d_classifier_in.topRows(b);

  if (use_mixup) {
    // dL_m / dY_mix for the label path: -(1/K) log softmax.
    const Mat log_probs = softmax_rows(logits.bottomRows(k)).array().log().matrix();
    Mat d_attention(k, m);
    for (int g = 0; g < k; ++g) {
      const Vec weights = attention.row(g).transpose();
      const Mat vg = v.middleRows(g * m, m);
      const MixupGradient mg = mixup_features_backward(vg, weights, d_classifier_in.row(b + g).transpose());
      d_features.middleRows(g * m, m) += mg.features;
      const Vec d_label = (-coef_mix / k) * log_probs.row(g).transpose();
      const Vec dw = mg.weights + mixup_label_backward(targets.middleRows(g * m, m), weights, d_label);
      d_attention.row(g) = dw.transpose();
    }
    const Mat d_grouped = model.mixup_head().backward(Tensor::from_matrix(std::move(d_attention))).data;
    d_features.topRows(b) += Eigen::Map<const Mat>(d_grouped.data(), b, d);
    if (cfg.learn_sigma) {
      state.log_sigma->grad(0, 0) = 1.0 - coef_mix * r.mix_loss;
      state.log_sigma->grad(0, 1) = 1.0 - coef_sup * r.supervised_loss;
    }
  }

  if (use_contrastive) {
    const double scale = cfg.lambda / static_cast<double>(2 * b);
    const Mat d_strong = model.projection().backward(Tensor::from_matrix(lc.grad_sum * scale)).data;
    d_features.bottomRows(2 * b) = d_strong;
  }
  model.encoder().backward(Tensor::from_matrix(std::move(d_features)));

  // only the heads in the active objective are stepped
  std::vector<nn::Parameter*> active = concat(model.encoder_parameters(), model.classifier_parameters());
  if (use_mixup) {
    active = concat(std::move(active), model.mixup_parameters());
    if (cfg.learn_sigma) active.push_back(state.log_sigma.get());
  }
  if (use_contrastive) active = concat(std::move(active), model.projection_parameters());
  if (action == StepAction::update) state.optimizer.step(active, lr);
  return r;
}

void train_stage1(TrainState& state, const NoisyDataset& train, const NoisyDataset* test, const TrainHooks& hooks) {
  const TrainConfig& cfg = state.config;
  if (cfg.method != Method::ours) throw ValidationError("train_stage1: only the full method has a warm-up stage");
  train.validate();
  const std::size_t nb = static_cast<std::size_t>(cfg.batch_size());
  if (cfg.stage1_epochs > 0 && train.size() < nb) {
    throw ValidationError("train_stage1: dataset has fewer samples than one batch (" + std::to_string(nb) + ")");
  }
  state.phase = TrainPhase::stage1;
  for (int epoch = state.epoch; epoch < cfg.stage1_epochs; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);
    Accumulator acc;
    for (std::size_t start = 0; start + nb <= order.size(); start += nb) {
      const std::span<const std::size_t> idx(order.data() + start, nb);
      const StepResult r = stage1_step(state, train, idx, epoch, lr, StepAction::update);
      if (!std::isfinite(r.loss)) diverged(state, epoch, acc.steps, r);
      acc.add(r, 0);
    }
    finish_epoch(state, epoch, TrainPhase::stage1, lr, acc, test, hooks, false);
  }
  if (state.epoch < cfg.stage1_epochs) state.epoch = cfg.stage1_epochs;
}

namespace {

void supervised_epochs(TrainState& state, const NoisyDataset& train, const NoisyDataset* test,
                       const TrainHooks& hooks, TrainPhase phase, int first, int end, int group_size, int k) {
  const TrainConfig& cfg = state.config;
  train.validate();
  state.phase = phase;
  for (int epoch = std::max(state.epoch, first); epoch < end; ++epoch) {
    const double lr = cfg.learning_rate_at(epoch);
    const auto e = static_cast<std::uint64_t>(epoch);
    std::vector<MiniGroup> groups;
    if (cfg.method == Method::ours && cfg.use_mixup && cfg.mixup_grouping == MixupGrouping::inter_class) {
      groups = build_mixed_groups(train.size(), group_size, derive_seed(cfg.seed, {kGroupStream, e}));
    } else {
      groups = build_groups(train.records, group_size, derive_seed(cfg.seed, {kGroupStream, e}), cfg.remainder_policy)
                   .groups;
    }
    BatchStream stream(std::move(groups), k, derive_seed(cfg.seed, {kBatchStream}), e);
    Accumulator acc;
    std::size_t ordinal = 0;
    while (auto batch = stream.next()) {
      if (cfg.log_batches && hooks.on_batch) hooks.on_batch(describe_batch(*batch, ordinal));
      ++ordinal;
      const StepResult r = stage2_step(state, train, *batch, epoch, lr, StepAction::update);
      if (!std::isfinite(r.loss)) diverged(state, epoch, acc.steps, r);
      acc.add(r, static_cast<long>(batch->size()));
    }
    finish_epoch(state, epoch, phase, lr, acc, test, hooks, true);
  }
}

}  // namespace

void train_stage2(TrainState& state, const NoisyDataset& train, const NoisyDataset* test, const TrainHooks& hooks) {
  const TrainConfig& cfg = state.config;
  if (cfg.method != Method::ours) throw ValidationError("train_stage2: only the full method has a joint stage");
  // Without L_c the warm-up has no objective and its epochs are skipped.
  if (cfg.use_contrastive && state.epoch < cfg.stage1_epochs) {
    throw ValidationError("train_stage2: stage 1 has not completed");
  }
  supervised_epochs(state, train, test, hooks, TrainPhase::stage2, cfg.stage1_epochs, cfg.total_epochs(),
                    cfg.group_size, cfg.groups_per_batch);
  state.phase = TrainPhase::finished;
}

void train_baseline(TrainState& state, const NoisyDataset& train, const NoisyDataset* test,
                    const TrainHooks& hooks) {
  const TrainConfig& cfg = state.config;
  if (cfg.method == Method::ours) throw ValidationError("train_baseline: method must be default or label_smooth");
  supervised_epochs(state, train, test, hooks, TrainPhase::baseline, 0, cfg.total_epochs(), 1, cfg.batch_size());
  state.phase = TrainPhase::finished;
}

void train(TrainState& state, const NoisyDataset& train, const NoisyDataset* test, const TrainHooks& hooks) {
  if (state.config.method != Method::ours) {
    train_baseline(state, train, test, hooks);
    return;
  }
  if (state.config.use_contrastive) train_stage1(state, train, test, hooks);
  train_stage2(state, train, test, hooks);
}

}  // namespace nrl
