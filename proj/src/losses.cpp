#include "nrl/losses.hpp"

#include <algorithm>
#include <cmath>

#include "nrl/error.hpp"

namespace nrl {

namespace {

constexpr double kMinWeightSum = 1e-12;

void check_contrastive(const ContrastiveBatch& batch) {
  if (batch.embeddings.rows() % 2 != 0) throw ValidationError("contrastive loss: embedding row count must be even");
  if (batch.num_samples() < 2) throw ValidationError("contrastive loss: need at least N=2 samples");
  if (!(batch.options.temperature > 0.0)) throw ValidationError("contrastive loss: temperature must be positive");
}

Vec row_norms(const Mat& e) {
  Vec r = e.rowwise().norm();
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    if (r[k] == 0.0) throw ValidationError("contrastive loss: zero-norm embedding at row " + std::to_string(k));
  }
  return r;
}

double weight_sum(const Vec& weights, Eigen::Index expected, const char* op) {
  if (weights.size() != expected) {
    throw ValidationError(std::string(op) + ": expected " + std::to_string(expected) + " weights, got " +
                          std::to_string(weights.size()));
  }
  const double total = weights.sum();
  if (total < kMinWeightSum) throw ValidationError(std::string(op) + ": attention weights sum below 1e-12");
  return total;
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError("cosine_similarity: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw ValidationError("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double cosine_similarity(const Vec& u, const Vec& v) {
  return cosine_similarity(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                           std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

double contrastive_pair_loss(const ContrastiveBatch& batch, int sample, int anchor_view) {
  check_contrastive(batch);
  const int n = batch.num_samples();
  if (sample < 0 || sample >= n) throw ValidationError("contrastive_pair_loss: sample index out of range");
  if (anchor_view != 0 && anchor_view != 1) throw ValidationError("contrastive_pair_loss: anchor_view must be 0 or 1");
  const double tau = batch.options.temperature;
  const Mat& e = batch.embeddings;
  auto sim = [&](Eigen::Index a, Eigen::Index b) {
    return cosine_similarity(Vec(e.row(a).transpose()), Vec(e.row(b).transpose()));
  };
  const Eigen::Index anchor = 2 * sample + anchor_view;
  const Eigen::Index positive = 2 * sample + (1 - anchor_view);
  double denom = 0.0;
  if (batch.options.include_positive_in_denominator) {
    for (Eigen::Index k = 0; k < e.rows(); ++k) {
      if (k != anchor) denom += std::exp(sim(anchor, k) / tau);
    }
  } else {
    for (int j = 0; j < n; ++j) {
      if (j == sample) continue;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) denom += std::exp(sim(2 * sample + a, 2 * j + b) / tau);
    }
  }
  return -sim(anchor, positive) / tau + std::log(denom);
}

ContrastiveLoss contrastive_loss(const ContrastiveBatch& batch, bool with_gradient) {
  check_contrastive(batch);
  const Mat& e = batch.embeddings;
  const int n = batch.num_samples();
  const Eigen::Index rows = e.rows();
  const double tau = batch.options.temperature;

  const Vec r = row_norms(e);
  const Mat u = r.cwiseInverse().asDiagonal() * e;
  const Mat s = u * u.transpose();
  const Mat x = (s.array() / tau).exp().matrix();

  ContrastiveLoss out;
  Mat g;
  if (with_gradient) g = Mat::Zero(rows, rows);

  if (!batch.options.include_positive_in_denominator) {
    // Per-sample block sums: block(i, j) = sum of exp(sim / tau) over the 2x2 view pairs.
    Mat block(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) block(i, j) = x.block<2, 2>(2 * i, 2 * j).sum();
    for (int i = 0; i < n; ++i) {
      const double denom = block.row(i).sum() - block(i, i);
      const double pair = -s(2 * i, 2 * i + 1) / tau + std::log(denom);
      // Both anchors of sample i share the positive similarity and the denominator.
      out.sum += 2.0 * pair;
      if (with_gradient) {
        for (int a = 0; a < 2; ++a) {
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            for (int b = 0; b < 2; ++b) g(2 * i + a, 2 * j + b) += 2.0 * x(2 * i + a, 2 * j + b) / (tau * denom);
          }
        }
        g(2 * i, 2 * i + 1) -= 2.0 / tau;
      }
    }
  } else {
    for (Eigen::Index a = 0; a < rows; ++a) {
      const Eigen::Index pos = a ^ 1;
      const double denom = x.row(a).sum() - x(a, a);
      out.sum += -s(a, pos) / tau + std::log(denom);
      if (with_gradient) {
        for (Eigen::Index k = 0; k < rows; ++k) {
          if (k != a) g(a, k) += x(a, k) / (tau * denom);
        }
        g(a, pos) -= 1.0 / tau;
      }
    }
  }
  out.mean = out.sum / static_cast<double>(rows);

  if (with_gradient) {
    // S = U U^T with unit rows; then through the row normalization.
    const Mat du = (g + g.transpose()) * u;
    out.grad_sum.resize(rows, e.cols());
    for (Eigen::Index k = 0; k < rows; ++k) {
      const double radial = u.row(k).dot(du.row(k));
      out.grad_sum.row(k) = (du.row(k) - radial * u.row(k)) / r[k];
    }
  }
  return out;
}

Vec mixup_features(const Mat& group_features, const Vec& weights) {
  const double total = weight_sum(weights, group_features.rows(), "mixup_features");
  return (group_features.transpose() * weights) / total;
}

Vec mixup_label(const Mat& group_labels, const Vec& weights) {
  const double total = weight_sum(weights, group_labels.rows(), "mixup_label");
  bool shared = true;
  for (Eigen::Index i = 1; i < group_labels.rows() && shared; ++i) shared = group_labels.row(i) == group_labels.row(0);
  // Intra-class group: the mixed sample inherits the shared label exactly.
  if (shared) return group_labels.row(0).transpose();
  return (group_labels.transpose() * weights) / total;
}

MixupResult mixup(const Mat& group_features, const Mat& group_labels, const Vec& weights) {
  if (group_features.rows() != group_labels.rows()) throw ValidationError("mixup: feature and label row counts differ");
  return {mixup_features(group_features, weights), mixup_label(group_labels, weights), weights};
}

MixupGradient mixup_features_backward(const Mat& group_features, const Vec& weights, const Vec& grad_out) {
  const double total = weight_sum(weights, group_features.rows(), "mixup_features_backward");
  const Vec mixed = (group_features.transpose() * weights) / total;
  MixupGradient g;
  g.features = (weights / total) * grad_out.transpose();
  g.weights = ((group_features * grad_out).array() - mixed.dot(grad_out)).matrix() / total;
  return g;
}

Vec mixup_label_backward(const Mat& group_labels, const Vec& weights, const Vec& grad_out) {
  const double total = weight_sum(weights, group_labels.rows(), "mixup_label_backward");
  const Vec mixed = (group_labels.transpose() * weights) / total;
  return ((group_labels * grad_out).array() - mixed.dot(grad_out)).matrix() / total;
}

double UncertaintyWeights::sigma_mix() const { return std::exp(log_sigma_mix); }
double UncertaintyWeights::sigma_supervised() const { return std::exp(log_sigma_supervised); }

double decision_loss(double mix_loss, double supervised_loss, double sigma_mix, double sigma_supervised) {
  if (!(sigma_mix > 0.0) || !(sigma_supervised > 0.0)) {
    throw ValidationError("decision_loss: sigma values must be strictly positive");
  }
  return mix_loss / sigma_mix + supervised_loss / sigma_supervised + std::log(sigma_mix * sigma_supervised);
}

double decision_loss(double mix_loss, double supervised_loss, const UncertaintyWeights& w) {
  // log(sigma1 sigma2) = s1 + s2 exactly under the exponential parameterization.
  return mix_loss * std::exp(-w.log_sigma_mix) + supervised_loss * std::exp(-w.log_sigma_supervised) +
         w.log_sigma_mix + w.log_sigma_supervised;
}

DecisionGradient decision_loss_gradient(double mix_loss, double supervised_loss, double sigma_mix,
                                        double sigma_supervised) {
  if (!(sigma_mix > 0.0) || !(sigma_supervised > 0.0)) {
    throw ValidationError("decision_loss_gradient: sigma values must be strictly positive");
  }
  DecisionGradient g;
  g.mix_loss = 1.0 / sigma_mix;
  g.supervised_loss = 1.0 / sigma_supervised;
  g.sigma_mix = -mix_loss / (sigma_mix * sigma_mix) + 1.0 / sigma_mix;
  g.sigma_supervised = -supervised_loss / (sigma_supervised * sigma_supervised) + 1.0 / sigma_supervised;
  g.log_sigma_mix = g.sigma_mix * sigma_mix;
  g.log_sigma_supervised = g.sigma_supervised * sigma_supervised;
  return g;
}

double stage_loss(Stage stage, double contrastive, double decision, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("stage_loss: lambda must be non-negative");
  return stage == Stage::stage1 ? contrastive : decision + lambda * contrastive;
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

SupervisedLoss supervised_loss(const Mat& logits, const Mat& targets, bool with_gradient) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
    throw ValidationError("supervised_loss: logits and targets shapes differ");
  }
  if (logits.rows() == 0) throw ValidationError("supervised_loss: empty batch");
  const double n = static_cast<double>(logits.rows());
  SupervisedLoss out;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    out.value += (targets.row(i).array() * (lse - logits.row(i).array())).sum();
  }
  out.value /= n;
  if (with_gradient) {
    // d/dz of -sum_c y_c log p_c is p * sum(y) - y; sum(y) = 1 for probability targets.
    const Vec mass = targets.rowwise().sum();
    out.grad = (mass.asDiagonal() * softmax_rows(logits) - targets) / n;
  }
  return out;
}

Mat one_hot(std::span<const int> labels, int num_classes) {
  Mat out = Mat::Zero(static_cast<Eigen::Index>(labels.size()), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ValidationError("one_hot: label out of range");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

Mat smooth_labels(std::span<const int> labels, int num_classes, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ValidationError("smooth_labels: epsilon must lie in [0, 1]");
  Mat out = one_hot(labels, num_classes) * (1.0 - epsilon);
  out.array() += epsilon / num_classes;
  return out;
}

}  // namespace nrl
