#pragma once

#include <span>

#include "nrl/nn/tensor.hpp"

namespace nrl {

using nn::Mat;
using nn::Vec;

double cosine_similarity(std::span<const double> u, std::span<const double> v);
double cosine_similarity(const Vec& u, const Vec& v);

struct ContrastiveOptions {
  double temperature = 0.5;
  // false: the denominator runs over every other sample j != i and all four
  // view pairings, excluding the positive pair (and i's own views).
  // true: standard NT-Xent, denominator over every other row of the batch.
  bool include_positive_in_denominator = false;
};

// Embeddings of N samples, two strong views each, interleaved by sample:
// row 2i is view a of sample i, row 2i+1 is view b.
struct ContrastiveBatch {
  Mat embeddings;
  ContrastiveOptions options;

  int num_samples() const { return static_cast<int>(embeddings.rows() / 2); }
};

// Loss of one anchor. anchor_view is 0 (anchor = view a, positive = view b) or 1.
double contrastive_pair_loss(const ContrastiveBatch& batch, int sample, int anchor_view);

struct ContrastiveLoss {
  double sum = 0.0;   // both anchors of every sample
  double mean = 0.0;  // sum / 2N; what the optimizer consumes
  Mat grad_sum;       // d sum / d embeddings (filled when requested)
};

ContrastiveLoss contrastive_loss(const ContrastiveBatch& batch, bool with_gradient = false);

// Attention-weighted mixup of one group.
struct MixupResult {
  Vec mixed_feature;  // d
  Vec mixed_label;    // C
  Vec weights;        // M
};

// sum_i w_i V_i / sum_i w_i over the rows of group_features (M x d).
Vec mixup_features(const Mat& group_features, const Vec& weights);
// Same convex combination of the group's label rows (M x C). A group whose rows
// are identical returns that row exactly.
Vec mixup_label(const Mat& group_labels, const Vec& weights);
MixupResult mixup(const Mat& group_features, const Mat& group_labels, const Vec& weights);

struct MixupGradient {
  Mat features;  // M x d
  Vec weights;   // M
};
// Backward of mixup_features for upstream gradient g (length d).
MixupGradient mixup_features_backward(const Mat& group_features, const Vec& weights, const Vec& grad_out);
// d/dw of mixup_label for upstream gradient g (length C).
Vec mixup_label_backward(const Mat& group_labels, const Vec& weights, const Vec& grad_out);

// Learnable loss balance stored as log-sigma so that sigma = exp(s) > 0.
struct UncertaintyWeights {
  double log_sigma_mix = 0.0;         // s1, sigma_1 weights L_m
  double log_sigma_supervised = 0.0;  // s2, sigma_2 weights L_s

  double sigma_mix() const;
  double sigma_supervised() const;
};

// (1/sigma1) L_m + (1/sigma2) L_s + log(sigma1 sigma2). Throws on sigma <= 0.
double decision_loss(double mix_loss, double supervised_loss, double sigma_mix, double sigma_supervised);
double decision_loss(double mix_loss, double supervised_loss, const UncertaintyWeights& w);

struct DecisionGradient {
  double mix_loss = 0.0;          // dL/dL_m
  double supervised_loss = 0.0;   // dL/dL_s
  double sigma_mix = 0.0;         // dL/dsigma1
  double sigma_supervised = 0.0;  // dL/dsigma2
  double log_sigma_mix = 0.0;     // dL/ds1
  double log_sigma_supervised = 0.0;
};
DecisionGradient decision_loss_gradient(double mix_loss, double supervised_loss, double sigma_mix,
                                        double sigma_supervised);

enum class Stage { stage1, stage2 };

// stage1: L_c. stage2: L_d + lambda L_c.
double stage_loss(Stage stage, double contrastive, double decision, double lambda);

struct SupervisedLoss {
  double value = 0.0;
  Mat grad;  // d value / d logits
};

// Mean cross-entropy of softmax(logits) against probability-vector targets
// (hard one-hot or soft).
SupervisedLoss supervised_loss(const Mat& logits, const Mat& targets, bool with_gradient = false);

Mat softmax_rows(const Mat& logits);
Mat one_hot(std::span<const int> labels, int num_classes);
// (1 - eps) one_hot + eps / C
Mat smooth_labels(std::span<const int> labels, int num_classes, double epsilon);

}  // namespace nrl
