#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nrl/model.hpp"
#include "nrl/noise_injection.hpp"

namespace nrl {

// Forward passes in eval mode, `batch` images at a time.
nn::Mat predict_logits(NoiseRobustModel& model, std::span<const Image> images, int batch = 250);
nn::Mat extract_features(NoiseRobustModel& model, std::span<const Image> images, int batch = 250);
std::vector<int> argmax_rows(const nn::Mat& m);

struct ClassMetrics {
  bool defined = false;  // false when the class has no test samples
  int support = 0;
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
};

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;  // score at which each point is reached; +inf for the origin
  double auc = 0.0;
};

struct MetricsReport {
  int epoch = -1;
  long n_test = 0;
  double accuracy = 0.0;             // percent, this snapshot
  double accuracy_last3_avg = 0.0;   // percent; equals `accuracy` until averaged
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  // Binary tasks: one entry, class 1 as positive. Otherwise one-vs-rest per
  // class (NaN where a class is absent).
  std::vector<double> auc;
  std::vector<RocCurve> roc;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<std::string> warnings;
};

// Trapezoidal area under the empirical ROC curve. Tied scores form one threshold.
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

// Scores one set of predictions. `probabilities` is n x C (rows sum to 1).
MetricsReport evaluate_predictions(std::span<const int> truth, const nn::Mat& probabilities);

// Scores a frozen model on the test set's true labels.
MetricsReport evaluate(NoiseRobustModel& model, const NoisyDataset& test, int batch = 250);

struct Last3Summary {
  double mean_accuracy = 0.0;
  std::size_t selected = 0;  // index into the input of the report nearest the mean
  MetricsReport report;      // the selected report, accuracy_last3_avg = mean_accuracy
};

// Mean accuracy of exactly three snapshot reports (oldest first) plus the
// report closest to that mean; ties go to the latest.
Last3Summary average_last3(std::span<const MetricsReport> reports);
// Same rule over any non-empty number of reports (short runs).
Last3Summary average_reports(std::span<const MetricsReport> reports);

// Text table, one row per sample:
//   # nrl features v1 dim=<d>
//   index<TAB>true_label<TAB>given_label<TAB>f0<TAB>...<TAB>f{d-1}
void export_features(NoiseRobustModel& model, const NoisyDataset& dataset, const std::filesystem::path& path,
                     int batch = 250);

// JSON report (one object) and its human-readable twin.
std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);
std::string report_to_text(const MetricsReport& report);
void write_roc_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace nrl
