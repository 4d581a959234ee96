#include "nrl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "nrl/error.hpp"
#include "nrl/losses.hpp"
#include "nrl/text.hpp"

namespace nrl {

using nn::Mat;
using json = nlohmann::ordered_json;

namespace {

template <typename Fn>
Mat batched(std::span<const Image> images, int batch, Fn&& fn) {
  if (batch < 1) throw ValidationError("batch size must be >= 1");
  Mat out;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(batch), images.size() - start);
    const Mat part = fn(images.subspan(start, count));
    if (out.size() == 0) out.resize(static_cast<Eigen::Index>(images.size()), part.cols());
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) = part;
  }
  return out;
}

}  // namespace

Mat predict_logits(NoiseRobustModel& model, std::span<const Image> images, int batch) {
  return batched(images, batch, [&](std::span<const Image> part) { return model.classify(model.encode(part)); });
}

Mat extract_features(NoiseRobustModel& model, std::span<const Image> images, int batch) {
  return batched(images, batch, [&](std::span<const Image> part) { return model.encode(part); });
}

std::vector<int> argmax_rows(const Mat& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index idx = 0;
    m.row(i).maxCoeff(&idx);
    out[static_cast<std::size_t>(i)] = static_cast<int>(idx);
  }
  return out;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("roc_auc: scores and labels differ in length");
  long pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("roc_auc: labels must be 0 or 1");
    (l == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.fpr.push_back(0.0);
  roc.tpr.push_back(0.0);
  roc.thresholds.push_back(std::numeric_limits<double>::infinity());
  long tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      (labels[order[k]] == 1 ? tp : fp)++;
      ++k;
    }
    const double fpr = static_cast<double>(fp) / neg;
    const double tpr = static_cast<double>(tp) / pos;
    roc.auc += 0.5 * (fpr - roc.fpr.back()) * (tpr + roc.tpr.back());
    roc.fpr.push_back(fpr);
    roc.tpr.push_back(tpr);
    roc.thresholds.push_back(threshold);
  }
  return roc;
}

MetricsReport evaluate_predictions(std::span<const int> truth, const Mat& probabilities) {
  if (truth.empty()) throw ValidationError("evaluate: empty test set");
  if (static_cast<std::size_t>(probabilities.rows()) != truth.size()) {
    throw ValidationError("evaluate: prediction and label counts differ");
  }
  const int c = static_cast<int>(probabilities.cols());
  const auto pred = argmax_rows(probabilities);

  MetricsReport r;
  r.n_test = static_cast<long>(truth.size());
  r.confusion.assign(static_cast<std::size_t>(c), std::vector<long>(static_cast<std::size_t>(c), 0));
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= c) throw ValidationError("evaluate: test label out of range");
    ++r.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    correct += truth[i] == pred[i] ? 1 : 0;
  }
  r.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(r.n_test);
  r.accuracy_last3_avg = r.accuracy;

  int defined = 0;
  for (int k = 0; k < c; ++k) {
    ClassMetrics m;
    long tp = r.confusion[k][k], support = 0, predicted = 0;
    for (int j = 0; j < c; ++j) {
      support += r.confusion[k][j];
      predicted += r.confusion[j][k];
    }
    m.support = static_cast<int>(support);
    if (support == 0) {
      r.warnings.push_back("class " + std::to_string(k) + " absent from test set; excluded from macro averages");
      r.per_class.push_back(m);
      continue;
    }
    m.defined = true;
    m.recall = 100.0 * static_cast<double>(tp) / static_cast<double>(support);
    m.precision = predicted > 0 ? 100.0 * static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    ++defined;
    r.per_class.push_back(m);
  }
  if (defined > 0) {
    r.macro_precision /= defined;
    r.macro_recall /= defined;
    r.macro_f1 /= defined;
  }

  auto one_vs_rest = [&](int k) {
    std::vector<double> scores(truth.size());
    std::vector<int> labels(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probabilities(static_cast<Eigen::Index>(i), k);
      labels[i] = truth[i] == k ? 1 : 0;
    }
    try {
      RocCurve roc = roc_auc(scores, labels);
      r.auc.push_back(roc.auc);
      r.roc.push_back(std::move(roc));
    } catch (const ValidationError&) {
      r.auc.push_back(std::numeric_limits<double>::quiet_NaN());
      r.roc.emplace_back();
      r.warnings.push_back("AUC undefined for class " + std::to_string(k) + " (single-class labels)");
    }
  };
  if (c == 2) {
    one_vs_rest(1);
  } else {
    for (int k = 0; k < c; ++k) one_vs_rest(k);
  }
  return r;
}

MetricsReport evaluate(NoiseRobustModel& model, const NoisyDataset& test, int batch) {
  if (test.size() == 0) throw ValidationError("evaluate: empty test set");
  const Mat probs = softmax_rows(predict_logits(model, test.images, batch));
  const auto truth = test.true_labels();
  return evaluate_predictions(truth, probs);
}

Last3Summary average_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ValidationError("average_reports: no reports");
  Last3Summary s;
  for (const auto& r : reports) s.mean_accuracy += r.accuracy;
  s.mean_accuracy /= static_cast<double>(reports.size());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double gap = std::abs(reports[i].accuracy - s.mean_accuracy);
    if (gap <= best) {  // later reports win ties
      best = gap;
      s.selected = i;
    }
  }
  s.report = reports[s.selected];
  s.report.accuracy_last3_avg = s.mean_accuracy;
  return s;
}

Last3Summary average_last3(std::span<const MetricsReport> reports) {
  if (reports.size() != 3) {
    throw ValidationError("average_last3: expected exactly 3 reports, got " + std::to_string(reports.size()));
  }
  return average_reports(reports);
}

void export_features(NoiseRobustModel& model, const NoisyDataset& dataset, const std::filesystem::path& path,
                     int batch) {
  const Mat features = extract_features(model, dataset.images, batch);
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "# nrl features v1 dim=" << features.cols() << '\n';
  out << "index\ttrue_label\tgiven_label";
  for (Eigen::Index k = 0; k < features.cols(); ++k) out << "\tf" << k;
  out << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& rec = dataset.records[i];
    out << rec.index << '\t' << rec.true_label << '\t' << rec.given_label;
    for (Eigen::Index k = 0; k < features.cols(); ++k) {
      out << '\t' << text::format_double(features(static_cast<Eigen::Index>(i), k));
    }
    out << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

// ---------------------------------------------------------------- report I/O

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  json j;
  j["epoch"] = r.epoch;
  j["n_test"] = r.n_test;
  j["accuracy"] = r.accuracy;
  j["accuracy_last3_avg"] = r.accuracy_last3_avg;
  j["macro_precision"] = r.macro_precision;
  j["macro_recall"] = r.macro_recall;
  j["macro_f1"] = r.macro_f1;
  json classes = json::array();
  for (const auto& m : r.per_class) {
    classes.push_back(json{{"defined", m.defined},
                           {"support", m.support},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1}});
  }
  j["per_class"] = classes;
  json auc = json::array();
  for (double a : r.auc) auc.push_back(number_or_null(a));
  j["auc"] = auc;
  j["confusion_matrix"] = r.confusion;
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const json j = json::parse(text);
    r.epoch = j.at("epoch").get<int>();
    r.n_test = j.at("n_test").get<long>();
    r.accuracy = j.at("accuracy").get<double>();
    r.accuracy_last3_avg = j.at("accuracy_last3_avg").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    for (const auto& c : j.at("per_class")) {
      ClassMetrics m;
      m.defined = c.at("defined").get<bool>();
      m.support = c.at("support").get<int>();
      m.precision = c.at("precision").get<double>();
      m.recall = c.at("recall").get<double>();
      m.f1 = c.at("f1").get<double>();
      r.per_class.push_back(m);
    }
    for (const auto& a : j.at("auc")) r.auc.push_back(number_from(a));
    r.confusion = j.at("confusion_matrix").get<std::vector<std::vector<long>>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: malformed JSON: ") + e.what());
  }
  return r;
}

std::string report_to_text(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "test samples:            " << r.n_test << '\n'
     << "accuracy (last-3 avg):   " << r.accuracy_last3_avg << '\n'
     << "accuracy (selected, ep " << r.epoch << "): " << r.accuracy << '\n'
     << "macro precision/recall/F1: " << r.macro_precision << " / " << r.macro_recall << " / " << r.macro_f1 << '\n';
  os << "per class:\n";
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    os << "  class " << k << ": ";
    if (!m.defined) {
      os << "undefined (no test samples)\n";
      continue;
    }
    os << "P " << m.precision << "  R " << m.recall << "  F1 " << m.f1 << "  n=" << m.support << '\n';
  }
  os << std::setprecision(4) << "AUC:";
  for (double a : r.auc) os << ' ' << a;
  os << "\nconfusion matrix (rows = true, cols = predicted):\n";
  for (const auto& row : r.confusion) {
    os << ' ';
    for (long v : row) os << ' ' << std::setw(6) << v;
    os << '\n';
  }
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

void write_roc_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "curve,threshold,fpr,tpr\n";
  for (std::size_t k = 0; k < report.roc.size(); ++k) {
    const auto& roc = report.roc[k];
    for (std::size_t i = 0; i < roc.fpr.size(); ++i) {
      out << k << ',' << text::format_double(roc.thresholds[i]) << ',' << text::format_double(roc.fpr[i]) << ','
          << text::format_double(roc.tpr[i]) << '\n';
    }
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

void write_confusion_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << "true\\predicted";
  for (std::size_t k = 0; k < report.confusion.size(); ++k) out << ',' << k;
  out << '\n';
  for (std::size_t t = 0; t < report.confusion.size(); ++t) {
    out << t;
    for (long v : report.confusion[t]) out << ',' << v;
    out << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace nrl
