#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nrl/error.hpp"
#include "nrl/evaluation.hpp"
#include "support.hpp"

using namespace nrl;
using namespace nrl::testing;

namespace {

Mat probs_for(const std::vector<int>& pred, int classes) {
  Mat p = Mat::Constant(static_cast<int>(pred.size()), classes, 0.1 / (classes - 1));
  for (std::size_t i = 0; i < pred.size(); ++i) p(static_cast<int>(i), pred[i]) = 0.9;
  return p;
}

MetricsReport with_accuracy(double acc, int epoch) {
  MetricsReport r;
  r.accuracy = r.accuracy_last3_avg = acc;
  r.epoch = epoch;
  return r;
}

// Pairwise oracle: P(score of a positive > score of a negative), ties count half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("roc examples") {
  const std::vector<double> s = {0.9, 0.8, 0.3, 0.1};
  const std::vector<int> y = {1, 0, 1, 0};
  const RocCurve r = roc_auc(s, y);
  CHECK(r.auc == doctest::Approx(0.75));
  CHECK(r.fpr.front() == 0.0);
  CHECK(r.tpr.front() == 0.0);
  CHECK(std::isinf(r.thresholds.front()));
  CHECK(r.fpr.back() == 1.0);
  CHECK(r.tpr.back() == 1.0);

  CHECK(roc_auc(std::vector<double>{0.9, 0.7, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}).auc == doctest::Approx(1.0));
  CHECK(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{1, 0, 1, 0, 0, 1}).auc == doctest::Approx(0.5));
  CHECK_THROWS_AS(roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), ValidationError);
}

TEST_CASE("property: AUC matches the pairwise oracle and ignores monotone transforms") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(40));
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      // coarse scores so ties happen
      s[static_cast<std::size_t>(i)] = static_cast<double>(rng.below(8)) / 8.0;
      y[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    const double auc = roc_auc(s, y).auc;
    CHECK(auc == doctest::Approx(pairwise_auc(s, y)).epsilon(1e-12));
    std::vector<double> t = s;
    for (auto& v : t) v = std::exp(3 * v) - 7;
    CHECK(roc_auc(t, y).auc == doctest::Approx(auc).epsilon(1e-12));
  }
}

TEST_CASE("perfect and constant predictions") {
  const std::vector<int> truth = {0, 1, 0, 1, 1, 0};
  const MetricsReport perfect = evaluate_predictions(truth, probs_for(truth, 2));
  CHECK(perfect.accuracy == 100.0);
  CHECK(perfect.macro_f1 == doctest::Approx(100.0));
  CHECK(perfect.confusion == std::vector<std::vector<long>>{{3, 0}, {0, 3}});
  CHECK(perfect.auc.size() == 1);
  CHECK(perfect.auc[0] == doctest::Approx(1.0));

  const MetricsReport constant = evaluate_predictions(truth, probs_for(std::vector<int>(6, 1), 2));
  CHECK(constant.accuracy == doctest::Approx(50.0));
  CHECK(constant.per_class[1].recall == 100.0);
  CHECK(constant.per_class[0].recall == 0.0);
  CHECK(constant.per_class[0].precision == 0.0);
}

TEST_CASE("hand-built three-class confusion") {
  const std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  const std::vector<int> pred = {0, 0, 1, 2, 2, 2};
  const MetricsReport r = evaluate_predictions(truth, probs_for(pred, 3));
  CHECK(r.n_test == 6);
  CHECK(r.confusion == std::vector<std::vector<long>>{{2, 0, 0}, {0, 1, 1}, {0, 0, 2}});
  CHECK(r.accuracy == doctest::Approx(500.0 / 6));
  CHECK(r.per_class[2].precision == doctest::Approx(200.0 / 3));
  CHECK(r.per_class[1].recall == doctest::Approx(50.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(200.0 / 3));
  CHECK(r.per_class[2].f1 == doctest::Approx(80.0));
  CHECK(r.macro_f1 == doctest::Approx((100.0 + 200.0 / 3 + 80.0) / 3));
  CHECK(r.auc.size() == 3);
}

TEST_CASE("absent class is undefined and excluded from macro averages") {
  const std::vector<int> truth = {0, 0, 1, 1};
  const MetricsReport r = evaluate_predictions(truth, probs_for({0, 1, 1, 1}, 3));
  CHECK(!r.per_class[2].defined);
  CHECK(!r.warnings.empty());
  double f1 = 0;
  for (int c = 0; c < 2; ++c) f1 += r.per_class[static_cast<std::size_t>(c)].f1;
  CHECK(r.macro_f1 == doctest::Approx(f1 / 2));
  CHECK(std::isnan(r.auc[2]));
  CHECK_THROWS_AS(evaluate_predictions(std::vector<int>{}, Mat(0, 3)), ValidationError);
}

TEST_CASE("property: report invariants on random predictions") {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(5));
    const int n = c + static_cast<int>(rng.below(60));
    std::vector<int> truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) truth[static_cast<std::size_t>(i)] = i < c ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(c)));
    Mat logits = random_matrix(rng, n, c);
    const Mat p = (logits.array().exp().colwise() / logits.array().exp().rowwise().sum()).matrix();
    const MetricsReport r = evaluate_predictions(truth, p);
    long total = 0, diag = 0;
    for (int t = 0; t < c; ++t) {
      long row = 0;
      for (int q = 0; q < c; ++q) row += r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(q)];
      CHECK(row == r.per_class[static_cast<std::size_t>(t)].support);
      total += row;
      diag += r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(t)];
    }
    CHECK(total == n);
    CHECK(r.accuracy == doctest::Approx(100.0 * static_cast<double>(diag) / n));
    double f1 = 0;
    for (const auto& m : r.per_class) {
      f1 += m.f1;
      for (double v : {m.precision, m.recall, m.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 100.0);
      }
    }
    CHECK(r.macro_f1 == doctest::Approx(f1 / c));
  }
}

TEST_CASE("last-three averaging") {
  std::vector<MetricsReport> a = {with_accuracy(90, 0), with_accuracy(91, 1), with_accuracy(92, 2)};
  auto s = average_last3(a);
  CHECK(s.mean_accuracy == doctest::Approx(91.0));
  CHECK(s.selected == 1);
  CHECK(s.report.accuracy_last3_avg == doctest::Approx(91.0));

  std::vector<MetricsReport> tie = {with_accuracy(70, 0), with_accuracy(70, 1), with_accuracy(70, 2)};
  CHECK(average_last3(tie).selected == 2);

  std::vector<MetricsReport> wide = {with_accuracy(80, 0), with_accuracy(90, 1), with_accuracy(100, 2)};
  CHECK(average_last3(wide).selected == 1);

  CHECK_THROWS_AS(average_last3(std::span<const MetricsReport>(a.data(), 2)), ValidationError);
  CHECK(average_reports(std::span<const MetricsReport>(a.data(), 2)).mean_accuracy == doctest::Approx(90.5));
}

TEST_CASE("model evaluation, feature export and report serialization") {
  const auto data = tiny_synthetic(16, 24);
  TrainConfig c = tiny_config();
  TrainState st = tiny_state(c, data.train);
  const MetricsReport r = evaluate(*st.model, data.test, 7);
  CHECK(r.n_test == 24);

  const auto dir = std::filesystem::temp_directory_path() / "nrl_test_eval";
  std::filesystem::create_directories(dir);
  export_features(*st.model, data.test, dir / "a.tsv", 5);
  export_features(*st.model, data.test, dir / "b.tsv", 5);
  export_features(*st.model, data.test, dir / "c.tsv", 250);
  std::ifstream fa(dir / "a.tsv"), fb(dir / "b.tsv");
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  // a different batch size may only change rounding
  const Mat fa_mat = extract_features(*st.model, data.test.images, 5);
  const Mat fc_mat = extract_features(*st.model, data.test.images, 250);
  CHECK((fa_mat - fc_mat).cwiseAbs().maxCoeff() < 1e-12);
  std::istringstream lines(sa.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "# nrl features v1 dim=8");
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), '\t') == 3 + 8 - 1);
  }
  CHECK(rows == 24);

  const MetricsReport back = report_from_json(report_to_json(r));
  CHECK(back.accuracy == r.accuracy);
  CHECK(back.confusion == r.confusion);
  CHECK(back.macro_f1 == r.macro_f1);
  CHECK(report_to_json(back) == report_to_json(r));
  CHECK_THROWS_AS(export_features(*st.model, data.test, dir / "missing" / "x.tsv"), IoError);
  std::filesystem::remove_all(dir);
}
