#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nrl/data_ingest.hpp"
#include "nrl/error.hpp"
#include "nrl/evaluation.hpp"
#include "support.hpp"

using namespace nrl;
using namespace nrl::testing;

namespace fs = std::filesystem;

namespace {

// Binary PGM, readable by any image decoder.
void write_pgm(const fs::path& path, int w, int h, unsigned char value) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (int i = 0; i < w * h; ++i) out.put(static_cast<char>(value));
}

void write_ppm(const fs::path& path, int w, int h, unsigned char r, unsigned char g, unsigned char b) {
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (int i = 0; i < w * h; ++i) {
    out.put(static_cast<char>(r));
    out.put(static_cast<char>(g));
    out.put(static_cast<char>(b));
  }
}

struct TempTree {
  fs::path root;
  explicit TempTree(const std::string& name) : root(fs::temp_directory_path() / ("nrl_test_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~TempTree() { fs::remove_all(root); }
};

DatasetSpec folder_spec(int channels, int size = 8) {
  DatasetSpec s;
  s.source = DatasetSource::folder;
  s.channels = channels;
  s.height = size;
  s.width = size;
  return s;
}

}  // namespace

TEST_CASE("folder layout: labels, ordering, scaling and resizing") {
  TempTree t("folder");
  fs::create_directories(t.root / "cat");
  fs::create_directories(t.root / "ant");
  for (int i = 0; i < 3; ++i) {
    write_pgm(t.root / "ant" / ("img" + std::to_string(2 - i) + ".pgm"), 16, 12, static_cast<unsigned char>(10 * i));
    write_pgm(t.root / "cat" / ("x" + std::to_string(i) + ".pgm"), 5, 5, 255);
  }
  const FolderLoad a = load_folder_dataset(t.root, folder_spec(1));
  CHECK(a.dataset.size() == 6);
  CHECK(a.dataset.true_labels() == std::vector<int>{0, 0, 0, 1, 1, 1});
  CHECK(a.class_names == std::vector<std::string>{"ant", "cat"});
  CHECK(realized_noise_rate(a.dataset.records) == 0.0);
  // img0 was written with value 20, and sorts first
  CHECK(a.dataset.images[0].at(0, 3, 3) == doctest::Approx(20.0 / 255));
  for (const auto& img : a.dataset.images) {
    CHECK(img.height == 8);
    CHECK(img.width == 8);
  }
  CHECK(a.dataset.images[4].at(0, 0, 0) == doctest::Approx(1.0));

  const FolderLoad again = load_folder_dataset(t.root, folder_spec(1));
  CHECK(again.dataset.images == a.dataset.images);

  // grayscale promoted to three identical channels
  const FolderLoad rgb = load_folder_dataset(t.root, folder_spec(3));
  const Image& img = rgb.dataset.images[1];
  CHECK(img.channels == 3);
  CHECK(img.at(0, 2, 2) == img.at(1, 2, 2));
  CHECK(img.at(1, 2, 2) == img.at(2, 2, 2));
}

TEST_CASE("color images keep RGB order; color to gray uses luminance") {
  TempTree t("color");
  fs::create_directories(t.root / "a");
  fs::create_directories(t.root / "b");
  write_ppm(t.root / "a" / "red.ppm", 8, 8, 255, 0, 0);
  write_ppm(t.root / "b" / "blue.ppm", 8, 8, 0, 0, 255);
  const FolderLoad rgb = load_folder_dataset(t.root, folder_spec(3));
  CHECK(rgb.dataset.images[0].at(0, 1, 1) == doctest::Approx(1.0));
  CHECK(rgb.dataset.images[0].at(2, 1, 1) == doctest::Approx(0.0));
  CHECK(rgb.dataset.images[1].at(2, 1, 1) == doctest::Approx(1.0));
  const FolderLoad gray = load_folder_dataset(t.root, folder_spec(1));
  CHECK(gray.dataset.images[0].at(0, 1, 1) > gray.dataset.images[1].at(0, 1, 1));
}

TEST_CASE("unreadable files are skipped; empty classes and missing roots fail") {
  TempTree t("bad");
  fs::create_directories(t.root / "a");
  fs::create_directories(t.root / "b");
  write_pgm(t.root / "a" / "ok.pgm", 4, 4, 100);
  std::ofstream(t.root / "a" / "broken.png") << "definitely not a png";
  write_pgm(t.root / "b" / "ok.pgm", 4, 4, 200);
  const FolderLoad l = load_folder_dataset(t.root, folder_spec(1));
  CHECK(l.dataset.size() == 2);
  CHECK(l.skipped == 1);
  CHECK(!l.warnings.empty());

  fs::create_directories(t.root / "c");
  CHECK_THROWS_AS(load_folder_dataset(t.root, folder_spec(1)), DataError);
  CHECK_THROWS_AS(load_folder_dataset(t.root / "nope", folder_spec(1)), DataError);
}

TEST_CASE("declared class names fix the label order") {
  TempTree t("names");
  for (const char* c : {"x", "y"}) {
    fs::create_directories(t.root / c);
    write_pgm(t.root / c / "i.pgm", 4, 4, c[0] == 'x' ? 0 : 255);
  }
  DatasetSpec s = folder_spec(1);
  s.class_names = {"y", "x"};
  const FolderLoad l = load_folder_dataset(t.root, s);
  CHECK(l.class_names == std::vector<std::string>{"y", "x"});
  CHECK(l.dataset.images[0].at(0, 0, 0) == doctest::Approx(1.0));
  s.class_names = {"y", "z"};
  CHECK_THROWS_AS(load_folder_dataset(t.root, s), DataError);
}

TEST_CASE("synthetic generator: sizes, determinism, disjoint streams") {
  SyntheticRecipe r;
  r.train_size = 37;
  r.test_size = 11;
  r.seed = 5;
  const auto a = generate_synthetic(r, 12, 12, 1);
  const auto b = generate_synthetic(r, 12, 12, 1);
  CHECK(a.train.size() == 37);
  CHECK(a.test.size() == 11);
  CHECK(a.train.images == b.train.images);
  CHECK(a.test.images == b.test.images);
  CHECK(a.train.images[0] != a.test.images[0]);
  for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train.records[i].true_label == static_cast<int>(i % 4));
  for (const auto& img : a.train.images)
    for (double p : img.pixels) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
  r.seed = 6;
  CHECK(generate_synthetic(r, 12, 12, 1).train.images != a.train.images);
  const auto color = generate_synthetic(r, 12, 12, 3);
  CHECK(color.train.images[0].channels == 3);

  for (int c = 0; c < kMaxSyntheticClasses; ++c)
    for (int d = c + 1; d < kMaxSyntheticClasses; ++d) CHECK(synthetic_prototype(c, 16, 16) != synthetic_prototype(d, 16, 16));
  r.num_classes = 9;
  CHECK_THROWS_AS(generate_synthetic(r, 12, 12, 1), ValidationError);
}

TEST_CASE("standardization uses the reference statistics") {
  auto d = tiny_synthetic(40, 20);
  standardize(d.train, d.test);
  double mean = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& img : d.train.images)
    for (double p : img.pixels) {
      mean += p;
      sq += p * p;
      ++n;
    }
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(sq / static_cast<double>(n) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("calibration: a clean-trained tiny CNN separates the default synthetic classes") {
  SyntheticRecipe r;  // 4 classes, 2000 / 1000
  const auto d = generate_synthetic(r, 16, 16, 1);
  TrainConfig c;
  c.method = Method::default_baseline;
  c.stage1_epochs = 0;
  c.stage2_epochs = 20;
  c.groups_per_batch = 8;
  c.group_size = 1;
  TrainState st = init_state(c, model_config_for(c, 1, 16, 16, 4));
  std::vector<MetricsReport> reports;
  TrainHooks hooks;
  hooks.on_epoch_end = [&](TrainState&, const EpochMetrics&, const MetricsReport* rep) { reports.push_back(*rep); };
  train(st, d.train, &d.test, hooks);
  const auto last = average_last3(std::span<const MetricsReport>(reports).last(3));
  MESSAGE("clean test accuracy (last-3 avg): " << last.mean_accuracy);
  CHECK(last.mean_accuracy >= 95.0);
}
