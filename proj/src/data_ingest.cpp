#include "nrl/data_ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "nrl/error.hpp"
#include "nrl/random.hpp"

namespace nrl {

namespace fs = std::filesystem;

namespace {

Image from_mat(const cv::Mat& decoded, const DatasetSpec& spec) {
  cv::Mat m = decoded;
  const double scale = m.depth() == CV_16U ? 1.0 / 65535.0 : m.depth() == CV_8U ? 1.0 / 255.0 : 1.0;
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
  if (spec.channels == 1 && m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
  if (spec.channels == 3 && m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
  if (spec.channels == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  cv::Mat f;
  m.convertTo(f, CV_64F, scale);
  if (f.rows != spec.height || f.cols != spec.width) {
    cv::resize(f, f, cv::Size(spec.width, spec.height), 0, 0, cv::INTER_AREA);
  }
  Image img(spec.channels, spec.height, spec.width);
  for (int y = 0; y < spec.height; ++y) {
    const double* row = f.ptr<double>(y);
    for (int x = 0; x < spec.width; ++x) {
      for (int c = 0; c < spec.channels; ++c) {
        img.at(c, y, x) = std::clamp(row[x * spec.channels + c], 0.0, 1.0);
      }
    }
  }
  return img;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Membership of a normalized, rotated point in the class shape.
bool inside(int label, double u, double v) {
  const double r = std::hypot(u, v);
  const double au = std::abs(u), av = std::abs(v);
  switch (label) {
    case 0: return r <= 1.0;
    case 1: return r <= 1.0 && r >= 0.55;
    case 2: return std::max(au, av) <= 0.85 && std::max(au, av) >= 0.5;
    case 3: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case 4: return v >= -0.9 && v <= 0.8 && au <= (0.8 - v) * 0.6;
    case 5: return au <= 1.0 && av <= 1.0 && static_cast<int>(std::floor((v + 1.0) * 2.5)) % 2 == 0;
    case 6: return au + av <= 1.0;
    case 7: return (std::abs(u - v) <= 0.4 && std::abs(u + v) <= 1.4) || (std::abs(u + v) <= 0.4 && std::abs(u - v) <= 1.4);
  }
  return false;
}

struct ShapePose {
  double cx, cy, radius, angle;
};

// Fraction of a pixel covered by the shape, 4x4 supersampled.
double coverage(int label, const ShapePose& p, int x, int y) {
  constexpr int kSub = 4;
  const double ca = std::cos(p.angle), sa = std::sin(p.angle);
  int hits = 0;
  for (int sy = 0; sy < kSub; ++sy) {
    for (int sx = 0; sx < kSub; ++sx) {
      const double px = x + (sx + 0.5) / kSub - p.cx;
      const double py = y + (sy + 0.5) / kSub - p.cy;
      const double u = (ca * px + sa * py) / p.radius;
      const double v = (-sa * px + ca * py) / p.radius;
      hits += inside(label, u, v);
    }
  }
  return static_cast<double>(hits) / (kSub * kSub);
}

Image render_sample(const SyntheticRecipe& recipe, int label, int height, int width, int channels, Rng& rng) {
  const double half = 0.5 * std::min(height, width);
  ShapePose pose;
  pose.radius = half * rng.uniform(recipe.min_scale, recipe.max_scale);
  const double slack = std::max(0.0, half - pose.radius);
  pose.cx = 0.5 * width + rng.uniform(-slack, slack) * 0.5;
  pose.cy = 0.5 * height + rng.uniform(-slack, slack) * 0.5;
  pose.angle = rng.uniform(-20.0, 20.0) * std::numbers::pi / 180.0;
  const double bg = rng.uniform(0.0, 0.3);
  const double fg = rng.uniform(0.6, 1.0);
  double tint[3] = {1.0, 1.0, 1.0};
  if (channels == 3) {
    for (double& t : tint) t = rng.uniform(0.7, 1.0);
  }
  Image img(channels, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double base = bg + (fg - bg) * coverage(label, pose, x, y);
      for (int c = 0; c < channels; ++c) {
        img.at(c, y, x) = std::clamp(base * tint[c] + recipe.pixel_noise * rng.normal(), 0.0, 1.0);
      }
    }
  }
  return img;
}

NoisyDataset synthetic_split(const SyntheticRecipe& recipe, int split, int count, int height, int width,
                             int channels) {
  std::vector<Image> images;
  std::vector<int> labels;
  images.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int label = i % recipe.num_classes;
    Rng rng(derive_seed(recipe.seed, {static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i)}));
    images.push_back(render_sample(recipe, label, height, width, channels, rng));
    labels.push_back(label);
  }
  return make_clean_dataset(std::move(images), labels, recipe.num_classes);
}

}  // namespace

FolderLoad load_folder_dataset(const fs::path& root, const DatasetSpec& spec) {
  if (spec.channels != 1 && spec.channels != 3) throw ValidationError("dataset: channels must be 1 or 3");
  if (spec.height < 1 || spec.width < 1) throw ValidationError("dataset: height and width must be >= 1");
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError(root.string() + ": dataset root does not exist or is not a directory");

  FolderLoad out;
  std::vector<fs::path> class_dirs;
  if (spec.class_names.empty()) {
    class_dirs = sorted_entries(root, true);
    for (const auto& d : class_dirs) out.class_names.push_back(d.filename().string());
  } else {
    out.class_names = spec.class_names;
    for (const auto& name : spec.class_names) {
      const fs::path d = root / name;
      if (!fs::is_directory(d, ec)) throw DataError(d.string() + ": declared class directory is missing");
      class_dirs.push_back(d);
    }
    for (const auto& d : sorted_entries(root, true)) {
      if (std::find(spec.class_names.begin(), spec.class_names.end(), d.filename().string()) ==
          spec.class_names.end()) {
        throw DataError(d.string() + ": directory is not one of the declared class names");
      }
    }
  }
  if (class_dirs.size() < 2) throw DataError(root.string() + ": need at least 2 class directories");

  std::vector<Image> images;
  std::vector<int> labels;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    std::size_t loaded = 0;
    for (const auto& file : sorted_entries(class_dirs[label], false)) {
      const cv::Mat decoded = cv::imread(file.string(), cv::IMREAD_UNCHANGED);
      if (decoded.empty()) {
        out.warnings.push_back(file.string() + ": unreadable image skipped");
        ++out.skipped;
        continue;
      }
      images.push_back(from_mat(decoded, spec));
      labels.push_back(static_cast<int>(label));
      ++loaded;
    }
    if (loaded == 0) throw DataError(class_dirs[label].string() + ": class directory contains no readable images");
  }
  out.dataset = make_clean_dataset(std::move(images), labels, static_cast<int>(class_dirs.size()));
  return out;
}

SyntheticSplits generate_synthetic(const SyntheticRecipe& recipe, int height, int width, int channels) {
  if (recipe.num_classes < 2 || recipe.num_classes > kMaxSyntheticClasses) {
    throw ValidationError("synthetic: num_classes must lie in [2, " + std::to_string(kMaxSyntheticClasses) + "]");
  }
  if (recipe.train_size < 1 || recipe.test_size < 1) throw ValidationError("synthetic: split sizes must be >= 1");
  if (channels != 1 && channels != 3) throw ValidationError("synthetic: channels must be 1 or 3");
  if (height < 8 || width < 8) throw ValidationError("synthetic: images must be at least 8x8");
  if (!(recipe.min_scale > 0.0 && recipe.min_scale <= recipe.max_scale && recipe.max_scale <= 1.0)) {
    throw ValidationError("synthetic: need 0 < min_scale <= max_scale <= 1");
  }
  if (!(recipe.pixel_noise >= 0.0)) throw ValidationError("synthetic: pixel_noise must be >= 0");
  for (int a = 0; a < recipe.num_classes; ++a) {
    for (int b = a + 1; b < recipe.num_classes; ++b) {
      if (synthetic_prototype(a, height, width) == synthetic_prototype(b, height, width)) {
        throw DataError("synthetic: classes " + std::to_string(a) + " and " + std::to_string(b) +
                        " render identically at " + std::to_string(height) + "x" + std::to_string(width) +
                        "; calibration would fail");
      }
    }
  }
  return {synthetic_split(recipe, 0, recipe.train_size, height, width, channels),
          synthetic_split(recipe, 1, recipe.test_size, height, width, channels)};
}

Image synthetic_prototype(int label, int height, int width) {
  const ShapePose pose{0.5 * width, 0.5 * height, 0.3 * std::min(height, width), 0.0};
  Image img(1, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) img.at(0, y, x) = coverage(label, pose, x, y);
  }
  return img;
}

void standardize(NoisyDataset& reference, NoisyDataset& other) {
  if (reference.size() == 0) throw ValidationError("standardize: empty reference dataset");
  const int channels = reference.images.front().channels;
  std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
  double count = 0.0;
  for (const auto& img : reference.images) {
    for (int c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < img.plane_size(); ++i) {
        const double v = img.pixels[static_cast<std::size_t>(c) * img.plane_size() + i];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(img.plane_size());
  }
  std::vector<double> mean(channels), inv_std(channels);
  for (int c = 0; c < channels; ++c) {
    mean[c] = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - mean[c] * mean[c]);
    inv_std[c] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  for (NoisyDataset* ds : {&reference, &other}) {
    for (auto& img : ds->images) {
      for (int c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < img.plane_size(); ++i) {
          double& v = img.pixels[static_cast<std::size_t>(c) * img.plane_size() + i];
          v = (v - mean[c]) * inv_std[c];
        }
      }
    }
  }
}

DatasetPair load_datasets(const DatasetSpec& spec) {
  DatasetPair out;
  if (spec.source == DatasetSource::synthetic) {
    SyntheticSplits s = generate_synthetic(spec.synthetic, spec.height, spec.width, spec.channels);
    out.train = std::move(s.train);
    out.test = std::move(s.test);
    for (int c = 0; c < spec.synthetic.num_classes; ++c) out.class_names.push_back("class" + std::to_string(c));
  } else {
    if (spec.train_root.empty() || spec.test_root.empty()) {
      throw ValidationError("dataset: folder source needs train_root and test_root");
    }
    FolderLoad train = load_folder_dataset(spec.train_root, spec);
    DatasetSpec test_spec = spec;
    test_spec.class_names = train.class_names;
    FolderLoad test = load_folder_dataset(spec.test_root, test_spec);
    out.train = std::move(train.dataset);
    out.test = std::move(test.dataset);
    out.class_names = std::move(train.class_names);
    out.warnings = std::move(train.warnings);
    out.warnings.insert(out.warnings.end(), test.warnings.begin(), test.warnings.end());
  }
  if (spec.standardize) standardize(out.train, out.test);
  return out;
}

}  // namespace nrl
