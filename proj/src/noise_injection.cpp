#include "nrl/noise_injection.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "nrl/error.hpp"
#include "nrl/text.hpp"

namespace nrl {

namespace {

constexpr double kRowTolerance = 1e-9;

void check_rate(double rate, double upper, const char* op) {
  if (!(rate >= 0.0 && rate < upper)) {
    throw ValidationError(std::string(op) + ": noise rate P=" + text::format_double(rate) + " outside [0, " +
                          text::format_double(upper) + ")");
  }
}

}  // namespace

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::none: return "none";
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::instance_dependent: return "instance_dependent";
  }
  return "?";
}

std::string_view to_string(SymmetricConvention convention) {
  return convention == SymmetricConvention::uniform_all ? "uniform_all" : "uniform_off_diagonal";
}

NoiseKind parse_noise_kind(std::string_view text) {
  if (text == "none") return NoiseKind::none;
  if (text == "symmetric") return NoiseKind::symmetric;
  if (text == "asymmetric") return NoiseKind::asymmetric;
  if (text == "instance_dependent" || text == "instance") return NoiseKind::instance_dependent;
  throw ValidationError("unknown noise kind '" + std::string(text) + "'");
}

SymmetricConvention parse_convention(std::string_view text) {
  if (text == "uniform_all") return SymmetricConvention::uniform_all;
  if (text == "uniform_off_diagonal") return SymmetricConvention::uniform_off_diagonal;
  throw ValidationError("unknown symmetric convention '" + std::string(text) + "'");
}

TransitionMatrix::TransitionMatrix(MatrixKind kind, int num_classes, std::vector<double> entries)
    : kind_(kind), num_classes_(num_classes), entries_(std::move(entries)) {
  if (num_classes_ < 2) throw ValidationError("transition matrix: num_classes must be >= 2");
  if (entries_.size() != static_cast<std::size_t>(num_classes_) * num_classes_) {
    throw ValidationError("transition matrix: expected C*C entries");
  }
  for (int t = 0; t < num_classes_; ++t) {
    double sum = 0.0;
    for (double p : row(t)) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("transition matrix: entry outside [0, 1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw ValidationError("transition matrix: row " + std::to_string(t) + " sums to " + text::format_double(sum));
    }
  }
}

TransitionMatrix build_symmetric_matrix(double rate, int num_classes, SymmetricConvention convention) {
  check_rate(rate, 1.0, "build_symmetric_matrix");
  if (num_classes < 2) throw ValidationError("build_symmetric_matrix: class count C must be >= 2");
  const double off = convention == SymmetricConvention::uniform_all ? rate / num_classes
                                                                     : rate / (num_classes - 1);
  const double diag = convention == SymmetricConvention::uniform_all ? 1.0 - rate + rate / num_classes : 1.0 - rate;
  std::vector<double> entries(static_cast<std::size_t>(num_classes) * num_classes, off);
  for (int t = 0; t < num_classes; ++t) entries[static_cast<std::size_t>(t) * num_classes + t] = diag;
  return TransitionMatrix(MatrixKind::symmetric, num_classes, std::move(entries));
}

TransitionMatrix build_asymmetric_matrix(double rate, int num_classes) {
  check_rate(rate, 0.5, "build_asymmetric_matrix");
  if (num_classes == 2) {
    throw ValidationError("build_asymmetric_matrix: with C = 2 asymmetric noise degenerates to symmetric; "
                          "use build_symmetric_matrix");
  }
  if (num_classes < 3) throw ValidationError("build_asymmetric_matrix: class count C must be >= 3");
  std::vector<double> entries(static_cast<std::size_t>(num_classes) * num_classes, 0.0);
  for (int t = 0; t < num_classes; ++t) {
    entries[static_cast<std::size_t>(t) * num_classes + t] = 1.0 - rate;
    entries[static_cast<std::size_t>(t) * num_classes + (t + 1) % num_classes] += rate;
  }
  return TransitionMatrix(MatrixKind::asymmetric, num_classes, std::move(entries));
}

int SeededRowSampler::sample(std::span<const double> row, int true_label) {
  const double u = rng_.uniform01();
  double cdf = 0.0;
  int last_nonzero = true_label;
  for (std::size_t n = 0; n < row.size(); ++n) {
    if (row[n] <= 0.0) continue;
    cdf += row[n];
    last_nonzero = static_cast<int>(n);
    if (u < cdf) return static_cast<int>(n);
  }
  // Rounding left u above the accumulated mass.
  return last_nonzero;
}

std::vector<CorruptionRecord> apply_transition(std::span<const int> labels, const TransitionMatrix& matrix,
                                               std::uint64_t seed) {
  SeededRowSampler sampler(seed);
  return apply_transition(labels, matrix, sampler);
}

std::vector<CorruptionRecord> apply_transition(std::span<const int> labels, const TransitionMatrix& matrix,
                                               RowSampler& sampler) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= matrix.num_classes()) {
      throw ValidationError("apply_transition: label " + std::to_string(labels[i]) + " at index " +
                            std::to_string(i) + " outside [0, " + std::to_string(matrix.num_classes()) + ")");
    }
  }
  std::vector<CorruptionRecord> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int given = sampler.sample(matrix.row(labels[i]), labels[i]);
    out.push_back({i, labels[i], given, given != labels[i]});
  }
  return out;
}

double realized_noise_rate(std::span<const CorruptionRecord> records) {
  if (records.empty()) throw ValidationError("realized_noise_rate: empty record sequence");
  std::size_t corrupted = 0;
  for (const auto& r : records) corrupted += r.corrupted ? 1 : 0;
  return static_cast<double>(corrupted) / static_cast<double>(records.size());
}

std::vector<int> NoisyDataset::true_labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.true_label);
  return out;
}

std::vector<int> NoisyDataset::given_labels() const {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.given_label);
  return out;
}

void NoisyDataset::validate() const {
  if (images.size() != records.size()) throw ValidationError("dataset: image and record counts differ");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.index != i) throw ValidationError("dataset: record " + std::to_string(i) + " carries index " +
                                            std::to_string(r.index));
    if (r.true_label < 0 || r.true_label >= num_classes || r.given_label < 0 || r.given_label >= num_classes) {
      throw ValidationError("dataset: label out of range at index " + std::to_string(i));
    }
    if (r.corrupted != (r.true_label != r.given_label)) {
      throw ValidationError("dataset: corruption flag inconsistent at index " + std::to_string(i));
    }
  }
}

NoisyDataset make_clean_dataset(std::vector<Image> images, std::span<const int> labels, int num_classes) {
  if (images.size() != labels.size()) throw ValidationError("make_clean_dataset: image and label counts differ");
  NoisyDataset ds;
  ds.images = std::move(images);
  ds.num_classes = num_classes;
  ds.records.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) ds.records.push_back({i, labels[i], labels[i], false});
  ds.validate();
  return ds;
}

NoisyDataset inject_instance_independent(const NoisyDataset& clean, NoiseKind kind, double rate,
                                         SymmetricConvention convention, std::uint64_t seed) {
  NoisyDataset out = clean;
  out.provenance = NoiseProvenance{};
  out.provenance.kind = kind;
  out.provenance.rate = rate;
  out.provenance.seed = seed;
  out.provenance.convention = convention;
  if (kind == NoiseKind::none) {
    for (auto& r : out.records) {
      r.given_label = r.true_label;
      r.corrupted = false;
    }
  } else {
    if (kind != NoiseKind::symmetric && kind != NoiseKind::asymmetric) {
      throw ValidationError("inject_instance_independent: noise kind must be symmetric or asymmetric");
    }
    const TransitionMatrix matrix = kind == NoiseKind::symmetric
                                        ? build_symmetric_matrix(rate, clean.num_classes, convention)
                                        : build_asymmetric_matrix(rate, clean.num_classes);
    out.records = apply_transition(clean.true_labels(), matrix, seed);
  }
  out.provenance.realized_rate = out.records.empty() ? 0.0 : realized_noise_rate(out.records);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

constexpr std::string_view kManifestMagic = "# nrl corruption manifest v1";

std::string expect_key(std::istream& in, std::string_view key, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": truncated manifest header, missing '" +
                                             std::string(key) + "'");
  const auto colon = line.find(':');
  if (colon == std::string::npos || text::trim(std::string_view(line).substr(0, colon)) != key) {
    throw IoError(path.string() + ": expected header key '" + std::string(key) + "', got '" + line + "'");
  }
  return std::string(text::trim(std::string_view(line).substr(colon + 1)));
}

}  // namespace

NoiseManifest manifest_of(const NoisyDataset& dataset) {
  return NoiseManifest{dataset.provenance, dataset.num_classes, dataset.records};
}

void write_manifest(const std::filesystem::path& path, const NoiseManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  const auto& p = manifest.provenance;
  out << kManifestMagic << '\n'
      << "kind: " << to_string(p.kind) << '\n'
      << "rate: " << text::format_double(p.rate) << '\n'
      << "seed: " << p.seed << '\n'
      << "convention: " << to_string(p.convention) << '\n'
      << "num_classes: " << manifest.num_classes << '\n'
      << "realized_rate: " << text::format_double(p.realized_rate) << '\n'
      << "proxy_epoch: " << p.proxy_epoch << '\n'
      << "proxy_train_accuracy: " << text::format_double(p.proxy_train_accuracy) << '\n'
      << "records: " << manifest.records.size() << '\n'
      << "index,true_label,given_label,corrupted\n";
  for (const auto& r : manifest.records) {
    out << r.index << ',' << r.true_label << ',' << r.given_label << ',' << (r.corrupted ? 1 : 0) << '\n';
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

NoiseManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kManifestMagic) {
    throw IoError(path.string() + ": not an nrl corruption manifest (bad first line)");
  }
  NoiseManifest m;
  try {
    m.provenance.kind = parse_noise_kind(expect_key(in, "kind", path));
    m.provenance.rate = text::parse_double(expect_key(in, "rate", path));
    m.provenance.seed = std::stoull(expect_key(in, "seed", path));
    m.provenance.convention = parse_convention(expect_key(in, "convention", path));
    m.num_classes = static_cast<int>(text::parse_int(expect_key(in, "num_classes", path)));
    m.provenance.realized_rate = text::parse_double(expect_key(in, "realized_rate", path));
    m.provenance.proxy_epoch = static_cast<int>(text::parse_int(expect_key(in, "proxy_epoch", path)));
    m.provenance.proxy_train_accuracy = text::parse_double(expect_key(in, "proxy_train_accuracy", path));
    const auto count = static_cast<std::size_t>(text::parse_int(expect_key(in, "records", path)));
    if (!std::getline(in, line) || text::trim(line) != "index,true_label,given_label,corrupted") {
      throw IoError(path.string() + ": missing record column header");
    }
    m.records.reserve(count);
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      const auto f = text::split(line, ',');
      if (f.size() != 4) throw IoError(path.string() + ": malformed record '" + line + "'");
      CorruptionRecord r;
      r.index = static_cast<std::size_t>(text::parse_int(f[0]));
      r.true_label = static_cast<int>(text::parse_int(f[1]));
      r.given_label = static_cast<int>(text::parse_int(f[2]));
      r.corrupted = text::parse_int(f[3]) != 0;
      if (r.corrupted != (r.true_label != r.given_label)) {
        throw IoError(path.string() + ": inconsistent corrupted flag at index " + f[0]);
      }
      m.records.push_back(r);
    }
    if (m.records.size() != count) {
      throw IoError(path.string() + ": header declares " + std::to_string(count) + " records, found " +
                    std::to_string(m.records.size()));
    }
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return m;
}

NoisyDataset apply_manifest(const NoisyDataset& clean, const NoiseManifest& manifest) {
  if (manifest.records.size() != clean.size() || manifest.num_classes != clean.num_classes) {
    throw ValidationError("apply_manifest: manifest does not match dataset size or class count");
  }
  NoisyDataset out = clean;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.index != i || r.true_label != clean.records[i].true_label) {
      throw ValidationError("apply_manifest: true label mismatch at index " + std::to_string(i));
    }
    out.records[i] = r;
  }
  out.provenance = manifest.provenance;
  out.validate();
  return out;
}

}  // namespace nrl
