#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "nrl/config.hpp"
#include "nrl/noise_injection.hpp"

namespace nrl {

struct FolderLoad {
  NoisyDataset dataset;  // zero corruption
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
  std::size_t skipped = 0;  // unreadable files
};

// root/<class>/<image>. Classes and files are taken in lexicographic order
// (or the order of spec.class_names when given). Pixels are scaled to [0, 1],
// resized to spec.height x spec.width with area interpolation, and converted
// to spec.channels (gray is replicated to 3 channels, color is averaged to 1
// by luminance).
FolderLoad load_folder_dataset(const std::filesystem::path& root, const DatasetSpec& spec);

struct SyntheticSplits {
  NoisyDataset train;
  NoisyDataset test;
};

// Shapes per class, in order: disk, ring, square outline, plus, triangle,
// horizontal bars, diamond, X. Every sample draws its own position, size,
// rotation, foreground/background levels and pixel noise from a seed derived
// from (recipe.seed, split, index), so the two splits never share a sample
// stream. Labels cycle 0, 1, ..., C-1.
SyntheticSplits generate_synthetic(const SyntheticRecipe& recipe, int height, int width, int channels);

inline constexpr int kMaxSyntheticClasses = 8;

// Shape of one synthetic class rendered without jitter or noise; used to
// check that classes are distinguishable.
Image synthetic_prototype(int label, int height, int width);

struct DatasetPair {
  NoisyDataset train;
  NoisyDataset test;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
};

// Loads or generates both splits according to the spec; applies optional
// standardization with the train split's statistics.
DatasetPair load_datasets(const DatasetSpec& spec);

// Per-channel (x - mean) / std using the statistics of `reference`.
void standardize(NoisyDataset& reference, NoisyDataset& other);

}  // namespace nrl
