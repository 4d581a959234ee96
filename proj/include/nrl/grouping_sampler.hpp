#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrl/noise_injection.hpp"

namespace nrl {

enum class RemainderPolicy { drop, resample };

std::string_view to_string(RemainderPolicy policy);
RemainderPolicy parse_remainder_policy(std::string_view text);

// Label value for groups assembled without regard to given labels (inter-class mixup).
inline constexpr int kMixedLabel = -1;

struct MiniGroup {
  std::vector<std::size_t> members;
  int given_label = kMixedLabel;

  friend bool operator==(const MiniGroup&, const MiniGroup&) = default;
};

struct MiniGroupBatch {
  std::vector<MiniGroup> groups;
  int group_size = 0;        // M
  int groups_per_batch = 0;  // K

  // N_b = K * M
  std::size_t size() const { return static_cast<std::size_t>(group_size) * groups_per_batch; }
  // Group-major flattening: group 0's members, then group 1's, ...
  std::vector<std::size_t> indices() const;

  friend bool operator==(const MiniGroupBatch&, const MiniGroupBatch&) = default;
};

struct GroupingResult {
  std::vector<MiniGroup> groups;
  std::vector<std::string> warnings;
};

// Partitions each given-label class into shuffled groups of exactly M members.
GroupingResult build_groups(std::span<const CorruptionRecord> records, int group_size, std::uint64_t seed,
                            RemainderPolicy policy = RemainderPolicy::resample);

// Groups of M drawn from the whole dataset regardless of label; every group is
// tagged kMixedLabel. Leftovers are padded by resampling.
std::vector<MiniGroup> build_mixed_groups(std::size_t dataset_size, int group_size, std::uint64_t seed);

// Single-consumer stream over one epoch: groups are shuffled with a seed
// derived from (seed, epoch) and emitted K at a time. A trailing partial batch
// is dropped.
class BatchStream {
 public:
  BatchStream(std::vector<MiniGroup> groups, int groups_per_batch, std::uint64_t seed, std::uint64_t epoch = 0);

  std::optional<MiniGroupBatch> next();
  std::size_t batches_per_epoch() const { return groups_.size() / static_cast<std::size_t>(k_); }

 private:
  std::vector<MiniGroup> groups_;
  int k_;
  std::size_t cursor_ = 0;
};

std::vector<MiniGroupBatch> iterate_batches(std::span<const MiniGroup> groups, int groups_per_batch,
                                            std::uint64_t seed, std::uint64_t epoch = 0);

// One line per batch, for audit logs: "batch 3: [label 1: 12 40 7 99] [label 0: ...]".
std::string describe_batch(const MiniGroupBatch& batch, std::size_t ordinal);

}  // namespace nrl
