#include "nrl/grouping_sampler.hpp"

#include <map>
#include <sstream>

#include "nrl/error.hpp"

namespace nrl {

std::string_view to_string(RemainderPolicy policy) {
  return policy == RemainderPolicy::drop ? "drop" : "resample";
}

RemainderPolicy parse_remainder_policy(std::string_view text) {
  if (text == "drop") return RemainderPolicy::drop;
  if (text == "resample") return RemainderPolicy::resample;
  throw ValidationError("unknown remainder policy '" + std::string(text) + "'");
}

std::vector<std::size_t> MiniGroupBatch::indices() const {
  std::vector<std::size_t> out;
  out.reserve(size());
  for (const auto& g : groups) out.insert(out.end(), g.members.begin(), g.members.end());
  return out;
}

GroupingResult build_groups(std::span<const CorruptionRecord> records, int group_size, std::uint64_t seed,
                            RemainderPolicy policy) {
  if (group_size < 1) throw ValidationError("build_groups: group size M must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (const auto& r : records) by_class[r.given_label].push_back(r.index);

  const auto m = static_cast<std::size_t>(group_size);
  GroupingResult result;
  for (auto& [label, members] : by_class) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(label)}));
    rng.shuffle(members);
    const std::size_t full = members.size() / m;
    for (std::size_t g = 0; g < full; ++g) {
      MiniGroup group{{members.begin() + static_cast<std::ptrdiff_t>(g * m),
                       members.begin() + static_cast<std::ptrdiff_t>((g + 1) * m)},
                      label};
      result.groups.push_back(std::move(group));
    }
    const std::size_t leftover = members.size() - full * m;
    if (leftover == 0) continue;
    if (policy == RemainderPolicy::drop) {
      if (full == 0) {
        result.warnings.push_back("class " + std::to_string(label) + " has " + std::to_string(members.size()) +
                                  " samples, fewer than M=" + std::to_string(m) + "; contributes no groups");
      }
      continue;
    }
    MiniGroup group{{members.begin() + static_cast<std::ptrdiff_t>(full * m), members.end()}, label};
    while (group.members.size() < m) group.members.push_back(members[rng.below(members.size())]);
    result.groups.push_back(std::move(group));
  }
  if (result.groups.empty()) throw ValidationError("build_groups: no class has at least M samples");
  return result;
}

std::vector<MiniGroup> build_mixed_groups(std::size_t dataset_size, int group_size, std::uint64_t seed) {
  if (group_size < 1) throw ValidationError("build_mixed_groups: group size M must be >= 1");
  if (dataset_size == 0) throw ValidationError("build_mixed_groups: empty dataset");
  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto m = static_cast<std::size_t>(group_size);
  std::vector<MiniGroup> groups;
  for (std::size_t start = 0; start < dataset_size; start += m) {
    MiniGroup g;
    for (std::size_t i = start; i < std::min(start + m, dataset_size); ++i) g.members.push_back(order[i]);
    while (g.members.size() < m) g.members.push_back(order[rng.below(dataset_size)]);
    groups.push_back(std::move(g));
  }
  return groups;
}

BatchStream::BatchStream(std::vector<MiniGroup> groups, int groups_per_batch, std::uint64_t seed,
                         std::uint64_t epoch)
    : groups_(std::move(groups)), k_(groups_per_batch) {
  if (k_ < 1) throw ValidationError("iterate_batches: K must be >= 1");
  if (static_cast<std::size_t>(k_) > groups_.size()) {
    throw ValidationError("iterate_batches: K=" + std::to_string(k_) + " exceeds the number of groups (" +
                          std::to_string(groups_.size()) + ")");
  }
  Rng rng(derive_seed(seed, {epoch}));
  rng.shuffle(groups_);
}

std::optional<MiniGroupBatch> BatchStream::next() {
  const auto k = static_cast<std::size_t>(k_);
  if (cursor_ + k > groups_.size()) return std::nullopt;
  MiniGroupBatch batch;
  batch.groups_per_batch = k_;
  batch.group_size = static_cast<int>(groups_[cursor_].members.size());
  batch.groups.assign(groups_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                      groups_.begin() + static_cast<std::ptrdiff_t>(cursor_ + k));
  cursor_ += k;
  return batch;
}

std::vector<MiniGroupBatch> iterate_batches(std::span<const MiniGroup> groups, int groups_per_batch,
                                            std::uint64_t seed, std::uint64_t epoch) {
  BatchStream stream({groups.begin(), groups.end()}, groups_per_batch, seed, epoch);
  std::vector<MiniGroupBatch> out;
  out.reserve(stream.batches_per_epoch());
  while (auto b = stream.next()) out.push_back(std::move(*b));
  return out;
}

std::string describe_batch(const MiniGroupBatch& batch, std::size_t ordinal) {
  std::ostringstream os;
  os << "batch " << ordinal << ":";
  for (const auto& g : batch.groups) {
    os << " [";
    if (g.given_label == kMixedLabel) {
      os << "mixed:";
    } else {
      os << "label " << g.given_label << ":";
    }
    for (auto idx : g.members) os << ' ' << idx;
    os << ']';
  }
  return os.str();
}

}  // namespace nrl
