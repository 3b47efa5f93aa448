#ifndef OBLIVION_CHECKPOINTS_HPP
#define OBLIVION_CHECKPOINTS_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "oblivion/paramspace.hpp"

namespace oblivion {

/// Snapshot payload layout: "DOBL", u32 version, u64 layout hash,
/// u64 element count, then little-endian IEEE-754 doubles.
inline constexpr char kSnapshotMagic[4] = {'D', 'O', 'B', 'L'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<unsigned char> encode_snapshot(const ParamVector& p);
ParamVector decode_snapshot(std::span<const unsigned char> bytes, const LayoutPtr& layout);

/// FNV-1a over the double payload of an encoded snapshot.
std::uint64_t snapshot_checksum(std::span<const unsigned char> encoded);

struct ManifestRecord {
  std::size_t index;
  std::string file;
  std::uint64_t checksum;
  std::filesystem::file_time_type created;  // taken from the file, not stored
};

/// Exclusive advisory lock on `<root>/lock`, held for the object's lifetime.
class StoreLock {
 public:
  explicit StoreLock(const std::filesystem::path& root);
  ~StoreLock();
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

/// Directory of parameter snapshots 0..B (0 is the untrained model) plus a
/// plain-text manifest. Every manifest change is committed by rename, so
/// readers always see either the previous or the next complete state.
class CheckpointStore {
 public:
  /// Creates `root` if needed and starts an empty manifest, discarding any
  /// previous snapshots in it.
  static CheckpointStore create(const std::filesystem::path& root, ParamLayout layout,
                                std::size_t num_blocks);
  static CheckpointStore open(const std::filesystem::path& root);

  const std::filesystem::path& root() const { return root_; }
  std::size_t num_blocks() const { return num_blocks_; }
  const LayoutPtr& layout() const { return layout_; }
  const std::map<std::size_t, ManifestRecord>& records() const { return records_; }

  bool has(std::size_t index) const { return records_.count(index) != 0; }
  /// Snapshots 0..B are all present.
  bool complete() const;

  void save_snapshot(std::size_t index, const ParamVector& p);
  ParamVector load_snapshot(std::size_t index) const;

  /// Replaces snapshots from..to with `vectors`. All new files are written
  /// before any live file is touched; a failure while writing leaves the
  /// store exactly as it was.
  void replace_range(std::size_t from, std::size_t to, std::span<const ParamVector> vectors);

  /// Commits an unlearning result: snapshots from..from+|retrained|-1 are
  /// replaced and, when `serving` is set, index B becomes the stitched model
  /// and the indices strictly between the retrained range and B are marked
  /// as left over from the previous trajectory.
  void commit_unlearning(std::size_t from, std::span<const ParamVector> retrained,
                         const std::optional<ParamVector>& serving);

  /// Indices whose snapshot predates an earlier stitched unlearning.
  const std::set<std::size_t>& stale() const { return stale_; }
  std::optional<std::size_t> stitched_from() const { return stitched_from_; }

 private:
  CheckpointStore(std::filesystem::path root, LayoutPtr layout, std::size_t num_blocks);

  std::filesystem::path snapshot_path(std::size_t index) const;
  void check_index(std::size_t index) const;
  void apply(const std::map<std::size_t, const ParamVector*>& updates,
             const std::set<std::size_t>& newly_stale, std::optional<std::size_t> stitched_from);
  void write_manifest() const;
  void read_manifest();

  std::filesystem::path root_;
  LayoutPtr layout_;
  std::size_t num_blocks_ = 0;
  std::map<std::size_t, ManifestRecord> records_;
  std::set<std::size_t> stale_;
  std::optional<std::size_t> stitched_from_;
};

}  // namespace oblivion

#endif  // OBLIVION_CHECKPOINTS_HPP
