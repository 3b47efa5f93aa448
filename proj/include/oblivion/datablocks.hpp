#ifndef OBLIVION_DATABLOCKS_HPP
#define OBLIVION_DATABLOCKS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "oblivion/nnet.hpp"

namespace oblivion {

using PointId = std::int64_t;

struct DataPoint {
  PointId id;
  Eigen::VectorXd features;
  int label;
};

class Dataset {
 public:
  Dataset() = default;
  /// Validates unique ids, label range and a common feature dimension.
  Dataset(std::vector<DataPoint> points, std::size_t num_classes);

  const std::vector<DataPoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return feature_dim_; }

  bool contains(PointId id) const { return index_.count(id) != 0; }
  const DataPoint& at(PointId id) const;
  PointId max_id() const;

  /// Copy without the listed ids.
  Dataset without(const std::set<PointId>& ids) const;

  /// Features as columns, in point order.
  Eigen::MatrixXd feature_matrix() const;
  std::vector<int> labels() const;

 private:
  std::vector<DataPoint> points_;
  std::size_t num_classes_ = 0;
  std::size_t feature_dim_ = 0;
  std::unordered_map<PointId, std::size_t> index_;
};

/// Rows `id,label,f_1,...,f_m`; a single leading header line that starts with
/// a non-digit is skipped. num_classes defaults to max label + 1.
Dataset load_csv(const std::filesystem::path& path,
                 std::optional<std::size_t> num_classes = std::nullopt);
void save_csv(const Dataset& ds, const std::filesystem::path& path);

/// Blocks are numbered 1..B.
class BlockPartition {
 public:
  BlockPartition() = default;
  explicit BlockPartition(std::vector<std::vector<PointId>> blocks);

  std::size_t num_blocks() const { return blocks_.size(); }
  const std::vector<PointId>& block(std::size_t d) const;
  const std::vector<std::vector<PointId>>& blocks() const { return blocks_; }
  std::size_t total_points() const;

  /// 1-based block holding the id, or nullopt.
  std::optional<std::size_t> find(PointId id) const;

  friend bool operator==(const BlockPartition&, const BlockPartition&) = default;

 private:
  std::vector<std::vector<PointId>> blocks_;
};

/// One line per block, ids separated by spaces.
void save_partition(const BlockPartition& partition, const std::filesystem::path& path);
BlockPartition load_partition(const std::filesystem::path& path);

/// Stratified round-robin split. Classes are visited in ascending label
/// order, ids within a class ascending, and points are dealt to consecutive
/// blocks from a single cursor that starts at a seed-derived block. This
/// keeps both the per-class counts and the block sizes within one of each
/// other.
BlockPartition partition(const Dataset& ds, std::size_t num_blocks, std::uint64_t seed);

struct DeletionRequest {
  std::set<PointId> point_ids;
};

struct BlockDeletion {
  std::size_t block;
  std::vector<PointId> ids;  // ascending
};

/// Requested ids grouped by containing block, ascending block index.
std::vector<BlockDeletion> locate(const BlockPartition& partition, const DeletionRequest& req);

/// Removes ids from block d, preserving the order of the survivors.
BlockPartition delete_from_block(const BlockPartition& partition, std::size_t d,
                                 const std::vector<PointId>& ids);

/// Training tensor for block d in stored order.
DataBlock block_data(const Dataset& ds, const BlockPartition& partition, std::size_t d);

struct BackdoorSpec {
  std::vector<std::size_t> trigger_mask;
  double trigger_value = 1.0;
  int target_label = 0;
  std::size_t count = 0;

  void validate(const Dataset& ds) const;
};

/// Clamps the trigger features of x to the trigger value.
Eigen::VectorXd apply_trigger(const Eigen::VectorXd& x, const BackdoorSpec& spec);

struct PoisonedDataset {
  Dataset dataset;
  std::vector<PointId> poisoned_ids;
};

/// Copies `count` seed-chosen points, stamps the trigger, relabels them to
/// the target and appends them under fresh ids above the current maximum.
PoisonedDataset inject_backdoor(const Dataset& ds, const BackdoorSpec& spec, std::uint64_t seed);

struct ClusterConfig {
  std::size_t num_points = 1000;
  std::size_t num_classes = 4;
  std::size_t feature_dim = 8;
  double separation = 3.0;  // scale of the class centres
  double spread = 1.0;      // within-class standard deviation
  PointId first_id = 0;
  std::uint64_t centre_seed = 0;  // shared by train/test splits of one problem
};

/// Gaussian blobs around random centres drawn from centre_seed; sample noise
/// comes from `seed`. Labels are assigned cyclically.
Dataset make_gaussian_clusters(const ClusterConfig& cfg, std::uint64_t seed);

}  // namespace oblivion

#endif  // OBLIVION_DATABLOCKS_HPP
