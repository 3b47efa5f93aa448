#include "oblivion/datablocks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "oblivion/random.hpp"

namespace oblivion {

Dataset::Dataset(std::vector<DataPoint> points, std::size_t num_classes)
    : points_(std::move(points)), num_classes_(num_classes) {
  if (points_.empty()) throw DataError("empty dataset");
  if (num_classes_ == 0) throw DataError("dataset needs at least one class");
  feature_dim_ = static_cast<std::size_t>(points_.front().features.size());
  index_.reserve(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const DataPoint& p = points_[i];
    if (static_cast<std::size_t>(p.features.size()) != feature_dim_) {
      throw DataError("point " + std::to_string(p.id) + " has " +
                      std::to_string(p.features.size()) + " features, expected " +
                      std::to_string(feature_dim_));
    }
    if (p.label < 0 || static_cast<std::size_t>(p.label) >= num_classes_) {
      throw DataError("point " + std::to_string(p.id) + " has label " + std::to_string(p.label) +
                      " outside [0, " + std::to_string(num_classes_) + ")");
    }
    if (!p.features.allFinite()) {
      throw DataError("point " + std::to_string(p.id) + " has non-finite features");
    }
    if (!index_.emplace(p.id, i).second) {
      throw DataError("duplicate id " + std::to_string(p.id));
    }
  }
}

const DataPoint& Dataset::at(PointId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw DataError("unknown id " + std::to_string(id));
  return points_[it->second];
}

PointId Dataset::max_id() const {
  PointId best = points_.front().id;
  for (const auto& p : points_) best = std::max(best, p.id);
  return best;
}

Dataset Dataset::without(const std::set<PointId>& ids) const {
  std::vector<DataPoint> kept;
  kept.reserve(points_.size());
  for (const auto& p : points_) {
    if (!ids.count(p.id)) kept.push_back(p);
  }
  return Dataset(std::move(kept), num_classes_);
}

Eigen::MatrixXd Dataset::feature_matrix() const {
  Eigen::MatrixXd x(static_cast<Index>(feature_dim_), static_cast<Index>(points_.size()));
  for (std::size_t i = 0; i < points_.size(); ++i) x.col(static_cast<Index>(i)) = points_[i].features;
  return x;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(points_.size());
  for (const auto& p : points_) out.push_back(p.label);
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_field(std::string_view field, std::size_t line_no, const char* what) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" +
                    std::string(field) + "'");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file " + path.string());

  std::vector<DataPoint> points;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (line_no == 1 && !(std::isdigit(static_cast<unsigned char>(view.front())) ||
                          view.front() == '-' || view.front() == '+')) {
      continue;
    }
    const auto fields = split_commas(view);
    if (fields.size() < 3) {
      throw DataError("line " + std::to_string(line_no) + ": expected id,label,features...");
    }
    const std::size_t m = fields.size() - 2;
    if (dim && *dim != m) {
      throw DataError("line " + std::to_string(line_no) + ": inconsistent dimension " +
                      std::to_string(m) + " (expected " + std::to_string(*dim) + ")");
    }
    dim = m;
    DataPoint p;
    p.id = parse_field<PointId>(fields[0], line_no, "id");
    p.label = parse_field<int>(fields[1], line_no, "label");
    if (p.label < 0 || (num_classes && static_cast<std::size_t>(p.label) >= *num_classes)) {
      throw DataError("line " + std::to_string(line_no) + ": label " + std::to_string(p.label) +
                      " out of range");
    }
    p.features.resize(static_cast<Index>(m));
    for (std::size_t j = 0; j < m; ++j) {
      p.features[static_cast<Index>(j)] = parse_field<double>(fields[j + 2], line_no, "feature");
    }
    max_label = std::max(max_label, p.label);
    points.push_back(std::move(p));
  }
  if (points.empty()) throw DataError("empty dataset");
  return Dataset(std::move(points), num_classes.value_or(static_cast<std::size_t>(max_label) + 1));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  out << "id,label";
  for (std::size_t j = 0; j < ds.feature_dim(); ++j) out << ",f_" << (j + 1);
  out << '\n';
  char buf[32];
  for (const auto& p : ds.points()) {
    out << p.id << ',' << p.label;
    for (Index j = 0; j < p.features.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", p.features[j]);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

BlockPartition::BlockPartition(std::vector<std::vector<PointId>> blocks)
    : blocks_(std::move(blocks)) {
  std::set<PointId> seen;
  for (const auto& b : blocks_) {
    for (PointId id : b) {
      if (!seen.insert(id).second) {
        throw DataError("id " + std::to_string(id) + " appears in more than one block");
      }
    }
  }
}

const std::vector<PointId>& BlockPartition::block(std::size_t d) const {
  if (d == 0 || d > blocks_.size()) {
    throw DataError("block index " + std::to_string(d) + " outside 1.." +
                    std::to_string(blocks_.size()));
  }
  return blocks_[d - 1];
}

std::size_t BlockPartition::total_points() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.size();
  return n;
}

std::optional<std::size_t> BlockPartition::find(PointId id) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (std::find(blocks_[i].begin(), blocks_[i].end(), id) != blocks_[i].end()) return i + 1;
  }
  return std::nullopt;
}

void save_partition(const BlockPartition& partition, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write partition file " + path.string());
    for (const auto& b : partition.blocks()) {
      for (std::size_t i = 0; i < b.size(); ++i) out << (i ? " " : "") << b[i];
      out << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

BlockPartition load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path.string());
  std::vector<std::vector<PointId>> blocks;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::vector<PointId> ids;
    PointId id;
    while (fields >> id) ids.push_back(id);
    blocks.push_back(std::move(ids));
  }
  if (blocks.empty()) throw DataError("partition file " + path.string() + " has no blocks");
  return BlockPartition(std::move(blocks));
}

BlockPartition partition(const Dataset& ds, std::size_t num_blocks, std::uint64_t seed) {
  if (num_blocks < 1 || num_blocks > ds.size()) {
    throw DataError("block count " + std::to_string(num_blocks) + " outside 1.." +
                    std::to_string(ds.size()));
  }
  std::map<int, std::vector<PointId>> by_class;
  for (const auto& p : ds.points()) by_class[p.label].push_back(p.id);

  std::vector<std::vector<PointId>> blocks(num_blocks);
  std::size_t cursor = static_cast<std::size_t>(Rng(derive_seed(seed, "partition")).below(num_blocks));
  for (auto& [label, ids] : by_class) {
    std::sort(ids.begin(), ids.end());
    for (PointId id : ids) {
      blocks[cursor].push_back(id);
      cursor = (cursor + 1) % num_blocks;
    }
  }
  return BlockPartition(std::move(blocks));
}

std::vector<BlockDeletion> locate(const BlockPartition& partition, const DeletionRequest& req) {
  std::unordered_map<PointId, std::size_t> owner;
  for (std::size_t d = 1; d <= partition.num_blocks(); ++d) {
    for (PointId id : partition.block(d)) owner.emplace(id, d);
  }
  std::map<std::size_t, std::vector<PointId>> grouped;
  for (PointId id : req.point_ids) {
    const auto it = owner.find(id);
    if (it == owner.end()) throw DataError("unknown id " + std::to_string(id));
    grouped[it->second].push_back(id);
  }
  std::vector<BlockDeletion> out;
  for (auto& [d, ids] : grouped) out.push_back({d, std::move(ids)});
  return out;
}

BlockPartition delete_from_block(const BlockPartition& partition, std::size_t d,
                                 const std::vector<PointId>& ids) {
  const auto& target = partition.block(d);
  const std::set<PointId> doomed(ids.begin(), ids.end());
  for (PointId id : doomed) {
    if (std::find(target.begin(), target.end(), id) == target.end()) {
      throw DataError("id " + std::to_string(id) + " is not in block " + std::to_string(d));
    }
  }
  auto blocks = partition.blocks();
  auto& b = blocks[d - 1];
  b.erase(std::remove_if(b.begin(), b.end(), [&](PointId id) { return doomed.count(id) != 0; }),
          b.end());
  return BlockPartition(std::move(blocks));
}

DataBlock block_data(const Dataset& ds, const BlockPartition& partition, std::size_t d) {
  const auto& ids = partition.block(d);
  DataBlock out;
  out.features.resize(static_cast<Index>(ds.feature_dim()), static_cast<Index>(ids.size()));
  out.labels.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const DataPoint& p = ds.at(ids[i]);
    out.features.col(static_cast<Index>(i)) = p.features;
    out.labels.push_back(p.label);
  }
  return out;
}

void BackdoorSpec::validate(const Dataset& ds) const {
  for (std::size_t idx : trigger_mask) {
    if (idx >= ds.feature_dim()) {
      throw DataError("trigger index " + std::to_string(idx) + " outside feature dimension " +
                      std::to_string(ds.feature_dim()));
    }
  }
  if (target_label < 0 || static_cast<std::size_t>(target_label) >= ds.num_classes()) {
    throw DataError("backdoor target label out of range");
  }
  if (!std::isfinite(trigger_value)) throw DataError("trigger value must be finite");
  if (count > ds.size()) {
    throw DataError("backdoor count " + std::to_string(count) + " exceeds dataset size " +
                    std::to_string(ds.size()));
  }
}

Eigen::VectorXd apply_trigger(const Eigen::VectorXd& x, const BackdoorSpec& spec) {
  Eigen::VectorXd out = x;
  for (std::size_t idx : spec.trigger_mask) out[static_cast<Index>(idx)] = spec.trigger_value;
  return out;
}

PoisonedDataset inject_backdoor(const Dataset& ds, const BackdoorSpec& spec, std::uint64_t seed) {
  spec.validate(ds);
  if (spec.count == 0) return {ds, {}};

  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "backdoor"));
  rng.shuffle(order);
  order.resize(spec.count);
  std::sort(order.begin(), order.end());

  std::vector<DataPoint> points = ds.points();
  std::vector<PointId> fresh;
  PointId next = ds.max_id() + 1;
  for (std::size_t i : order) {
    DataPoint copy = ds.points()[i];
    copy.id = next++;
    copy.features = apply_trigger(copy.features, spec);
    copy.label = spec.target_label;
    fresh.push_back(copy.id);
    points.push_back(std::move(copy));
  }
  return {Dataset(std::move(points), ds.num_classes()), std::move(fresh)};
}

Dataset make_gaussian_clusters(const ClusterConfig& cfg, std::uint64_t seed) {
  if (cfg.num_points == 0 || cfg.num_classes == 0 || cfg.feature_dim == 0) {
    throw DataError("cluster config needs points, classes and features");
  }
  const Index dim = static_cast<Index>(cfg.feature_dim);
  Rng centre_rng(derive_seed(cfg.centre_seed, "cluster_centres"));
  std::vector<Eigen::VectorXd> centres(cfg.num_classes, Eigen::VectorXd(dim));
  for (auto& c : centres) {
    for (Index j = 0; j < dim; ++j) c[j] = cfg.separation * centre_rng.normal();
  }
  Rng rng(derive_seed(seed, "cluster_samples"));
  std::vector<DataPoint> points;
  points.reserve(cfg.num_points);
  for (std::size_t i = 0; i < cfg.num_points; ++i) {
    const int label = static_cast<int>(i % cfg.num_classes);
    Eigen::VectorXd x(dim);
    for (Index j = 0; j < dim; ++j) x[j] = centres[static_cast<std::size_t>(label)][j] + cfg.spread * rng.normal();
    points.push_back({cfg.first_id + static_cast<PointId>(i), std::move(x), label});
  }
  return Dataset(std::move(points), cfg.num_classes);
}

}  // namespace oblivion
