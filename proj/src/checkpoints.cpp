#include "oblivion/checkpoints.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "oblivion/random.hpp"

namespace oblivion {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 8;
constexpr const char* kManifestName = "manifest.txt";

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<unsigned char>(bits & 0xffu));
    bits = static_cast<U>(bits >> 8);
  }
}

template <typename T>
T get_le(std::span<const unsigned char> in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = sizeof(T); i-- > 0;) {
    value = static_cast<T>((value << 8) | in[offset + i]);
  }
  return value;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

[[noreturn]] void throw_errno(const std::string& what, const fs::path& path) {
  throw StoreError(what + " " + path.string() + ": " + std::strerror(errno));
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

void write_durable(const fs::path& path, std::span<const unsigned char> bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw_errno("cannot create", path);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw_errno("write failed for", path);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw_errno("fsync failed for", path);
  }
  if (::close(fd) != 0) throw_errno("close failed for", path);
}

void write_atomic(const fs::path& path, std::span<const unsigned char> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  write_durable(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw StoreError("cannot commit " + path.string());
  }
  fsync_dir(path.parent_path());
}

std::vector<unsigned char> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StoreError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::vector<unsigned char> encode_snapshot(const ParamVector& p) {
  std::vector<unsigned char> out;
  out.reserve(kHeaderSize + static_cast<std::size_t>(p.size()) * 8);
  out.insert(out.end(), kSnapshotMagic, kSnapshotMagic + 4);
  put_le<std::uint32_t>(out, kSnapshotVersion);
  put_le<std::uint64_t>(out, p.layout().hash());
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p[i]));
  return out;
}

ParamVector decode_snapshot(std::span<const unsigned char> bytes, const LayoutPtr& layout) {
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kSnapshotMagic, 4) != 0) {
    throw StoreError("not a snapshot file (bad magic)");
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kSnapshotVersion) {
    throw StoreError("unsupported snapshot version " + std::to_string(version));
  }
  if (get_le<std::uint64_t>(bytes, 8) != layout->hash()) {
    throw LayoutMismatch("snapshot layout hash does not match the store layout");
  }
  const auto count = get_le<std::uint64_t>(bytes, 16);
  if (count != static_cast<std::uint64_t>(layout->total_len()) ||
      bytes.size() != kHeaderSize + count * 8) {
    throw StoreError("snapshot element count does not match its layout or file size");
  }
  Eigen::VectorXd values(static_cast<Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    values[static_cast<Index>(i)] =
        std::bit_cast<double>(get_le<std::uint64_t>(bytes, kHeaderSize + i * 8));
  }
  return ParamVector(layout, std::move(values));
}

std::uint64_t snapshot_checksum(std::span<const unsigned char> encoded) {
  if (encoded.size() < kHeaderSize) return fnv1a64(nullptr, 0);
  return fnv1a64(encoded.data() + kHeaderSize, encoded.size() - kHeaderSize);
}

StoreLock::StoreLock(const fs::path& root) {
  const fs::path path = root / "lock";
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
  if (fd_ < 0) throw_errno("cannot open lock file", path);
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw StoreError("store " + root.string() + " is locked by another process");
  }
}

StoreLock::~StoreLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

CheckpointStore::CheckpointStore(fs::path root, LayoutPtr layout, std::size_t num_blocks)
    : root_(std::move(root)), layout_(std::move(layout)), num_blocks_(num_blocks) {}

CheckpointStore CheckpointStore::create(const fs::path& root, ParamLayout layout,
                                        std::size_t num_blocks) {
  if (num_blocks == 0) throw StoreError("store needs at least one block");
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw StoreError("cannot create store directory " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("snap_", 0) == 0) fs::remove(entry.path());
  }
  CheckpointStore store(root, std::make_shared<const ParamLayout>(std::move(layout)), num_blocks);
  store.write_manifest();
  return store;
}

CheckpointStore CheckpointStore::open(const fs::path& root) {
  if (!fs::exists(root / kManifestName)) {
    throw StoreError("no checkpoint store at " + root.string() + " (missing manifest.txt)");
  }
  CheckpointStore store(root, nullptr, 0);
  store.read_manifest();
  return store;
}

bool CheckpointStore::complete() const {
  for (std::size_t i = 0; i <= num_blocks_; ++i) {
    if (!has(i)) return false;
  }
  return true;
}

fs::path CheckpointStore::snapshot_path(std::size_t index) const {
  return root_ / ("snap_" + std::to_string(index) + ".dobl");
}

void CheckpointStore::check_index(std::size_t index) const {
  if (index > num_blocks_) {
    throw StoreError("snapshot index " + std::to_string(index) + " outside 0.." +
                     std::to_string(num_blocks_));
  }
}

void CheckpointStore::save_snapshot(std::size_t index, const ParamVector& p) {
  apply({{index, &p}}, {}, stitched_from_);
}

ParamVector CheckpointStore::load_snapshot(std::size_t index) const {
  check_index(index);
  const auto it = records_.find(index);
  if (it == records_.end()) throw StoreError("no snapshot with index " + std::to_string(index));
  const auto bytes = read_all(root_ / it->second.file);
  if (snapshot_checksum(bytes) != it->second.checksum) {
    throw ChecksumMismatch("checksum mismatch for snapshot " + std::to_string(index));
  }
  return decode_snapshot(bytes, layout_);
}

void CheckpointStore::replace_range(std::size_t from, std::size_t to,
                                    std::span<const ParamVector> vectors) {
  if (from < 1 || from > to || to > num_blocks_) {
    throw StoreError("replace range [" + std::to_string(from) + ", " + std::to_string(to) +
                     "] outside 1.." + std::to_string(num_blocks_));
  }
  if (to - from + 1 != vectors.size()) {
    throw StoreError("replace range covers " + std::to_string(to - from + 1) + " snapshots but " +
                     std::to_string(vectors.size()) + " vectors were given");
  }
  std::map<std::size_t, const ParamVector*> updates;
  for (std::size_t i = 0; i < vectors.size(); ++i) updates[from + i] = &vectors[i];
  apply(updates, {}, stitched_from_);
}

void CheckpointStore::commit_unlearning(std::size_t from, std::span<const ParamVector> retrained,
                                        const std::optional<ParamVector>& serving) {
  if (retrained.empty()) throw StoreError("unlearning commit without retrained snapshots");
  const std::size_t to = from + retrained.size() - 1;
  if (from < 1 || to > num_blocks_) throw StoreError("unlearning commit outside the block range");
  std::map<std::size_t, const ParamVector*> updates;
  for (std::size_t i = 0; i < retrained.size(); ++i) updates[from + i] = &retrained[i];
  std::set<std::size_t> newly_stale;
  std::optional<std::size_t> stitched = stitched_from_;
  if (serving) {
    if (to == num_blocks_) throw StoreError("stitched model given for a full retrain");
    updates[num_blocks_] = &*serving;
    for (std::size_t i = to + 1; i < num_blocks_; ++i) newly_stale.insert(i);
    stitched = to;
  }
  apply(updates, newly_stale, stitched);
}

void CheckpointStore::apply(const std::map<std::size_t, const ParamVector*>& updates,
                            const std::set<std::size_t>& newly_stale,
                            std::optional<std::size_t> stitched_from) {
  for (const auto& [index, p] : updates) {
    check_index(index);
    if (!(p->layout() == *layout_)) {
      throw LayoutMismatch("snapshot layout does not match the store layout");
    }
  }

  // Stage every new file first; the live files stay untouched on failure.
  std::map<std::size_t, ManifestRecord> staged;
  std::vector<fs::path> pending;
  try {
    for (const auto& [index, p] : updates) {
      const auto bytes = encode_snapshot(*p);
      const fs::path final_path = snapshot_path(index);
      const fs::path pending_path = final_path.string() + ".pending";
      write_durable(pending_path, bytes);
      pending.push_back(pending_path);
      staged[index] = {index, final_path.filename().string(), snapshot_checksum(bytes), {}};
    }
  } catch (...) {
    std::error_code ec;
    for (const auto& p : pending) fs::remove(p, ec);
    throw;
  }

  for (auto& [index, record] : staged) {
    const fs::path final_path = root_ / record.file;
    fs::rename(final_path.string() + ".pending", final_path);
    record.created = fs::last_write_time(final_path);
  }
  fsync_dir(root_);

  for (auto& [index, record] : staged) {
    records_[index] = std::move(record);
    stale_.erase(index);
  }
  stale_.insert(newly_stale.begin(), newly_stale.end());
  stitched_from_ = stitched_from;
  write_manifest();
}

void CheckpointStore::write_manifest() const {
  std::ostringstream out;
  out << "# oblivion-manifest " << kSnapshotVersion << '\n';
  out << "# blocks " << num_blocks_ << '\n';
  out << "# layout " << layout_->describe() << '\n';
  if (stitched_from_) out << "# stitched_from " << *stitched_from_ << '\n';
  if (!stale_.empty()) {
    out << "# stale";
    for (std::size_t i : stale_) out << ' ' << i;
    out << '\n';
  }
  for (const auto& [index, record] : records_) {
    out << index << '\t' << record.file << '\t' << hex64(record.checksum) << '\n';
  }
  const std::string text = out.str();
  write_atomic(root_ / kManifestName,
               std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

void CheckpointStore::read_manifest() {
  std::ifstream in(root_ / kManifestName);
  if (!in) throw StoreError("cannot read manifest in " + root_.string());
  std::string line;
  std::size_t line_no = 0;
  std::optional<ParamLayout> layout;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    if (line[0] == '#') {
      std::string hash, key;
      fields >> hash >> key;
      if (key == "blocks") {
        fields >> num_blocks_;
      } else if (key == "layout") {
        std::string rest;
        std::getline(fields, rest);
        layout = ParamLayout::parse(rest);
      } else if (key == "stitched_from") {
        std::size_t v;
        fields >> v;
        stitched_from_ = v;
      } else if (key == "stale") {
        std::size_t v;
        while (fields >> v) stale_.insert(v);
      }
      continue;
    }
    std::string index_text, file, checksum_text;
    if (!std::getline(fields, index_text, '\t') || !std::getline(fields, file, '\t') ||
        !std::getline(fields, checksum_text)) {
      throw StoreError("malformed manifest line " + std::to_string(line_no));
    }
    ManifestRecord record;
    try {
      record.index = static_cast<std::size_t>(std::stoull(index_text));
      record.checksum = std::stoull(checksum_text, nullptr, 16);
    } catch (const std::exception&) {
      throw StoreError("malformed manifest line " + std::to_string(line_no));
    }
    record.file = file;
    std::error_code ec;
    record.created = fs::last_write_time(root_ / file, ec);
    records_[record.index] = std::move(record);
  }
  if (!layout || num_blocks_ == 0) throw StoreError("manifest is missing its layout or block count");
  layout_ = std::make_shared<const ParamLayout>(std::move(*layout));
}

}  // namespace oblivion
