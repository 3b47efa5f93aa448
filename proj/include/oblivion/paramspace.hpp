#ifndef OBLIVION_PARAMSPACE_HPP
#define OBLIVION_PARAMSPACE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oblivion/error.hpp"

namespace oblivion {

using Index = Eigen::Index;

struct ParamSegment {
  std::string name;
  std::vector<Index> shape;
  Index offset = 0;

  Index size() const;
  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

/// Ordered, contiguous segments that fix where every model scalar lives in a
/// flat parameter vector. Layers appear in forward order; within a layer the
/// row-major weight matrix precedes the bias.
class ParamLayout {
 public:
  ParamLayout() = default;

  /// Appends a segment at the current end of the layout.
  void add_segment(std::string name, std::vector<Index> shape);

  const std::vector<ParamSegment>& segments() const { return segments_; }
  Index total_len() const { return total_len_; }

  /// Text form `name:d1xd2 name:d1 ...`; stable across runs.
  std::string describe() const;
  static ParamLayout parse(const std::string& description);

  /// FNV-1a of describe().
  std::uint64_t hash() const;

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  std::vector<ParamSegment> segments_;
  Index total_len_ = 0;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

/// A point in parameter space: every scalar of a model in layout order.
/// Values are fixed at construction and always finite.
class ParamVector {
 public:
  ParamVector(LayoutPtr layout, Eigen::VectorXd values);

  static ParamVector zeros(LayoutPtr layout);

  const ParamLayout& layout() const { return *layout_; }
  const LayoutPtr& layout_ptr() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  Index size() const { return values_.size(); }
  double operator[](Index i) const { return values_[i]; }

  bool same_layout(const ParamVector& other) const;

  /// Bitwise equality of values and layout.
  friend bool operator==(const ParamVector& a, const ParamVector& b);

 private:
  LayoutPtr layout_;
  Eigen::VectorXd values_;
};

/// Throws LayoutMismatch when the layouts differ.
void require_same_layout(const ParamVector& a, const ParamVector& b);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scale(double c, const ParamVector& a);
double l1_norm(const ParamVector& a);

inline ParamVector operator+(const ParamVector& a, const ParamVector& b) {
  return add(a, b);
}
inline ParamVector operator-(const ParamVector& a, const ParamVector& b) {
  return sub(a, b);
}
inline ParamVector operator*(double c, const ParamVector& a) {
  return scale(c, a);
}

}  // namespace oblivion

#endif  // OBLIVION_PARAMSPACE_HPP
