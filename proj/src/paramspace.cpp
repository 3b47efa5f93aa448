#include "oblivion/paramspace.hpp"

#include <cstring>
#include <sstream>

#include "oblivion/random.hpp"

namespace oblivion {

Index ParamSegment::size() const {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

void ParamLayout::add_segment(std::string name, std::vector<Index> shape) {
  if (name.empty() || name.find_first_of(" :\t\n") != std::string::npos) {
    throw LayoutMismatch("invalid segment name '" + name + "'");
  }
  if (shape.empty()) throw LayoutMismatch("segment '" + name + "' has no shape");
  for (Index d : shape) {
    if (d <= 0) throw LayoutMismatch("segment '" + name + "' has a non-positive dimension");
  }
  ParamSegment seg{std::move(name), std::move(shape), total_len_};
  total_len_ += seg.size();
  segments_.push_back(std::move(seg));
}

std::string ParamLayout::describe() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (i) out << ' ';
    out << segments_[i].name << ':';
    for (std::size_t j = 0; j < segments_[i].shape.size(); ++j) {
      if (j) out << 'x';
      out << segments_[i].shape[j];
    }
  }
  return out.str();
}

ParamLayout ParamLayout::parse(const std::string& description) {
  ParamLayout layout;
  std::istringstream in(description);
  std::string token;
  while (in >> token) {
    const auto colon = token.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == token.size()) {
      throw LayoutMismatch("malformed layout token '" + token + "'");
    }
    std::vector<Index> shape;
    std::istringstream dims(token.substr(colon + 1));
    std::string dim;
    while (std::getline(dims, dim, 'x')) {
      try {
        shape.push_back(static_cast<Index>(std::stoll(dim)));
      } catch (const std::exception&) {
        throw LayoutMismatch("malformed layout token '" + token + "'");
      }
    }
    layout.add_segment(token.substr(0, colon), std::move(shape));
  }
  return layout;
}

std::uint64_t ParamLayout::hash() const { return fnv1a64(describe()); }

ParamVector::ParamVector(LayoutPtr layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_) throw LayoutMismatch("parameter vector without a layout");
  if (values_.size() != layout_->total_len()) {
    throw LayoutMismatch("parameter vector has " + std::to_string(values_.size()) +
                         " values, layout expects " +
                         std::to_string(layout_->total_len()));
  }
  if (!values_.allFinite()) throw NonFiniteValue("parameter vector contains NaN/Inf");
}

ParamVector ParamVector::zeros(LayoutPtr layout) {
  const Index n = layout ? layout->total_len() : 0;
  return ParamVector(std::move(layout), Eigen::VectorXd::Zero(n));
}

bool ParamVector::same_layout(const ParamVector& other) const {
  return layout_ == other.layout_ || *layout_ == *other.layout_;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) return false;
  return std::memcmp(a.values_.data(), b.values_.data(),
                     static_cast<std::size_t>(a.values_.size()) * sizeof(double)) == 0;
}

void require_same_layout(const ParamVector& a, const ParamVector& b) {
  if (!a.same_layout(b)) {
    throw LayoutMismatch("layout mismatch: [" + a.layout().describe() + "] vs [" +
                         b.layout().describe() + "]");
  }
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b);
  return ParamVector(a.layout_ptr(), a.values() + b.values());
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b);
  return ParamVector(a.layout_ptr(), a.values() - b.values());
}

ParamVector scale(double c, const ParamVector& a) {
  return ParamVector(a.layout_ptr(), c * a.values());
}

double l1_norm(const ParamVector& a) { return a.values().lpNorm<1>(); }

}  // namespace oblivion
