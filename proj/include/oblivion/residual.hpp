#ifndef OBLIVION_RESIDUAL_HPP
#define OBLIVION_RESIDUAL_HPP

#include <filesystem>
#include <ostream>
#include <span>
#include <vector>

#include "oblivion/checkpoints.hpp"
#include "oblivion/paramspace.hpp"

namespace oblivion {

/// Residual memory of a deletion in block d: values[j] belongs to block d + j.
struct DeltaSeries {
  std::size_t d = 1;
  std::vector<double> values;
};

/// Parameter change caused by training one block: next - prev.
ParamVector temporal_influence(const ParamVector& prev, const ParamVector& next);

/// L1 distance between two influence vectors.
double residual_memory(const ParamVector& v, const ParamVector& v_prime);

/// Compares the stored trajectory with a retrained one that starts from the
/// stored snapshot d - 1. retrained[j] is the retrained snapshot of block d + j.
DeltaSeries build_delta_series(const CheckpointStore& store,
                               std::span<const ParamVector> retrained, std::size_t d);

/// CSV `t,delta`, t counted from the deletion block.
void write_delta_csv(const DeltaSeries& series, std::ostream& out);
void write_delta_csv(const DeltaSeries& series, const std::filesystem::path& path);

}  // namespace oblivion

#endif  // OBLIVION_RESIDUAL_HPP
