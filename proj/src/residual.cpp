#include "oblivion/residual.hpp"

#include <cstdio>
#include <fstream>

namespace oblivion {

ParamVector temporal_influence(const ParamVector& prev, const ParamVector& next) {
  return sub(next, prev);
}

double residual_memory(const ParamVector& v, const ParamVector& v_prime) {
  return l1_norm(sub(v, v_prime));
}

DeltaSeries build_delta_series(const CheckpointStore& store,
                               std::span<const ParamVector> retrained, std::size_t d) {
  if (d < 1 || d + retrained.size() - 1 > store.num_blocks() || retrained.empty()) {
    throw StoreError("retrained range does not fit in the store");
  }
  DeltaSeries series{d, {}};
  ParamVector orig_prev = store.load_snapshot(d - 1);
  ParamVector retrained_prev = orig_prev;
  for (std::size_t j = 0; j < retrained.size(); ++j) {
    ParamVector orig = store.load_snapshot(d + j);
    series.values.push_back(residual_memory(temporal_influence(orig_prev, orig),
                                            temporal_influence(retrained_prev, retrained[j])));
    orig_prev = std::move(orig);
    retrained_prev = retrained[j];
  }
  return series;
}

void write_delta_csv(const DeltaSeries& series, std::ostream& out) {
  out << "t,delta\n";
  char buf[32];
  for (std::size_t t = 0; t < series.values.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.17g", series.values[t]);
    out << t << ',' << buf << '\n';
  }
}

void write_delta_csv(const DeltaSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_delta_csv(series, out);
}

}  // namespace oblivion
