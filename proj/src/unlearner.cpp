#include "oblivion/unlearner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "oblivion/random.hpp"

namespace oblivion {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

NetModel stored_train(const Dataset& ds, const BlockPartition& partition,
                      const TrainingSetup& setup, CheckpointStore* store,
                      const BlockObserver& observer) {
  setup.train.validate();
  NetModel model = init_model(setup.arch, setup.train.seed);
  if (store) store->save_snapshot(0, flatten(model));
  for (std::size_t k = 1; k <= partition.num_blocks(); ++k) {
    const DataBlock block = block_data(ds, partition, k);
    if (!block.empty()) {
      model = train_block(model, block, setup.train, k);
      if (observer) observer(k);
    }
    if (store) store->save_snapshot(k, flatten(model));
  }
  return model;
}

ParamVector stitch(const ParamVector& retrained, const ParamVector& final_model,
                   const ParamVector& stored_at_stop) {
  require_same_layout(retrained, final_model);
  require_same_layout(retrained, stored_at_stop);
  const Eigen::VectorXd& r = retrained.values();
  const Eigen::VectorXd& f = final_model.values();
  const Eigen::VectorXd& s = stored_at_stop.values();
  Eigen::VectorXd out(r.size());
  for (Index i = 0; i < r.size(); ++i) out[i] = (r[i] == s[i]) ? f[i] : r[i] + (f[i] - s[i]);
  return ParamVector(retrained.layout_ptr(), std::move(out));
}

void write_report(const UnlearnReport& report, std::ostream& out) {
  out << "d = " << report.d << '\n';
  out << "t = " << report.t << '\n';
  out << "stopped_early = " << (report.stopped_early ? "true" : "false") << '\n';
  out << "stitched = " << (report.stitched ? "true" : "false") << '\n';
  out << "blocks_retrained = " << report.blocks_retrained << '\n';
  out << "blocks_total = " << report.blocks_total << '\n';
  out << "speedup_blocks = " << fmt_real(report.speedup_blocks) << '\n';
  if (!report.fit_trace.empty()) {
    out << "stop_reason = " << report.fit_trace.back().verdict.reason << '\n';
  }
  for (const auto& w : report.warnings) out << "warning = " << w << '\n';
  out << "wall_time_retrain_s = " << fmt_real(report.wall_time_retrain.count()) << '\n';
}

void write_fit_csv(const UnlearnReport& report, std::ostream& out) {
  out << "t,h,a,b,p\n";
  for (const auto& entry : report.fit_trace) {
    out << entry.t;
    if (entry.verdict.fit) {
      const FitStep& f = *entry.verdict.fit;
      out << ',' << fmt_real(f.h) << ',' << fmt_real(f.a) << ',' << fmt_real(f.b) << ','
          << fmt_real(f.p);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

BlockUnlearning unlearn_one_block(CheckpointStore& store, const Dataset& ds,
                                  const BlockPartition& partition, std::size_t d,
                                  const std::vector<PointId>& ids, const TrainingSetup& setup,
                                  const StationarityConfig& stationarity,
                                  const BlockObserver& observer) {
  setup.train.validate();
  stationarity.validate();
  const std::size_t num_blocks = store.num_blocks();
  if (partition.num_blocks() != num_blocks) {
    throw StoreError("partition has " + std::to_string(partition.num_blocks()) +
                     " blocks, store has " + std::to_string(num_blocks));
  }
  if (d < 1 || d > num_blocks) throw DataError("deletion block outside 1..B");
  if (!store.complete()) throw StoreError("store is incomplete; run stored training first");

  BlockPartition edited = delete_from_block(partition, d, ids);

  UnlearnReport report;
  report.d = d;
  report.blocks_total = num_blocks;
  report.delta_series.d = d;

  ParamVector stored_prev = store.load_snapshot(d - 1);
  NetModel model = load_into(NetModel(setup.arch), stored_prev);
  ParamVector retrained_prev = stored_prev;
  std::vector<ParamVector> retrained;
  bool stationary = false;
  std::size_t t = 0;

  for (t = 0; d + t <= num_blocks; ++t) {
    const std::size_t k = d + t;
    const DataBlock block = block_data(ds, edited, k);
    if (!block.empty()) {
      const auto start = Clock::now();
      model = train_block(model, block, setup.train, k);
      report.wall_time_retrain += Clock::now() - start;
      if (observer) observer(k);
    }
    ParamVector current = flatten(model);
    ParamVector stored = store.load_snapshot(k);
    report.delta_series.values.push_back(
        residual_memory(temporal_influence(stored_prev, stored),
                        temporal_influence(retrained_prev, current)));
    retrained.push_back(current);
    retrained_prev = std::move(current);
    stored_prev = std::move(stored);

    StationarityVerdict verdict = is_stationary(report.delta_series.values, stationarity);
    stationary = verdict.stationary;
    report.fit_trace.push_back({t, std::move(verdict)});
    if (stationary) break;
  }
  if (!stationary) t = num_blocks - d;

  const std::size_t stop = d + t;
  for (std::size_t i = d - 1; i <= stop; ++i) {
    if (store.stale().count(i)) {
      report.warnings.push_back(
          "snapshots in [" + std::to_string(d - 1) + ", " + std::to_string(stop) +
          "] include ones left over from an earlier stitched unlearning; the residual memory "
          "compares mixed trajectories");
      break;
    }
  }

  report.t = t;
  report.stopped_early = stationary && stop < num_blocks;
  report.blocks_retrained = t + 1;
  report.speedup_blocks = static_cast<double>(num_blocks) / static_cast<double>(t + 1);

  std::optional<ParamVector> serving;
  if (stop < num_blocks) {
    // stored_prev is the stored snapshot at the stopping block.
    serving = stitch(retrained.back(), store.load_snapshot(num_blocks), stored_prev);
    model = load_into(std::move(model), *serving);
    report.stitched = true;
  }
  store.commit_unlearning(d, retrained, serving);
  return {std::move(model), std::move(report), std::move(edited)};
}

RequestUnlearning unlearn_request(CheckpointStore& store, const Dataset& ds,
                                  const BlockPartition& partition, const DeletionRequest& req,
                                  const TrainingSetup& setup,
                                  const StationarityConfig& stationarity,
                                  const BlockObserver& observer) {
  if (req.point_ids.empty()) throw DataError("deletion request is empty");
  const auto groups = locate(partition, req);
  RequestUnlearning result{load_into(NetModel(setup.arch), store.load_snapshot(store.num_blocks())),
                           {}, partition};
  for (const auto& group : groups) {
    BlockUnlearning step = unlearn_one_block(store, ds, result.partition, group.block, group.ids,
                                             setup, stationarity, observer);
    result.model = std::move(step.model);
    result.partition = std::move(step.partition);
    result.reports.push_back(std::move(step.report));
  }
  return result;
}

ExpectedRetention expected_retained_fraction(std::size_t num_blocks, double per_block_cost,
                                             std::size_t k, std::size_t trials,
                                             std::uint64_t seed) {
  if (num_blocks == 0) throw Error("expected retention needs B >= 1");
  if (!(per_block_cost > 0.0 && per_block_cost <= 1.0)) {
    throw Error("per-block cost must lie in (0, 1]");
  }
  if (k < 1 || k > num_blocks) throw Error("k must lie in 1..B");
  if (trials == 0) throw Error("expected retention needs at least one trial");

  const auto length = static_cast<std::size_t>(
      std::ceil(per_block_cost * static_cast<double>(num_blocks) - 1e-12));
  Rng rng(derive_seed(seed, "expected_retention"));
  std::vector<std::size_t> positions;
  double mean = 0.0, m2 = 0.0;  // Welford
  for (std::size_t trial = 0; trial < trials; ++trial) {
    // Floyd's algorithm for k distinct positions in 1..B.
    positions.clear();
    std::unordered_set<std::size_t> chosen;
    for (std::size_t j = num_blocks - k + 1; j <= num_blocks; ++j) {
      const std::size_t candidate = 1 + static_cast<std::size_t>(rng.below(j));
      const std::size_t pick = chosen.count(candidate) ? j : candidate;
      chosen.insert(pick);
      positions.push_back(pick);
    }
    std::sort(positions.begin(), positions.end());
    std::size_t covered = 0;
    std::size_t reached = 0;  // exclusive end of the union so far
    for (std::size_t p : positions) {
      const std::size_t start = std::min(p, num_blocks - length + 1);
      const std::size_t end = start + length;
      covered += end - std::max(start, std::min(reached, end));
      reached = std::max(reached, end);
    }
    const double frac = static_cast<double>(covered) / static_cast<double>(num_blocks);
    const double delta = frac - mean;
    mean += delta / static_cast<double>(trial + 1);
    m2 += delta * (frac - mean);
  }
  const double n = static_cast<double>(trials);
  const double var = trials > 1 ? m2 / (n - 1.0) : 0.0;
  return {per_block_cost, k, mean, std::sqrt(var / n)};
}

}  // namespace oblivion
