#ifndef OBLIVION_UNLEARNER_HPP
#define OBLIVION_UNLEARNER_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "oblivion/checkpoints.hpp"
#include "oblivion/datablocks.hpp"
#include "oblivion/nnet.hpp"
#include "oblivion/residual.hpp"
#include "oblivion/trend.hpp"

namespace oblivion {

struct TrainingSetup {
  NetArch arch;
  TrainConfig train;
};

/// Called with the 1-based index of every block handed to train_block.
using BlockObserver = std::function<void(std::size_t)>;

/// Trains blocks 1..B in order from the seeded initial model. Empty blocks
/// leave the model unchanged. When a store is given, snapshot 0 (the initial
/// model) and one snapshot per block are written to it.
NetModel stored_train(const Dataset& ds, const BlockPartition& partition,
                      const TrainingSetup& setup, CheckpointStore* store,
                      const BlockObserver& observer = {});

/// retrained + (final - stored_at_stop). Coordinates where the retrained
/// model still equals the stored one take the stored final value directly,
/// so a deletion that changed nothing reproduces the final model exactly.
ParamVector stitch(const ParamVector& retrained, const ParamVector& final_model,
                   const ParamVector& stored_at_stop);

struct FitTraceEntry {
  std::size_t t;
  StationarityVerdict verdict;
};

struct UnlearnReport {
  std::size_t d = 0;
  std::size_t t = 0;
  bool stopped_early = false;
  DeltaSeries delta_series;
  std::vector<FitTraceEntry> fit_trace;
  std::size_t blocks_retrained = 0;
  std::size_t blocks_total = 0;
  double speedup_blocks = 1.0;
  std::chrono::duration<double> wall_time_retrain{0};
  bool stitched = false;
  std::vector<std::string> warnings;
};

/// Plain `key = value` lines; the only timing field is wall_time_retrain_s.
void write_report(const UnlearnReport& report, std::ostream& out);
void write_fit_csv(const UnlearnReport& report, std::ostream& out);

struct BlockUnlearning {
  NetModel model;
  UnlearnReport report;
  BlockPartition partition;  // with the ids removed from block d
};

/// Unlearns `ids` from block d: retrains from stored snapshot d - 1 one block
/// at a time, stops once the residual-memory series is stationary, stitches
/// the stored influence of the untouched tail and commits the retrained
/// snapshots (and the stitched serving model) to the store.
BlockUnlearning unlearn_one_block(CheckpointStore& store, const Dataset& ds,
                                  const BlockPartition& partition, std::size_t d,
                                  const std::vector<PointId>& ids, const TrainingSetup& setup,
                                  const StationarityConfig& stationarity,
                                  const BlockObserver& observer = {});

struct RequestUnlearning {
  NetModel model;
  std::vector<UnlearnReport> reports;
  BlockPartition partition;
};

/// Splits a request by block and unlearns the blocks in ascending order, each
/// against the store state the previous one left behind.
RequestUnlearning unlearn_request(CheckpointStore& store, const Dataset& ds,
                                  const BlockPartition& partition, const DeletionRequest& req,
                                  const TrainingSetup& setup,
                                  const StationarityConfig& stationarity,
                                  const BlockObserver& observer = {});

struct ExpectedRetention {
  double per_block_cost = 0;
  std::size_t k = 0;
  double expected_fraction = 0;
  double standard_error = 0;
};

/// Monte Carlo estimate of the fraction of blocks retrained when k distinct
/// blocks, drawn uniformly from 1..B, each require a window of ceil(cost * B)
/// blocks starting at their own position. A window that would run past B is
/// clamped to end at B, so every deletion costs exactly ceil(cost * B).
ExpectedRetention expected_retained_fraction(std::size_t num_blocks, double per_block_cost,
                                             std::size_t k, std::size_t trials,
                                             std::uint64_t seed);

}  // namespace oblivion

#endif  // OBLIVION_UNLEARNER_HPP
