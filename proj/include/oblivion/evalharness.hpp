#ifndef OBLIVION_EVALHARNESS_HPP
#define OBLIVION_EVALHARNESS_HPP

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "oblivion/datablocks.hpp"
#include "oblivion/unlearner.hpp"

namespace oblivion {

/// Retrains from scratch on the edited partition with the original seed.
NetModel naive_unlearn(const Dataset& ds_minus, const BlockPartition& partition_minus,
                       const TrainingSetup& setup, const BlockObserver& observer = {});

/// Fraction of positions where the two label lists agree.
double consistency(const std::vector<int>& y_naive, const std::vector<int>& y_ours);
/// Fraction of predictions equal to the truth.
double accuracy(const std::vector<int>& y_pred, const std::vector<int>& y_true);

struct EvalResult {
  double accuracy = 0;
  double consistency = 0;
  double speedup_blocks = 1;
  double speedup_wall = 1;
  std::optional<double> backdoor_success;
};

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);

struct BackdoorVerification {
  double succ_original = 0;
  double succ_unlearned = 0;
  double succ_naive = 0;
  double acc_original = 0;
  double acc_unlearned = 0;
  double acc_naive = 0;
  std::size_t eligible = 0;
  Verdict verdict = Verdict::inconclusive;
};

/// Attack success rate: triggered copies of the test points whose label is
/// not the target, classified as the target.
double backdoor_success_rate(const NetModel& model, const BackdoorSpec& spec,
                             const Dataset& clean_test);

/// Inconclusive unless succ_original - succ_naive >= margin; otherwise pass
/// iff the unlearned model's success rate is closer to the naive one than to
/// the original one.
BackdoorVerification backdoor_verify(const NetModel& original, const NetModel& unlearned,
                                     const NetModel& naive, const BackdoorSpec& spec,
                                     const Dataset& clean_test, double margin = 0.3);

void write_verification(const BackdoorVerification& v, std::ostream& out);

/// CSV `id,label,naive,unlearned`.
void write_predictions_csv(const Dataset& test, const std::vector<int>& y_naive,
                           const std::vector<int>& y_ours, std::ostream& out);

}  // namespace oblivion

#endif  // OBLIVION_EVALHARNESS_HPP
