#include "oblivion/evalharness.hpp"

#include <cmath>
#include <cstdio>

namespace oblivion {

NetModel naive_unlearn(const Dataset& ds_minus, const BlockPartition& partition_minus,
                       const TrainingSetup& setup, const BlockObserver& observer) {
  return stored_train(ds_minus, partition_minus, setup, nullptr, observer);
}

namespace {

void check_lengths(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw Error("label lists differ in length");
  if (a.empty()) throw Error("label lists are empty");
}

double agreement(const std::vector<int>& a, const std::vector<int>& b) {
  check_lengths(a, b);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double consistency(const std::vector<int>& y_naive, const std::vector<int>& y_ours) {
  return agreement(y_naive, y_ours);
}

double accuracy(const std::vector<int>& y_pred, const std::vector<int>& y_true) {
  return agreement(y_pred, y_true);
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::inconclusive: return "INCONCLUSIVE";
  }
  return "?";
}

double backdoor_success_rate(const NetModel& model, const BackdoorSpec& spec,
                             const Dataset& clean_test) {
  std::vector<Eigen::VectorXd> triggered;
  for (const auto& p : clean_test.points()) {
    if (p.label != spec.target_label) triggered.push_back(apply_trigger(p.features, spec));
  }
  if (triggered.empty()) throw Error("no test points outside the backdoor target class");
  Eigen::MatrixXd x(static_cast<Index>(clean_test.feature_dim()),
                    static_cast<Index>(triggered.size()));
  for (std::size_t i = 0; i < triggered.size(); ++i) x.col(static_cast<Index>(i)) = triggered[i];
  const auto pred = predict_all(model, x);
  std::size_t hits = 0;
  for (int y : pred) hits += y == spec.target_label;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

BackdoorVerification backdoor_verify(const NetModel& original, const NetModel& unlearned,
                                     const NetModel& naive, const BackdoorSpec& spec,
                                     const Dataset& clean_test, double margin) {
  spec.validate(clean_test);
  BackdoorVerification v;
  for (const auto& p : clean_test.points()) v.eligible += p.label != spec.target_label;
  v.succ_original = backdoor_success_rate(original, spec, clean_test);
  v.succ_unlearned = backdoor_success_rate(unlearned, spec, clean_test);
  v.succ_naive = backdoor_success_rate(naive, spec, clean_test);

  const Eigen::MatrixXd x = clean_test.feature_matrix();
  const auto truth = clean_test.labels();
  v.acc_original = accuracy(predict_all(original, x), truth);
  v.acc_unlearned = accuracy(predict_all(unlearned, x), truth);
  v.acc_naive = accuracy(predict_all(naive, x), truth);

  if (v.succ_original - v.succ_naive < margin) {
    v.verdict = Verdict::inconclusive;
  } else {
    const bool closer_to_naive =
        std::abs(v.succ_unlearned - v.succ_naive) < std::abs(v.succ_unlearned - v.succ_original);
    v.verdict = closer_to_naive ? Verdict::pass : Verdict::fail;
  }
  return v;
}

void write_verification(const BackdoorVerification& v, std::ostream& out) {
  out << "verdict = " << to_string(v.verdict) << '\n';
  out << "succ_original = " << fmt(v.succ_original) << '\n';
  out << "succ_unlearned = " << fmt(v.succ_unlearned) << '\n';
  out << "succ_naive = " << fmt(v.succ_naive) << '\n';
  out << "acc_original = " << fmt(v.acc_original) << '\n';
  out << "acc_unlearned = " << fmt(v.acc_unlearned) << '\n';
  out << "acc_naive = " << fmt(v.acc_naive) << '\n';
  out << "eligible_test_points = " << v.eligible << '\n';
}

void write_predictions_csv(const Dataset& test, const std::vector<int>& y_naive,
                           const std::vector<int>& y_ours, std::ostream& out) {
  if (y_naive.size() != test.size() || y_ours.size() != test.size()) {
    throw Error("prediction lists do not match the test set");
  }
  out << "id,label,naive,unlearned\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& p = test.points()[i];
    out << p.id << ',' << p.label << ',' << y_naive[i] << ',' << y_ours[i] << '\n';
  }
}

}  // namespace oblivion
