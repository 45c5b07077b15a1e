#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "natpn/tensor.hpp"

namespace natpn {

/// Root mean square error in the caller's units (de-standardize first).
double rmse(const std::vector<double>& preds, const std::vector<double>& targets);

double accuracy(const std::vector<double>& pred_classes, const std::vector<double>& labels);

/// Mean over samples of the L2 distance between the probability row and
/// the one-hot label, divided by the class count, scaled by 100.
double brier(const Tensor& probs, const std::vector<int>& labels);

/// Squared-norm variant under the same scaling, for comparison.
double brier_squared(const Tensor& probs, const std::vector<int>& labels);

/// cdf_values[i] = F_i(y_i*). For each p in {0.1..0.9}, p_pred is the
/// fraction of values in [0, p/2] u [1 - p/2, 1]; the score is
/// sqrt(sum (p - p_pred)^2) * 100. Lower is better-calibrated.
double regression_calibration(const std::vector<double>& cdf_values);

/// Binary detection quality with ID as the positive class; higher scores
/// must mean "more in-distribution". Returns values in [0, 100].
double auc_pr(const std::vector<double>& scores_id, const std::vector<double>& scores_ood);
double auc_roc(const std::vector<double>& scores_id, const std::vector<double>& scores_ood);

/// ratio_l = mean(shifted evidence at level l) / mean(clean evidence).
std::vector<double> confidence_ratio(const std::vector<double>& clean_evidence,
                                     const std::vector<std::vector<double>>& shifted_evidence);

struct OodScores {
  double alea_aucpr = 0.0, epist_aucpr = 0.0;
  double alea_aucroc = 0.0, epist_aucroc = 0.0;
};

struct EvalReport {
  std::string dataset, checkpoint, family;
  uint64_t seed = 0;
  // task metrics; unused entries stay NaN and are skipped on output
  double rmse_value = std::nan("");
  double accuracy_value = std::nan("");
  double brier_value = std::nan("");
  double calibration_value = std::nan("");
  std::map<std::string, OodScores> ood;
  std::vector<double> confidence_ratios;

  std::string to_json() const;
  /// Flat CSV: header() names the columns emitted by csv_row().
  std::string csv_header() const;
  std::string csv_row() const;
};

}  // namespace natpn
