#include "natpn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "natpn/autodiff.hpp"  // contract_error

#include <json.hpp>

namespace natpn {

double rmse(const std::vector<double>& preds, const std::vector<double>& targets) {
  if (preds.size() != targets.size()) throw contract_error("rmse: length mismatch");
  if (preds.empty()) throw contract_error("rmse: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double d = preds[i] - targets[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(preds.size()));
}

double accuracy(const std::vector<double>& pred_classes, const std::vector<double>& labels) {
  if (pred_classes.size() != labels.size()) throw contract_error("accuracy: length mismatch");
  if (pred_classes.empty()) throw contract_error("accuracy: empty input");
  int64_t hits = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (std::llround(pred_classes[i]) == std::llround(labels[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace {

double brier_impl(const Tensor& probs, const std::vector<int>& labels, bool squared) {
  int64_t n = probs.rows(), C = probs.cols();
  if (n == 0 || C < 2) throw contract_error("brier: need a non-empty [N, C>=2] matrix");
  if (static_cast<int64_t>(labels.size()) != n) throw contract_error("brier: label count mismatch");
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double p = probs.at(i, c);
      if (p < -1e-6 || p > 1.0 + 1e-6) throw contract_error("brier: probability outside [0,1]");
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-6) throw contract_error("brier: row does not sum to 1");
    int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= C) throw contract_error("brier: label outside class range");
    double sq = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      double d = probs.at(i, c) - (c == y ? 1.0 : 0.0);
      sq += d * d;
    }
    total += squared ? sq : std::sqrt(sq);
  }
  return total / static_cast<double>(n) / static_cast<double>(C) * 100.0;
}

}  // namespace

double brier(const Tensor& probs, const std::vector<int>& labels) {
  return brier_impl(probs, labels, false);
}

double brier_squared(const Tensor& probs, const std::vector<int>& labels) {
  return brier_impl(probs, labels, true);
}

double regression_calibration(const std::vector<double>& cdf_values) {
  if (cdf_values.empty()) throw contract_error("regression_calibration: empty input");
  for (double f : cdf_values)
    if (!(f >= 0.0 && f <= 1.0)) throw contract_error("regression_calibration: cdf outside [0,1]");
  double acc = 0.0;
  for (int k = 1; k <= 9; ++k) {
    double p = 0.1 * k;
    int64_t inside = 0;
    for (double f : cdf_values)
      if (f <= p / 2.0 || f >= 1.0 - p / 2.0) ++inside;
    double p_pred = static_cast<double>(inside) / static_cast<double>(cdf_values.size());
    acc += (p - p_pred) * (p - p_pred);
  }
  return std::sqrt(acc) * 100.0;
}

namespace {

/// (score, is_id) pairs sorted by descending score.
std::vector<std::pair<double, int>> pool(const std::vector<double>& id,
                                         const std::vector<double>& ood) {
  if (id.empty() || ood.empty()) throw contract_error("auc: empty score list");
  std::vector<std::pair<double, int>> v;
  v.reserve(id.size() + ood.size());
  for (double s : id) {
    if (std::isnan(s)) throw contract_error("auc: NaN score");
    v.emplace_back(s, 1);
  }
  for (double s : ood) {
    if (std::isnan(s)) throw contract_error("auc: NaN score");
    v.emplace_back(s, 0);
  }
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  return v;
}

}  // namespace

double auc_pr(const std::vector<double>& scores_id, const std::vector<double>& scores_ood) {
  auto v = pool(scores_id, scores_ood);
  auto n_pos = static_cast<double>(scores_id.size());
  // Step integral over distinct thresholds: sum (R_k - R_{k-1}) * P_k,
  // grouping ties so a threshold always includes a whole tie block.
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  size_t i = 0;
  while (i < v.size()) {
    size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      tp += v[j].second;
      fp += 1 - v[j].second;
      ++j;
    }
    double recall = tp / n_pos;
    double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area * 100.0;
}

double auc_roc(const std::vector<double>& scores_id, const std::vector<double>& scores_ood) {
  auto v = pool(scores_id, scores_ood);
  // Mann-Whitney statistic with midranks for ties (v is descending, so
  // ranks are assigned from the back).
  double n1 = static_cast<double>(scores_id.size());
  double n0 = static_cast<double>(scores_ood.size());
  double rank_sum_id = 0.0;
  size_t n = v.size();
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    int ties_id = 0;
    while (j < n && v[j].first == v[i].first) {
      ties_id += v[j].second;
      ++j;
    }
    // positions i..j-1 in descending order -> ranks (n - j + 1)..(n - i)
    double mid_rank = (static_cast<double>(n - j + 1) + static_cast<double>(n - i)) / 2.0;
    rank_sum_id += mid_rank * ties_id;
    i = j;
  }
  double u = rank_sum_id - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * n0) * 100.0;
}

std::vector<double> confidence_ratio(const std::vector<double>& clean_evidence,
                                     const std::vector<std::vector<double>>& shifted_evidence) {
  if (clean_evidence.empty()) throw contract_error("confidence_ratio: empty clean set");
  double clean_mean = 0.0;
  for (double v : clean_evidence) clean_mean += v;
  clean_mean /= static_cast<double>(clean_evidence.size());
  std::vector<double> out;
  for (const auto& level : shifted_evidence) {
    if (level.empty()) throw contract_error("confidence_ratio: empty shifted set");
    double m = 0.0;
    for (double v : level) m += v;
    m /= static_cast<double>(level.size());
    out.push_back(m / clean_mean);
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["checkpoint"] = checkpoint;
  j["family"] = family;
  j["seed"] = seed;
  if (!std::isnan(rmse_value)) j["rmse"] = rmse_value;
  if (!std::isnan(accuracy_value)) j["accuracy"] = accuracy_value;
  if (!std::isnan(brier_value)) j["brier"] = brier_value;
  if (!std::isnan(calibration_value)) j["calibration"] = calibration_value;
  if (!ood.empty()) {
    nlohmann::json jo;
    for (const auto& [name, s] : ood) {
      jo[name] = {{"alea_aucpr", s.alea_aucpr},
                  {"epist_aucpr", s.epist_aucpr},
                  {"alea_aucroc", s.alea_aucroc},
                  {"epist_aucroc", s.epist_aucroc}};
    }
    j["ood"] = jo;
  }
  if (!confidence_ratios.empty()) j["confidence_ratios"] = confidence_ratios;
  return j.dump(2);
}

std::string EvalReport::csv_header() const {
  std::ostringstream os;
  os << "dataset,checkpoint,family,seed,rmse,accuracy,brier,calibration";
  for (const auto& [name, s] : ood)
    os << "," << name << "_alea_aucpr," << name << "_epist_aucpr," << name << "_alea_aucroc,"
       << name << "_epist_aucroc";
  return os.str();
}

std::string EvalReport::csv_row() const {
  std::ostringstream os;
  os.precision(10);
  auto cell = [&](double v) {
    os << ",";
    if (!std::isnan(v)) os << v;
  };
  os << dataset << "," << checkpoint << "," << family << "," << seed;
  cell(rmse_value);
  cell(accuracy_value);
  cell(brier_value);
  cell(calibration_value);
  for (const auto& [name, s] : ood) {
    (void)name;
    cell(s.alea_aucpr);
    cell(s.epist_aucpr);
    cell(s.alea_aucroc);
    cell(s.epist_aucroc);
  }
  return os.str();
}

}  // namespace natpn
