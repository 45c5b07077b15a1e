#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "natpn/tensor.hpp"

namespace natpn {

/// CSV / schema failure, with row/column locus where applicable.
class ingestion_error : public std::runtime_error {
 public:
  explicit ingestion_error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class TaskKind { Classification, Regression, Count };

const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

struct SplitSpec {
  double train = 0.70, val = 0.15, test = 0.15;
  uint64_t seed = 0;
};

struct CsvSchema {
  std::vector<std::string> feature_columns;  // empty -> all except target/drops
  std::string target_column;
  TaskKind task = TaskKind::Regression;
  std::vector<std::string> drop_columns;
};

/// A named out-of-distribution feature set, in the same standardized
/// coordinates as the dataset splits.
struct OodSet {
  std::string name;
  Tensor X;
};

struct Dataset {
  std::string name;
  TaskKind task = TaskKind::Regression;
  int num_classes = 0;  // classification only

  // Raw data retained so OOD constructions can re-derive splits/stats.
  Tensor X_raw;  // [N, D], original units
  std::vector<double> y_raw;
  std::vector<std::string> feature_names;
  std::vector<int64_t> train_idx, val_idx, test_idx;
  SplitSpec split;

  // Standardized splits. Regression targets are scaled with train stats;
  // classification and count targets are left as-is.
  Tensor X_train, X_val, X_test;  // [n, D]
  Tensor y_train, y_val, y_test;  // [n, 1]
  std::vector<double> feat_mean, feat_std;
  double target_mean = 0.0, target_std = 1.0;

  std::vector<OodSet> ood_sets;

  int64_t dim() const { return X_train.cols(); }
  /// Map a model-space prediction back to original target units.
  double destandardize_target(double v) const { return v * target_std + target_mean; }
};

/// Split + standardize a raw table. Exposed for generators and tests.
Dataset build_dataset(std::string name, TaskKind task, Tensor X_raw, std::vector<double> y,
                      std::vector<std::string> feature_names, const SplitSpec& split);

Dataset load_csv(const std::string& path, const CsvSchema& schema, const SplitSpec& split);

/// kind: two_moons | sine_regression.
Dataset make_toys(const std::string& kind, int64_t n, double noise, uint64_t seed);

struct OodSpec {
  std::string kind;  // left_out_category | left_out_attribute_value | oodom_scale | gaussian_noise
  std::string name;  // output set name; defaulted per kind when empty
  std::vector<double> values;  // held-out classes / attribute values
  std::string attribute;       // column for left_out_attribute_value
  double scale = 255.0;        // oodom_scale
  double sigma = 1.0;          // gaussian_noise
  int64_t n = 1024;            // gaussian_noise rows
  uint64_t seed = 1;           // gaussian_noise rng
};

/// Returns a dataset with the OOD set appended. Left-out kinds rebuild the
/// splits and statistics from the filtered raw table (one OOD set per
/// held-out value for attribute filtering); oodom_scale and gaussian_noise
/// leave the base unchanged.
Dataset make_ood(const Dataset& base, const OodSpec& spec);

}  // namespace natpn
