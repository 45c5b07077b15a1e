#include "natpn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "natpn/model.hpp"  // config_error
#include "natpn/rng.hpp"

namespace natpn {

const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::Classification: return "classification";
    case TaskKind::Regression: return "regression";
    case TaskKind::Count: return "count";
  }
  return "?";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "classification") return TaskKind::Classification;
  if (name == "regression") return TaskKind::Regression;
  if (name == "count") return TaskKind::Count;
  throw ingestion_error("unknown task kind: " + name);
}

namespace {

Tensor gather_rows(const Tensor& X, const std::vector<int64_t>& idx) {
  Tensor out({static_cast<int64_t>(idx.size()), X.cols()});
  for (size_t i = 0; i < idx.size(); ++i)
    for (int64_t c = 0; c < X.cols(); ++c) out.at(static_cast<int64_t>(i), c) = X.at(idx[i], c);
  return out;
}

Tensor gather_targets(const std::vector<double>& y, const std::vector<int64_t>& idx) {
  Tensor out({static_cast<int64_t>(idx.size()), 1});
  for (size_t i = 0; i < idx.size(); ++i) out.at(static_cast<int64_t>(i), 0) = y[static_cast<size_t>(idx[i])];
  return out;
}

void standardize_inplace(Tensor& X, const std::vector<double>& mean,
                         const std::vector<double>& std) {
  for (int64_t r = 0; r < X.rows(); ++r)
    for (int64_t c = 0; c < X.cols(); ++c)
      X.at(r, c) = (X.at(r, c) - mean[static_cast<size_t>(c)]) / std[static_cast<size_t>(c)];
}

}  // namespace

Dataset build_dataset(std::string name, TaskKind task, Tensor X_raw, std::vector<double> y,
                      std::vector<std::string> feature_names, const SplitSpec& split) {
  int64_t n = X_raw.rows();
  if (n < 3) throw ingestion_error("dataset '" + name + "': needs at least 3 rows, got " +
                                   std::to_string(n));
  if (static_cast<int64_t>(y.size()) != n)
    throw ingestion_error("dataset '" + name + "': feature/target row count mismatch");

  Dataset d;
  d.name = std::move(name);
  d.task = task;
  d.X_raw = std::move(X_raw);
  d.y_raw = std::move(y);
  d.feature_names = std::move(feature_names);
  d.split = split;

  Rng rng(split.seed);
  std::vector<int64_t> perm = rng.permutation(n);
  auto n_train = static_cast<int64_t>(std::floor(split.train * static_cast<double>(n)));
  auto n_val = static_cast<int64_t>(std::floor(split.val * static_cast<double>(n)));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= n)
    throw ingestion_error("dataset '" + d.name + "': split fractions leave an empty split");
  d.train_idx.assign(perm.begin(), perm.begin() + n_train);
  d.val_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  d.test_idx.assign(perm.begin() + n_train + n_val, perm.end());

  if (task == TaskKind::Classification) {
    int max_class = 0;
    for (size_t i = 0; i < d.y_raw.size(); ++i) {
      double v = d.y_raw[i];
      if (v < 0 || std::abs(v - std::round(v)) > 1e-9)
        throw ingestion_error("dataset '" + d.name + "': non-integer class label at row " +
                              std::to_string(i));
      max_class = std::max(max_class, static_cast<int>(std::round(v)));
    }
    d.num_classes = max_class + 1;
  }
  if (task == TaskKind::Count) {
    for (size_t i = 0; i < d.y_raw.size(); ++i)
      if (d.y_raw[i] < 0)
        throw ingestion_error("dataset '" + d.name + "': negative count target at row " +
                              std::to_string(i));
  }

  // Feature statistics come from the training split only.
  auto D = static_cast<size_t>(d.X_raw.cols());
  d.feat_mean.assign(D, 0.0);
  d.feat_std.assign(D, 0.0);
  for (int64_t r : d.train_idx)
    for (size_t c = 0; c < D; ++c) d.feat_mean[c] += d.X_raw.at(r, static_cast<int64_t>(c));
  for (size_t c = 0; c < D; ++c) d.feat_mean[c] /= static_cast<double>(n_train);
  for (int64_t r : d.train_idx)
    for (size_t c = 0; c < D; ++c) {
      double dv = d.X_raw.at(r, static_cast<int64_t>(c)) - d.feat_mean[c];
      d.feat_std[c] += dv * dv;
    }
  for (size_t c = 0; c < D; ++c) {
    d.feat_std[c] = std::sqrt(d.feat_std[c] / static_cast<double>(n_train));
    if (d.feat_std[c] < 1e-12) d.feat_std[c] = 1.0;  // constant column
  }

  d.X_train = gather_rows(d.X_raw, d.train_idx);
  d.X_val = gather_rows(d.X_raw, d.val_idx);
  d.X_test = gather_rows(d.X_raw, d.test_idx);
  standardize_inplace(d.X_train, d.feat_mean, d.feat_std);
  standardize_inplace(d.X_val, d.feat_mean, d.feat_std);
  standardize_inplace(d.X_test, d.feat_mean, d.feat_std);

  d.y_train = gather_targets(d.y_raw, d.train_idx);
  d.y_val = gather_targets(d.y_raw, d.val_idx);
  d.y_test = gather_targets(d.y_raw, d.test_idx);
  if (task == TaskKind::Regression) {
    double m = 0.0, s = 0.0;
    for (int64_t i = 0; i < d.y_train.rows(); ++i) m += d.y_train.at(i, 0);
    m /= static_cast<double>(n_train);
    for (int64_t i = 0; i < d.y_train.rows(); ++i) {
      double dv = d.y_train.at(i, 0) - m;
      s += dv * dv;
    }
    s = std::sqrt(s / static_cast<double>(n_train));
    if (s < 1e-12) s = 1.0;
    d.target_mean = m;
    d.target_std = s;
    for (Tensor* t : {&d.y_train, &d.y_val, &d.y_test})
      for (int64_t i = 0; i < t->rows(); ++i) t->at(i, 0) = (t->at(i, 0) - m) / s;
  }
  return d;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema, const SplitSpec& split) {
  std::ifstream is(path);
  if (!is) throw ingestion_error("cannot open CSV file: " + path);

  std::string line;
  if (!std::getline(is, line)) throw ingestion_error(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  auto col_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ingestion_error(path + ": missing column '" + name + "'");
    return static_cast<size_t>(it - header.begin());
  };

  size_t target_col = col_index(schema.target_column);
  std::vector<size_t> feat_cols;
  std::vector<std::string> feat_names;
  if (schema.feature_columns.empty()) {
    for (size_t c = 0; c < header.size(); ++c) {
      if (c == target_col) continue;
      if (std::find(schema.drop_columns.begin(), schema.drop_columns.end(), header[c]) !=
          schema.drop_columns.end())
        continue;
      feat_cols.push_back(c);
      feat_names.push_back(header[c]);
    }
  } else {
    for (const auto& name : schema.feature_columns) {
      feat_cols.push_back(col_index(name));
      feat_names.push_back(name);
    }
  }
  if (feat_cols.empty()) throw ingestion_error(path + ": schema selects no feature columns");

  std::vector<double> flat, targets;
  size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < header.size())
      throw ingestion_error(path + ": row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));
    auto parse = [&](size_t c) {
      const std::string& s = cells[c];
      size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(s, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != s.size() || s.empty())
        throw ingestion_error(path + ": row " + std::to_string(row) + ", column '" + header[c] +
                              "': non-numeric cell '" + s + "'");
      return v;
    };
    for (size_t c : feat_cols) flat.push_back(parse(c));
    targets.push_back(parse(target_col));
  }
  if (targets.empty()) throw ingestion_error(path + ": no data rows after the header");

  Tensor X({static_cast<int64_t>(targets.size()), static_cast<int64_t>(feat_cols.size())},
           std::move(flat));
  std::string name = path;
  if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
  return build_dataset(name, schema.task, std::move(X), std::move(targets), std::move(feat_names),
                       split);
}

Dataset make_toys(const std::string& kind, int64_t n, double noise, uint64_t seed) {
  if (n < 10) throw ingestion_error("make_toys: n >= 10 required");
  Rng rng(seed);
  SplitSpec split;
  split.seed = seed + 1;

  if (kind == "two_moons") {
    Tensor X({n, 2});
    std::vector<double> y(static_cast<size_t>(n));
    int64_t n_outer = n / 2;
    for (int64_t i = 0; i < n; ++i) {
      bool outer = i < n_outer;
      double t = M_PI * rng.uniform();
      double px = outer ? std::cos(t) : 1.0 - std::cos(t);
      double py = outer ? std::sin(t) : 0.5 - std::sin(t);
      X.at(i, 0) = px + noise * rng.normal();
      X.at(i, 1) = py + noise * rng.normal();
      y[static_cast<size_t>(i)] = outer ? 0.0 : 1.0;
    }
    return build_dataset("two_moons", TaskKind::Classification, std::move(X), std::move(y),
                         {"x0", "x1"}, split);
  }
  if (kind == "sine_regression") {
    // Two disjoint intervals with a gap in between; the gap carries no
    // training data so epistemic uncertainty must rise there.
    Tensor X({n, 1});
    std::vector<double> y(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      double u = rng.uniform();
      double x = u < 0.5 ? -3.0 + 2.0 * (u * 2.0) : 1.0 + 2.0 * ((u - 0.5) * 2.0);
      X.at(i, 0) = x;
      y[static_cast<size_t>(i)] = std::sin(3.0 * x) * x + noise * rng.normal();
    }
    return build_dataset("sine_regression", TaskKind::Regression, std::move(X), std::move(y),
                         {"x"}, split);
  }
  throw ingestion_error("make_toys: unknown kind '" + kind + "'");
}

Dataset make_ood(const Dataset& base, const OodSpec& spec) {
  if (spec.kind == "oodom_scale") {
    Dataset d = base;
    OodSet set;
    set.name = spec.name.empty() ? "oodom_x" + std::to_string(spec.scale) : spec.name;
    set.X = base.X_test.clone();
    for (int64_t i = 0; i < set.X.size(); ++i) set.X.at(i) *= spec.scale;
    d.ood_sets.push_back(std::move(set));
    return d;
  }
  if (spec.kind == "gaussian_noise") {
    Dataset d = base;
    Rng rng(spec.seed);
    OodSet set;
    set.name = spec.name.empty() ? "gaussian_noise" : spec.name;
    set.X = Tensor({spec.n, base.dim()});
    for (int64_t i = 0; i < set.X.size(); ++i) set.X.at(i) = spec.sigma * rng.normal();
    d.ood_sets.push_back(std::move(set));
    return d;
  }
  if (spec.kind == "left_out_category") {
    if (base.task != TaskKind::Classification)
      throw config_error("left_out_category requires a classification dataset");
    auto held = [&](double y) {
      for (double v : spec.values)
        if (std::abs(y - v) < 1e-9) return true;
      return false;
    };
    std::vector<int64_t> keep_rows, ood_rows;
    for (int64_t i = 0; i < base.X_raw.rows(); ++i)
      (held(base.y_raw[static_cast<size_t>(i)]) ? ood_rows : keep_rows).push_back(i);
    if (keep_rows.size() < 3) throw config_error("left_out_category: held-out set empties the data");
    if (ood_rows.empty()) throw config_error("left_out_category: no rows match the held-out classes");

    // Compact the remaining labels so classes stay contiguous.
    std::vector<double> kept_labels;
    for (int64_t i : keep_rows) kept_labels.push_back(base.y_raw[static_cast<size_t>(i)]);
    std::vector<double> uniq = kept_labels;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<double> y;
    for (double v : kept_labels)
      y.push_back(static_cast<double>(std::lower_bound(uniq.begin(), uniq.end(), v) - uniq.begin()));

    Dataset d = build_dataset(base.name + "_loc", base.task, gather_rows(base.X_raw, keep_rows),
                              std::move(y), base.feature_names, base.split);
    OodSet set;
    set.name = spec.name.empty() ? "left_out_category" : spec.name;
    set.X = gather_rows(base.X_raw, ood_rows);
    standardize_inplace(set.X, d.feat_mean, d.feat_std);
    d.ood_sets.push_back(std::move(set));
    return d;
  }
  if (spec.kind == "left_out_attribute_value") {
    auto it = std::find(base.feature_names.begin(), base.feature_names.end(), spec.attribute);
    if (it == base.feature_names.end())
      throw config_error("left_out_attribute_value: no such attribute '" + spec.attribute + "'");
    auto col = static_cast<int64_t>(it - base.feature_names.begin());

    auto held = [&](double v) {
      for (double h : spec.values)
        if (std::abs(v - h) < 1e-9) return true;
      return false;
    };
    std::vector<int64_t> keep_rows;
    std::vector<std::pair<double, std::vector<int64_t>>> ood_groups;  // one set per value
    for (double v : spec.values) ood_groups.emplace_back(v, std::vector<int64_t>{});
    for (int64_t i = 0; i < base.X_raw.rows(); ++i) {
      double v = base.X_raw.at(i, col);
      if (!held(v)) {
        keep_rows.push_back(i);
        continue;
      }
      for (auto& g : ood_groups)
        if (std::abs(v - g.first) < 1e-9) {
          g.second.push_back(i);
          break;
        }
    }
    if (keep_rows.size() < 3)
      throw config_error("left_out_attribute_value: held-out set empties the data");

    // Drop the filter column from every split and every OOD set.
    std::vector<std::string> names;
    for (int64_t c = 0; c < base.X_raw.cols(); ++c)
      if (c != col) names.push_back(base.feature_names[static_cast<size_t>(c)]);
    auto drop_col = [&](const std::vector<int64_t>& rows) {
      Tensor out({static_cast<int64_t>(rows.size()), base.X_raw.cols() - 1});
      for (size_t i = 0; i < rows.size(); ++i) {
        int64_t k = 0;
        for (int64_t c = 0; c < base.X_raw.cols(); ++c)
          if (c != col) out.at(static_cast<int64_t>(i), k++) = base.X_raw.at(rows[i], c);
      }
      return out;
    };
    std::vector<double> y;
    for (int64_t i : keep_rows) y.push_back(base.y_raw[static_cast<size_t>(i)]);
    Dataset d = build_dataset(base.name + "_loa", base.task, drop_col(keep_rows), std::move(y),
                              names, base.split);
    for (auto& g : ood_groups) {
      if (g.second.empty()) continue;
      OodSet set;
      std::ostringstream label;
      label << spec.attribute << "=" << g.first;
      set.name = label.str();
      set.X = drop_col(g.second);
      standardize_inplace(set.X, d.feat_mean, d.feat_std);
      d.ood_sets.push_back(std::move(set));
    }
    return d;
  }
  throw config_error("make_ood: unknown kind '" + spec.kind + "'");
}

}  // namespace natpn
