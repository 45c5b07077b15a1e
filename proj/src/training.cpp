#include "natpn/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "natpn/metrics.hpp"

namespace natpn {

void TrainConfig::validate() const {
  if (patience < 1) throw config_error("train config: patience >= 1 required");
  if (batch_size < 1) throw config_error("train config: batch_size >= 1 required");
  if (max_epochs < 0 || warmup_steps < 0 || finetune_steps < 0)
    throw config_error("train config: negative step count");
  if (!allow_lr_outside_grid && !(lr >= 5e-4 && lr <= 1e-2))
    throw config_error("train config: lr outside [5e-4, 1e-2] (set the override to allow)");
  if (lr <= 0) throw config_error("train config: lr must be positive");
}

Family family_for(const Dataset& data) {
  switch (data.task) {
    case TaskKind::Classification: return make_categorical(data.num_classes);
    case TaskKind::Regression: return make_normal();
    case TaskKind::Count: return make_poisson();
  }
  throw config_error("family_for: bad task");
}

Tensor loss_targets(const Tensor& y, const Family& fam) {
  if (fam.kind != FamilyKind::Categorical) return y.clone();
  Tensor t = Tensor::zeros({y.rows(), fam.num_classes});
  for (int64_t i = 0; i < y.rows(); ++i) {
    auto c = static_cast<int64_t>(std::llround(y.at(i, 0)));
    if (c < 0 || c >= fam.num_classes) throw config_error("loss_targets: label outside class range");
    t.at(i, c) = 1.0;
  }
  return t;
}

double evaluate_loss(const NatPnModel& model, const Tensor& X, const Tensor& y) {
  ad::Tape tape;
  BoundParams bound = bind_params(const_cast<ParamStore&>(model.params()), tape);
  ForwardNodes f = model.forward_nodes(tape, bound, X);
  Tensor targets = loss_targets(y, model.config().family);
  ad::Node loss = bayesian_loss(f, targets, model.config().entropy_weight, model.config().family);
  return tape.value(loss).item();
}

namespace {

Tensor take_rows(const Tensor& X, const std::vector<int64_t>& idx, int64_t lo, int64_t hi) {
  Tensor out({hi - lo, X.cols()});
  for (int64_t i = lo; i < hi; ++i)
    for (int64_t c = 0; c < X.cols(); ++c) out.at(i - lo, c) = X.at(idx[static_cast<size_t>(i)], c);
  return out;
}

std::vector<Tensor> snapshot(const ParamStore& store) {
  std::vector<Tensor> vals;
  vals.reserve(static_cast<size_t>(store.size()));
  for (const auto& e : store.entries) vals.push_back(e.value.clone());
  return vals;
}

void restore(ParamStore& store, const std::vector<Tensor>& vals) {
  for (int i = 0; i < store.size(); ++i) store[i].value = vals[static_cast<size_t>(i)].clone();
}

}  // namespace

RunRecord fit(NatPnModel& model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.X_train.rows() == 0 || data.X_val.rows() == 0)
    throw config_error("fit: empty train or validation split");
  if (data.dim() != model.config().input_dim)
    throw config_error("fit: dataset width does not match model input_dim");

  auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.seed = cfg.seed;
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  // Phase 1: flow-only warm-up on frozen-encoder latents.
  if (cfg.warmup_steps > 0) {
    Tensor latents = model.forward(data.X_train).latent;
    rec.warmup_trace =
        warmup_fit(model.flow(), model.params(), latents, cfg.warmup_steps, cfg.lr);
  }

  // Phase 2: joint training with early stopping on validation loss.
  const Tensor targets_train = loss_targets(data.y_train, model.config().family);
  Adam adam;
  adam.lr = cfg.lr;
  std::vector<int> trainable = model.all_params();
  std::vector<Tensor> best = snapshot(model.params());
  rec.best_val_loss = evaluate_loss(model, data.X_val, data.y_val);
  rec.best_epoch = -1;

  int64_t n = data.X_train.rows();
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<int64_t> perm = rng.permutation(n);
    double epoch_loss = 0.0;
    int64_t seen = 0;
    for (int64_t lo = 0; lo < n; lo += cfg.batch_size) {
      int64_t hi = std::min(n, lo + cfg.batch_size);
      Tensor xb = take_rows(data.X_train, perm, lo, hi);
      Tensor yb({hi - lo, targets_train.cols()});
      for (int64_t i = lo; i < hi; ++i)
        for (int64_t c = 0; c < targets_train.cols(); ++c)
          yb.at(i - lo, c) = targets_train.at(perm[static_cast<size_t>(i)], c);

      ad::Tape tape;
      BoundParams bound = bind_params(model.params(), tape);
      ForwardNodes f = model.forward_nodes(tape, bound, xb);
      ad::Node loss =
          bayesian_loss(f, yb, model.config().entropy_weight, model.config().family);
      double loss_v = tape.value(loss).item();
      if (!std::isfinite(loss_v)) {
        restore(model.params(), best);
        throw training_error("fit: joint loss diverged at epoch " + std::to_string(epoch) +
                             "; best checkpoint restored");
      }
      tape.backward(loss);
      adam.t += 1;
      try {
        for (int idx : trainable) adam.step_entry(model.params()[idx], tape.grad(bound[idx]));
      } catch (const training_error&) {
        restore(model.params(), best);
        throw;
      }
      epoch_loss += loss_v * static_cast<double>(hi - lo);
      seen += hi - lo;
    }
    rec.train_loss.push_back(epoch_loss / static_cast<double>(seen));

    double val = evaluate_loss(model, data.X_val, data.y_val);
    if (!std::isfinite(val)) {
      restore(model.params(), best);
      throw training_error("fit: validation loss diverged at epoch " + std::to_string(epoch) +
                           "; best checkpoint restored");
    }
    rec.val_loss.push_back(val);
    if (val < rec.best_val_loss) {
      rec.best_val_loss = val;
      rec.best_epoch = epoch;
      best = snapshot(model.params());
    }
    if (epoch - rec.best_epoch >= cfg.patience) break;
  }
  restore(model.params(), best);

  // Phase 3: flow-only fine-tune on the best checkpoint's latents.
  if (cfg.finetune_steps > 0) {
    Tensor latents = model.forward(data.X_train).latent;
    rec.finetune_trace =
        warmup_fit(model.flow(), model.params(), latents, cfg.finetune_steps, cfg.lr);
  }

  rec.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

GridResult grid_search(const std::vector<GridCell>& cells, const Dataset& data,
                       const NatPnConfig& base_config, const TrainConfig& base_train,
                       const std::string& csv_path, int workers) {
  if (cells.empty()) throw config_error("grid_search: empty search space");
  if (workers < 1) workers = 1;

  std::vector<GridRow> rows(cells.size());
  std::mutex mu;
  size_t next = 0;

  auto worker = [&]() {
    for (;;) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= cells.size()) return;
        i = next++;
      }
      GridRow row;
      row.cell = cells[i];
      row.seed = base_train.seed;
      try {
        NatPnConfig mc = base_config;
        mc.latent_dim = cells[i].latent_dim;
        mc.flow_spec = cells[i].flow_spec;
        mc.entropy_weight = cells[i].entropy_weight;
        TrainConfig tc = base_train;
        tc.lr = cells[i].lr;

        NatPnModel model(mc, tc.seed);
        RunRecord rec = fit(model, data, tc);
        row.val_loss = rec.best_val_loss;
        row.wall_time_sec = rec.wall_time_sec;

        PosteriorPrediction pred = model.forward(data.X_test);
        std::vector<double> points = model.point_predictions(pred);
        std::vector<double> truth;
        for (int64_t r = 0; r < data.y_test.rows(); ++r) truth.push_back(data.y_test.at(r, 0));
        if (data.task == TaskKind::Classification) {
          row.test_metric = accuracy(points, truth);
        } else {
          for (auto& v : points) v = data.destandardize_target(v);
          for (auto& v : truth) v = data.destandardize_target(v);
          row.test_metric = rmse(points, truth);
        }
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      {
        std::lock_guard<std::mutex> lock(mu);
        rows[i] = std::move(row);
      }
    }
  };

  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(cells.size())); ++w)
    pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  GridResult result;
  result.rows = rows;
  bool found = false;
  for (const auto& r : rows) {
    if (r.failed) continue;
    if (!found || r.val_loss < result.best.val_loss) {
      result.best = r;
      found = true;
    }
  }
  if (!found) throw training_error("grid_search: every cell failed");

  if (!csv_path.empty()) {
    std::ofstream os(csv_path, std::ios::trunc);
    if (!os) throw config_error("grid_search: cannot write leaderboard: " + csv_path);
    os << "latent_dim,flow_spec,entropy_weight,lr,val_loss,test_metric,wall_time_sec,seed,status,"
          "error\n";
    os.precision(10);
    for (const auto& r : rows) {
      os << r.cell.latent_dim << "," << r.cell.flow_spec << "," << r.cell.entropy_weight << ","
         << r.cell.lr << ",";
      if (r.failed)
        os << ",";
      else
        os << r.val_loss << "," << r.test_metric;
      os << "," << r.wall_time_sec << "," << r.seed << "," << (r.failed ? "failed" : "ok") << ",";
      std::string msg = r.error;
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      os << msg << "\n";
    }
  }
  return result;
}

}  // namespace natpn
