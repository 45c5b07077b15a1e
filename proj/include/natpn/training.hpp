#pragma once

#include <string>
#include <vector>

#include "natpn/data.hpp"
#include "natpn/model.hpp"
#include "natpn/optim.hpp"

namespace natpn {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 512;
  int max_epochs = 500;
  int patience = 50;
  int warmup_steps = 200;    // flow-only epochs before joint training
  int finetune_steps = 200;  // flow-only epochs after joint training
  uint64_t seed = 0;
  bool allow_lr_outside_grid = false;  // lr is normally kept in [5e-4, 1e-2]

  void validate() const;
};

struct RunRecord {
  std::vector<double> warmup_trace;    // mean flow log-likelihood per step
  std::vector<double> train_loss;      // per joint epoch
  std::vector<double> val_loss;        // per joint epoch
  std::vector<double> finetune_trace;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double wall_time_sec = 0.0;
  uint64_t seed = 0;
};

/// Build the loss-target tensor for a target column: one-hot [N, C] for
/// Categorical, the column itself otherwise.
Tensor loss_targets(const Tensor& y, const Family& fam);

/// Mean Bayesian loss of the model over (X, y), evaluated without autodiff
/// bookkeeping kept alive.
double evaluate_loss(const NatPnModel& model, const Tensor& X, const Tensor& y);

/// Three phases: flow warm-up (skipped when warmup_steps = 0), joint
/// minimization with early stopping on validation loss, flow fine-tune
/// (skipped when finetune_steps = 0). The model ends at the best
/// validation checkpoint (plus fine-tuning). Throws training_error on
/// divergence after restoring the last finite parameters.
RunRecord fit(NatPnModel& model, const Dataset& data, const TrainConfig& cfg);

struct GridCell {
  int latent_dim = 8;
  std::string flow_spec = "radial-8";
  double entropy_weight = 1e-5;
  double lr = 1e-3;
};

struct GridRow {
  GridCell cell;
  double val_loss = 0.0;
  double test_metric = 0.0;  // rmse (regression/count) or accuracy
  double wall_time_sec = 0.0;
  uint64_t seed = 0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  GridRow best;
  std::vector<GridRow> rows;  // one per cell, cell order
};

/// Trains every cell (thread-parallel with `workers` threads), selects by
/// validation loss, and writes a CSV leaderboard to csv_path (empty path
/// skips the file). Failed cells are logged and never selected.
GridResult grid_search(const std::vector<GridCell>& cells, const Dataset& data,
                       const NatPnConfig& base_config, const TrainConfig& base_train,
                       const std::string& csv_path, int workers);

/// Family implied by a dataset task; ties classification to Categorical,
/// regression to Normal, counts to Poisson.
Family family_for(const Dataset& data);

}  // namespace natpn
