#pragma once

#include <memory>
#include <string>
#include <vector>

#include "natpn/autodiff.hpp"
#include "natpn/expfam.hpp"
#include "natpn/flows.hpp"
#include "natpn/params.hpp"
#include "natpn/rng.hpp"
#include "natpn/tensor.hpp"

namespace natpn {

/// Config / manifest validation failure.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BudgetMode { Unit, DataCount, DimensionScaled };

const char* budget_mode_name(BudgetMode m);
BudgetMode budget_mode_from_name(const std::string& name);

/// log N_H: Unit -> 0; DataCount -> log N; DimensionScaled ->
/// (H log 2pi + log(H+1)) / 2.
double certainty_budget(int latent_dim, BudgetMode mode, int64_t train_size = 0);

struct NatPnConfig {
  Family family;
  int input_dim = 0;
  int latent_dim = 8;
  std::vector<int> encoder_hidden = {16, 16};
  std::string flow_spec = "radial-8";
  ConjugateParams prior;  // empty chi -> default_prior(family)
  double entropy_weight = 1e-5;
  BudgetMode budget_mode = BudgetMode::DimensionScaled;
  int64_t train_size = 0;  // required for DataCount

  void validate() const;
};

/// Batched model outputs; each field has one row per input.
struct PosteriorPrediction {
  Tensor latent;          // [N, H]
  Tensor latent_logprob;  // [N, 1]
  Tensor chi_update;      // [N, L]
  Tensor n_update;        // [N, 1]
  Tensor chi_post;        // [N, L]
  Tensor n_post;          // [N, 1]

  int64_t size() const { return n_post.rows(); }
  ConjugateParams row(int64_t i) const;
};

/// Differentiable counterpart of PosteriorPrediction.
struct ForwardNodes {
  ad::Node latent;
  ad::Node latent_logprob;
  ad::Node chi_update;
  ad::Node n_update;
  ad::Node chi_post;
  ad::Node n_post;
};

struct Uncertainty {
  double aleatoric = 0.0;   // target-distribution entropy at the posterior mean
  double epistemic = 0.0;   // evidence n_post
  double predictive = 0.0;  // conjugate-posterior entropy
};

class NatPnModel {
 public:
  NatPnModel(NatPnConfig config, uint64_t seed);

  const NatPnConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  FlowDensity& flow() { return *flow_; }

  /// Store indices by module, for phase freezing and loss gradients.
  const std::vector<int>& encoder_params() const { return enc_params_; }
  const std::vector<int>& decoder_params() const { return dec_params_; }
  const std::vector<int>& flow_params() const { return flow_->param_indices(); }
  std::vector<int> all_params() const;

  /// Differentiable forward pass on a bound tape.
  ForwardNodes forward_nodes(ad::Tape& tape, const BoundParams& bound, const Tensor& x) const;

  /// Value-only forward pass (thread-safe on a frozen model).
  PosteriorPrediction forward(const Tensor& x) const;

  Uncertainty uncertainties(const PosteriorPrediction& pred, int64_t row) const;

  /// Point prediction per row: argmax class probability for Categorical,
  /// posterior-predictive mean otherwise. De-standardization is the
  /// caller's business.
  std::vector<double> point_predictions(const PosteriorPrediction& pred) const;

  /// Number of times the evidence hit the 1e12 clamp, cumulative.
  int64_t evidence_clamp_count() const { return clamp_count_; }

  void save(const std::string& path) const;
  static NatPnModel load(const std::string& path);

 private:
  NatPnModel() = default;
  void build(uint64_t seed);

  NatPnConfig config_;
  ParamStore store_;
  std::unique_ptr<FlowDensity> flow_;
  std::vector<int> enc_params_;  // alternating weight, bias
  std::vector<int> dec_params_;
  mutable int64_t clamp_count_ = 0;
};

/// Bayesian update pooling: chi = (n_prior chi_prior + sum n_k chi_k) /
/// (n_prior + sum n_k), applied row-wise across member predictions.
PosteriorPrediction ensemble_combine(const std::vector<PosteriorPrediction>& members,
                                     const ConjugateParams& prior, const Family& fam);

/// Mean over the batch of -E[log P(y|theta)] - lambda * H[posterior].
ad::Node bayesian_loss(const ForwardNodes& fwd, const Tensor& targets, double lambda,
                       const Family& fam);

}  // namespace natpn
