#pragma once

#include <memory>
#include <string>
#include <vector>

#include "natpn/autodiff.hpp"
#include "natpn/params.hpp"
#include "natpn/rng.hpp"
#include "natpn/tensor.hpp"

namespace natpn {

/// Normalized density on the H-dimensional latent space over a standard
/// Normal base. log_prob is differentiable w.r.t. both the input batch
/// and the flow parameters.
class FlowDensity {
 public:
  virtual ~FlowDensity() = default;

  /// z: [N, H] batch. Returns per-row log densities [N, 1].
  virtual ad::Node log_prob(ad::Node z, const BoundParams& params) const = 0;

  virtual int latent_dim() const = 0;
  virtual const std::vector<int>& param_indices() const = 0;
  virtual std::string spec() const = 0;

  /// Convenience: evaluate log densities without keeping a graph.
  Tensor log_prob_values(const Tensor& z, ParamStore& store) const;
};

/// Stack of radial layers g(z) = z + beta * (z - z0) / (alpha + r).
/// Invertibility is kept by construction: alpha = softplus(alpha_raw),
/// beta = -alpha + softplus(beta_raw). Raw parameters at zero give the
/// identity layer.
class RadialFlow : public FlowDensity {
 public:
  RadialFlow(int latent_dim, int num_layers, ParamStore& store, Rng& rng,
             const std::string& name_prefix = "flow");

  ad::Node log_prob(ad::Node z, const BoundParams& params) const override;
  int latent_dim() const override { return dim_; }
  const std::vector<int>& param_indices() const override { return params_; }
  std::string spec() const override { return "radial-" + std::to_string(layers_); }

 private:
  int dim_, layers_;
  std::vector<int> params_;  // per layer: z0, alpha_raw, beta_raw
};

/// Masked autoregressive flow. Density evaluation is the fast direction
/// (data -> base in one pass); sampling is not implemented. Each layer
/// is a MADE with two hidden layers of width 2H, emitting per-dimension
/// shift and log-scale; log-scales are smoothly bounded to (-7, 7).
/// Column order is reversed between consecutive layers.
class MafFlow : public FlowDensity {
 public:
  MafFlow(int latent_dim, int num_layers, ParamStore& store, Rng& rng,
          const std::string& name_prefix = "flow");

  ad::Node log_prob(ad::Node z, const BoundParams& params) const override;
  int latent_dim() const override { return dim_; }
  const std::vector<int>& param_indices() const override { return params_; }
  std::string spec() const override { return "maf-" + std::to_string(layers_); }

  /// MADE masks for one layer given input order; exposed for the
  /// Jacobian sparsity tests. Returns {M1 [H,Hh], M2 [Hh,Hh], Mout [Hh,H]}.
  static std::vector<Tensor> build_made_masks(int latent_dim, int hidden,
                                              const std::vector<int>& order);

 private:
  struct Layer {
    bool reversed = false;
    std::vector<Tensor> masks;
    int w1, b1, w2, b2, wmu, bmu, ws, bs;  // store indices
  };

  int dim_, layers_, hidden_;
  std::vector<Layer> made_;
  std::vector<int> params_;
};

/// Factory from a spec string like "radial-8" or "maf-4".
std::unique_ptr<FlowDensity> make_flow(const std::string& spec, int latent_dim,
                                       ParamStore& store, Rng& rng,
                                       const std::string& name_prefix = "flow");

/// Flow-only maximum-likelihood training on a frozen latent batch.
/// Full-batch Adam for `steps` iterations. The mean log-likelihood
/// trace is returned (one entry per step, post-update).
std::vector<double> warmup_fit(FlowDensity& flow, ParamStore& store, const Tensor& latents,
                               int steps, double lr);

}  // namespace natpn
