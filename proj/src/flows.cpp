#include "natpn/flows.hpp"

#include <cmath>

#include "natpn/optim.hpp"

namespace natpn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kEps = 1e-12;

using ad::Node;

// log N(u | 0, I) per row: [N, H] -> [N, 1]
Node base_log_prob(Node u, int dim) {
  return ad::add_const(ad::mul_const(ad::rowsum(ad::square(u)), -0.5), -0.5 * dim * kLog2Pi);
}

}  // namespace

Tensor FlowDensity::log_prob_values(const Tensor& z, ParamStore& store) const {
  if (!z.all_finite()) throw domain_error("log_prob: non-finite input");
  ad::Tape tape;
  BoundParams bound = bind_params(store, tape);
  Node zn = tape.leaf(z);
  Node lp = log_prob(zn, bound);
  return tape.value(lp);
}

RadialFlow::RadialFlow(int latent_dim, int num_layers, ParamStore& store, Rng& rng,
                       const std::string& prefix)
    : dim_(latent_dim), layers_(num_layers) {
  for (int l = 0; l < num_layers; ++l) {
    std::string base = prefix + ".radial" + std::to_string(l);
    Tensor z0({1, latent_dim});
    for (int64_t i = 0; i < z0.size(); ++i) z0.at(i) = 0.1 * rng.normal();
    params_.push_back(store.add(base + ".z0", z0));
    // raw values of zero give alpha = log 2 and beta = 0 (identity layer)
    params_.push_back(store.add(base + ".alpha_raw", Tensor::scalar(0.0)));
    params_.push_back(store.add(base + ".beta_raw", Tensor::scalar(0.0)));
  }
}

Node RadialFlow::log_prob(Node z, const BoundParams& params) const {
  ad::Tape& t = *z.tape;
  if (t.value(z).cols() != dim_) throw dim_error("RadialFlow: latent dimension mismatch");
  if (!t.value(z).all_finite()) throw domain_error("RadialFlow::log_prob: non-finite input");
  Node one = t.leaf(Tensor::scalar(1.0));
  Node logdet;
  for (int l = 0; l < layers_; ++l) {
    Node z0 = params[params_[3 * l]];
    Node alpha = ad::softplus(params[params_[3 * l + 1]]);
    Node beta = ad::sub(ad::softplus(params[params_[3 * l + 2]]), alpha);
    Node d = ad::sub(z, z0);
    Node r = ad::sqrt(ad::add_const(ad::rowsum(ad::square(d)), kEps * kEps));
    Node h = ad::div(one, ad::add(alpha, r));  // [N,1]
    Node bh = ad::mul(beta, h);
    z = ad::add(z, ad::mul(bh, d));
    // det = (1 + bh)^{H-1} (1 + beta*alpha*h^2)
    Node term1 = ad::log(ad::max_const(ad::add_const(bh, 1.0), kEps));
    Node term2 =
        ad::log(ad::max_const(ad::add_const(ad::mul(ad::mul(beta, alpha), ad::square(h)), 1.0), kEps));
    Node ld = ad::add(ad::mul_const(term1, static_cast<double>(dim_ - 1)), term2);
    logdet = l == 0 ? ld : ad::add(logdet, ld);
  }
  Node lp = base_log_prob(z, dim_);
  return layers_ == 0 ? lp : ad::add(lp, logdet);
}

std::vector<Tensor> MafFlow::build_made_masks(int latent_dim, int hidden,
                                              const std::vector<int>& order) {
  if (latent_dim < 1) throw contract_error("build_made_masks: latent_dim >= 1 required");
  // Input/output degrees come from the order permutation; hidden degrees
  // cycle through 1..max(H-1, 1).
  int maxdeg = std::max(latent_dim - 1, 1);
  std::vector<int> hdeg(hidden);
  for (int j = 0; j < hidden; ++j) hdeg[j] = (j % maxdeg) + 1;

  Tensor m1({latent_dim, hidden});
  for (int i = 0; i < latent_dim; ++i)
    for (int j = 0; j < hidden; ++j) m1.at(i, j) = hdeg[j] >= order[i] ? 1.0 : 0.0;

  Tensor m2({hidden, hidden});
  for (int i = 0; i < hidden; ++i)
    for (int j = 0; j < hidden; ++j) m2.at(i, j) = hdeg[j] >= hdeg[i] ? 1.0 : 0.0;

  Tensor mout({hidden, latent_dim});
  for (int j = 0; j < hidden; ++j)
    for (int d = 0; d < latent_dim; ++d) mout.at(j, d) = order[d] > hdeg[j] ? 1.0 : 0.0;

  return {m1, m2, mout};
}

MafFlow::MafFlow(int latent_dim, int num_layers, ParamStore& store, Rng& rng,
                 const std::string& prefix)
    : dim_(latent_dim), layers_(num_layers), hidden_(std::max(2 * latent_dim, 2)) {
  std::vector<int> order(latent_dim);
  for (int i = 0; i < latent_dim; ++i) order[i] = i + 1;

  auto rand_init = [&](int64_t r, int64_t c, double scale) {
    Tensor w({r, c});
    for (int64_t i = 0; i < w.size(); ++i) w.at(i) = scale * rng.normal();
    return w;
  };

  for (int l = 0; l < num_layers; ++l) {
    std::string base = prefix + ".maf" + std::to_string(l);
    Layer layer;
    layer.reversed = (l % 2) == 1;
    layer.masks = build_made_masks(dim_, hidden_, order);
    double s = 1.0 / std::sqrt(static_cast<double>(std::max(dim_, 1)));
    layer.w1 = store.add(base + ".w1", rand_init(dim_, hidden_, s));
    layer.b1 = store.add(base + ".b1", Tensor::zeros({1, hidden_}));
    layer.w2 = store.add(base + ".w2", rand_init(hidden_, hidden_, 1.0 / std::sqrt(double(hidden_))));
    layer.b2 = store.add(base + ".b2", Tensor::zeros({1, hidden_}));
    // zero output heads: the layer starts as the identity transform
    layer.wmu = store.add(base + ".wmu", Tensor::zeros({hidden_, dim_}));
    layer.bmu = store.add(base + ".bmu", Tensor::zeros({1, dim_}));
    layer.ws = store.add(base + ".ws", Tensor::zeros({hidden_, dim_}));
    layer.bs = store.add(base + ".bs", Tensor::zeros({1, dim_}));
    for (int idx : {layer.w1, layer.b1, layer.w2, layer.b2, layer.wmu, layer.bmu, layer.ws,
                    layer.bs})
      params_.push_back(idx);
    made_.push_back(std::move(layer));
  }
}

Node MafFlow::log_prob(Node z, const BoundParams& params) const {
  ad::Tape& t = *z.tape;
  if (t.value(z).cols() != dim_) throw dim_error("MafFlow: latent dimension mismatch");
  if (!t.value(z).all_finite()) throw domain_error("MafFlow::log_prob: non-finite input");

  // Constant column-reversal matrix, shared by alternating layers.
  Tensor rev({dim_, dim_});
  for (int i = 0; i < dim_; ++i) rev.at(i, dim_ - 1 - i) = 1.0;
  Node rev_node = t.leaf(rev);

  Node logdet;
  for (int l = 0; l < layers_; ++l) {
    const Layer& layer = made_[l];
    if (layer.reversed) z = ad::matmul(z, rev_node);
    Node m1 = t.leaf(layer.masks[0]);
    Node m2 = t.leaf(layer.masks[1]);
    Node mout = t.leaf(layer.masks[2]);
    Node h1 = ad::tanh(ad::add(ad::matmul(z, ad::mul(params[layer.w1], m1)), params[layer.b1]));
    Node h2 = ad::tanh(ad::add(ad::matmul(h1, ad::mul(params[layer.w2], m2)), params[layer.b2]));
    Node mu = ad::add(ad::matmul(h2, ad::mul(params[layer.wmu], mout)), params[layer.bmu]);
    Node s_raw = ad::add(ad::matmul(h2, ad::mul(params[layer.ws], mout)), params[layer.bs]);
    Node s = ad::mul_const(ad::tanh(ad::mul_const(s_raw, 1.0 / 7.0)), 7.0);  // bounded log-scale
    z = ad::mul(ad::sub(z, mu), ad::exp(ad::neg(s)));
    Node ld = ad::neg(ad::rowsum(s));
    logdet = l == 0 ? ld : ad::add(logdet, ld);
  }
  Node lp = base_log_prob(z, dim_);
  return layers_ == 0 ? lp : ad::add(lp, logdet);
}

std::unique_ptr<FlowDensity> make_flow(const std::string& spec, int latent_dim, ParamStore& store,
                                       Rng& rng, const std::string& prefix) {
  auto dash = spec.find('-');
  if (dash == std::string::npos) throw contract_error("flow spec must look like 'radial-8'");
  std::string kind = spec.substr(0, dash);
  int layers = std::stoi(spec.substr(dash + 1));
  if (kind == "radial") return std::make_unique<RadialFlow>(latent_dim, layers, store, rng, prefix);
  if (kind == "maf") return std::make_unique<MafFlow>(latent_dim, layers, store, rng, prefix);
  throw contract_error("unknown flow type: " + kind);
}

std::vector<double> warmup_fit(FlowDensity& flow, ParamStore& store, const Tensor& latents,
                               int steps, double lr) {
  if (latents.rows() == 0) throw contract_error("warmup_fit: empty latent batch");
  Adam adam;
  adam.lr = lr;
  std::vector<double> trace;
  trace.reserve(static_cast<size_t>(steps));
  for (int step = 0; step < steps; ++step) {
    ad::Tape tape;
    BoundParams bound = bind_params(store, tape);
    Node z = tape.leaf(latents);
    Node loss = ad::neg(ad::mean(flow.log_prob(z, bound)));
    double loss_v = tape.value(loss).item();
    if (!std::isfinite(loss_v))
      throw training_error("warmup_fit: loss diverged at step " + std::to_string(step));
    tape.backward(loss);
    adam.t += 1;
    for (int idx : flow.param_indices())
      adam.step_entry(store[idx], tape.grad(bound[idx]));
    // report the post-update likelihood of this step's model
    ad::Tape t2;
    BoundParams b2 = bind_params(store, t2);
    trace.push_back(t2.value(ad::mean(flow.log_prob(t2.leaf(latents), b2))).item());
  }
  return trace;
}

}  // namespace natpn
