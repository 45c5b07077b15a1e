#include "natpn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace natpn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogEvidenceCap = 27.631021115928547;  // log 1e12
constexpr char kMagic[8] = {'N', 'P', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

using ad::Node;
}  // namespace

const char* budget_mode_name(BudgetMode m) {
  switch (m) {
    case BudgetMode::Unit: return "unit";
    case BudgetMode::DataCount: return "data_count";
    case BudgetMode::DimensionScaled: return "dimension_scaled";
  }
  return "?";
}

BudgetMode budget_mode_from_name(const std::string& name) {
  if (name == "unit") return BudgetMode::Unit;
  if (name == "data_count") return BudgetMode::DataCount;
  if (name == "dimension_scaled") return BudgetMode::DimensionScaled;
  throw config_error("unknown budget mode: " + name);
}

double certainty_budget(int latent_dim, BudgetMode mode, int64_t train_size) {
  if (latent_dim < 1) throw config_error("certainty_budget: latent_dim >= 1 required");
  switch (mode) {
    case BudgetMode::Unit: return 0.0;
    case BudgetMode::DataCount:
      if (train_size < 1) throw config_error("certainty_budget: data_count mode needs train size");
      return std::log(static_cast<double>(train_size));
    case BudgetMode::DimensionScaled:
      return 0.5 * (latent_dim * kLog2Pi + std::log(static_cast<double>(latent_dim + 1)));
  }
  throw config_error("certainty_budget: bad mode");
}

void NatPnConfig::validate() const {
  if (input_dim < 1) throw config_error("config: input_dim >= 1 required");
  if (latent_dim < 1) throw config_error("config: latent_dim >= 1 required");
  if (!(entropy_weight >= 0.0 && entropy_weight <= 1e-5))
    throw config_error("config: entropy_weight must lie in [0, 1e-5]");
  if (budget_mode == BudgetMode::DataCount && train_size < 1)
    throw config_error("config: data_count budget needs train_size");
  for (int h : encoder_hidden)
    if (h < 1) throw config_error("config: encoder widths must be positive");
  if (!prior.chi.empty()) natpn::validate(prior, family);
}

ConjugateParams PosteriorPrediction::row(int64_t i) const {
  ConjugateParams p;
  p.chi.resize(static_cast<size_t>(chi_post.cols()));
  for (int64_t c = 0; c < chi_post.cols(); ++c) p.chi[static_cast<size_t>(c)] = chi_post.at(i, c);
  p.n = n_post.at(i, 0);
  return p;
}

NatPnModel::NatPnModel(NatPnConfig config, uint64_t seed) : config_(std::move(config)) {
  if (config_.prior.chi.empty()) config_.prior = default_prior(config_.family);
  config_.validate();
  build(seed);
}

void NatPnModel::build(uint64_t seed) {
  Rng rng(seed);
  auto linear = [&](const std::string& name, int fan_in, int fan_out, std::vector<int>& sink) {
    Tensor w({fan_in, fan_out});
    double s = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i) w.at(i) = s * rng.normal();
    sink.push_back(store_.add(name + ".w", w));
    sink.push_back(store_.add(name + ".b", Tensor::zeros({1, fan_out})));
  };

  int width = config_.input_dim;
  for (size_t l = 0; l < config_.encoder_hidden.size(); ++l) {
    linear("enc.l" + std::to_string(l), width, config_.encoder_hidden[l], enc_params_);
    width = config_.encoder_hidden[l];
  }
  linear("enc.latent", width, config_.latent_dim, enc_params_);

  // decoder output width: C logits, (mu, s) for Normal, one rate for Poisson
  linear("dec.out", config_.latent_dim, config_.family.chi_len(), dec_params_);

  flow_ = make_flow(config_.flow_spec, config_.latent_dim, store_, rng, "flow");
}

std::vector<int> NatPnModel::all_params() const {
  std::vector<int> all = enc_params_;
  all.insert(all.end(), dec_params_.begin(), dec_params_.end());
  const auto& fp = flow_->param_indices();
  all.insert(all.end(), fp.begin(), fp.end());
  return all;
}

ForwardNodes NatPnModel::forward_nodes(ad::Tape& tape, const BoundParams& bound,
                                       const Tensor& x) const {
  if (x.cols() != config_.input_dim) throw dim_error("forward: input width mismatch");
  if (!x.all_finite()) throw domain_error("forward: non-finite input batch");

  Node h = tape.leaf(x);
  size_t n_layers = config_.encoder_hidden.size();
  for (size_t l = 0; l < n_layers; ++l) {
    Node w = bound[enc_params_[2 * l]];
    Node b = bound[enc_params_[2 * l + 1]];
    h = ad::leaky_relu(ad::add(ad::matmul(h, w), b));
  }
  Node latent = ad::add(ad::matmul(h, bound[enc_params_[2 * n_layers]]),
                        bound[enc_params_[2 * n_layers + 1]]);
  if (!tape.value(latent).all_finite()) throw domain_error("forward: non-finite latent (encoder)");

  Node raw = ad::add(ad::matmul(latent, bound[dec_params_[0]]), bound[dec_params_[1]]);
  Node chi_update;
  switch (config_.family.kind) {
    case FamilyKind::Categorical:
      chi_update = ad::softmax(raw);
      break;
    case FamilyKind::Normal: {
      Node mu = ad::slice_cols(raw, 0, 1);
      Node s = ad::slice_cols(raw, 1, 2);
      // Floor the decoded variance so chi[1] - chi[0]^2 stays strictly
      // positive even when softplus underflows against mu^2.
      chi_update = ad::concat_cols(
          mu, ad::add(ad::square(mu), ad::add_const(ad::softplus(s), 1e-6)));
      break;
    }
    case FamilyKind::Poisson:
      chi_update = ad::add_const(ad::softplus(raw), 1e-6);
      break;
  }
  if (!tape.value(chi_update).all_finite())
    throw domain_error("forward: non-finite chi update (decoder)");

  Node logp = flow_->log_prob(latent, bound);
  if (!tape.value(logp).all_finite()) throw domain_error("forward: non-finite latent density (flow)");

  double log_budget =
      certainty_budget(config_.latent_dim, config_.budget_mode, config_.train_size);
  Node log_n = ad::add_const(logp, log_budget);
  const Tensor& log_n_v = tape.value(log_n);
  for (int64_t i = 0; i < log_n_v.size(); ++i)
    if (log_n_v.at(i) > kLogEvidenceCap) ++clamp_count_;
  Node n_update = ad::exp(ad::min_const(log_n, kLogEvidenceCap));
  if (!tape.value(n_update).all_finite()) throw domain_error("forward: non-finite evidence");

  Tensor prior_term({1, config_.family.chi_len()});
  for (int64_t c = 0; c < prior_term.size(); ++c)
    prior_term.at(c) = config_.prior.n * config_.prior.chi[static_cast<size_t>(c)];

  Node n_post = ad::add_const(n_update, config_.prior.n);
  Node chi_post =
      ad::div(ad::add(ad::mul(n_update, chi_update), tape.leaf(prior_term)), n_post);

  ForwardNodes f;
  f.latent = latent;
  f.latent_logprob = logp;
  f.chi_update = chi_update;
  f.n_update = n_update;
  f.chi_post = chi_post;
  f.n_post = n_post;
  return f;
}

PosteriorPrediction NatPnModel::forward(const Tensor& x) const {
  ad::Tape tape;
  // const_cast is safe: bind_params only reads values into tape leaves.
  BoundParams bound = bind_params(const_cast<ParamStore&>(store_), tape);
  ForwardNodes f = forward_nodes(tape, bound, x);
  PosteriorPrediction p;
  p.latent = tape.value(f.latent).clone();
  p.latent_logprob = tape.value(f.latent_logprob).clone();
  p.chi_update = tape.value(f.chi_update).clone();
  p.n_update = tape.value(f.n_update).clone();
  p.chi_post = tape.value(f.chi_post).clone();
  p.n_post = tape.value(f.n_post).clone();
  return p;
}

Uncertainty NatPnModel::uncertainties(const PosteriorPrediction& pred, int64_t row) const {
  ConjugateParams cp = pred.row(row);
  Uncertainty u;
  std::vector<double> tgt = posterior_mean_target(cp, config_.family);
  // target_entropy wants {sigma} for Normal (posterior_mean_target returns
  // {mu, sigma}) and {lambda} for Poisson. Floor the scale: floating-point
  // cancellation in the posterior combine can drive it to zero.
  if (config_.family.kind == FamilyKind::Normal) tgt.erase(tgt.begin());
  if (config_.family.kind != FamilyKind::Categorical)
    tgt[0] = std::max(tgt[0], 1e-12);
  u.aleatoric = target_entropy(tgt, config_.family);
  u.epistemic = cp.n;
  u.predictive = prior_entropy(cp, config_.family);
  return u;
}

std::vector<double> NatPnModel::point_predictions(const PosteriorPrediction& pred) const {
  std::vector<double> out(static_cast<size_t>(pred.size()));
  for (int64_t i = 0; i < pred.size(); ++i) {
    if (config_.family.kind == FamilyKind::Categorical) {
      int64_t best = 0;
      for (int64_t c = 1; c < pred.chi_post.cols(); ++c)
        if (pred.chi_post.at(i, c) > pred.chi_post.at(i, best)) best = c;
      out[static_cast<size_t>(i)] = static_cast<double>(best);
    } else {
      out[static_cast<size_t>(i)] = posterior_predictive(pred.row(i), config_.family)->mean();
    }
  }
  return out;
}

PosteriorPrediction ensemble_combine(const std::vector<PosteriorPrediction>& members,
                                     const ConjugateParams& prior, const Family& fam) {
  if (members.empty()) throw contract_error("ensemble_combine: no members");
  int64_t n = members[0].size();
  int64_t L = members[0].chi_post.cols();
  if (L != fam.chi_len()) throw contract_error("ensemble_combine: family mismatch");
  for (const auto& m : members)
    if (m.size() != n || m.chi_post.cols() != L)
      throw contract_error("ensemble_combine: member shape mismatch");

  PosteriorPrediction out;
  out.latent = Tensor::zeros({n, 1});
  out.latent_logprob = Tensor::zeros({n, 1});
  out.chi_update = Tensor({n, L});
  out.n_update = Tensor({n, 1});
  out.chi_post = Tensor({n, L});
  out.n_post = Tensor({n, 1});

  for (int64_t i = 0; i < n; ++i) {
    double n_sum = 0.0;
    std::vector<double> num(static_cast<size_t>(L), 0.0);
    for (const auto& m : members) {
      double nk = m.n_update.at(i, 0);
      n_sum += nk;
      for (int64_t c = 0; c < L; ++c) num[static_cast<size_t>(c)] += nk * m.chi_update.at(i, c);
    }
    out.n_update.at(i, 0) = n_sum;
    out.n_post.at(i, 0) = prior.n + n_sum;
    for (int64_t c = 0; c < L; ++c) {
      double total = prior.n * prior.chi[static_cast<size_t>(c)] + num[static_cast<size_t>(c)];
      out.chi_post.at(i, c) = total / (prior.n + n_sum);
      out.chi_update.at(i, c) =
          n_sum > 0.0 ? num[static_cast<size_t>(c)] / n_sum : prior.chi[static_cast<size_t>(c)];
    }
  }
  return out;
}

ad::Node bayesian_loss(const ForwardNodes& fwd, const Tensor& targets, double lambda,
                       const Family& fam) {
  Node ell = expected_log_likelihood_node(fwd.chi_post, fwd.n_post, targets, fam);
  if (lambda == 0.0) return ad::neg(ad::mean(ell));
  Node ent = posterior_entropy_node(fwd.chi_post, fwd.n_post, fam);
  return ad::neg(ad::mean(ad::add(ell, ad::mul_const(ent, lambda))));
}

// ---- checkpoint serialization ----

namespace {

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& is) {
  uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int64_t get_i64(std::istream& is) {
  int64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double get_f64(std::istream& is) {
  double v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string get_str(std::istream& is) {
  uint32_t len = get_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  return s;
}

}  // namespace

void NatPnModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw config_error("checkpoint: cannot open for writing: " + path);
  os.write(kMagic, 8);
  put_u32(os, kVersion);
  put_str(os, family_name(config_.family.kind));
  put_u32(os, static_cast<uint32_t>(config_.family.num_classes));
  put_u32(os, static_cast<uint32_t>(config_.input_dim));
  put_u32(os, static_cast<uint32_t>(config_.latent_dim));
  put_u32(os, static_cast<uint32_t>(config_.encoder_hidden.size()));
  for (int h : config_.encoder_hidden) put_u32(os, static_cast<uint32_t>(h));
  put_str(os, config_.flow_spec);
  put_str(os, budget_mode_name(config_.budget_mode));
  put_i64(os, config_.train_size);
  put_f64(os, config_.entropy_weight);
  put_u32(os, static_cast<uint32_t>(config_.prior.chi.size()));
  for (double c : config_.prior.chi) put_f64(os, c);
  put_f64(os, config_.prior.n);

  put_u32(os, static_cast<uint32_t>(store_.size()));
  for (const auto& e : store_.entries) {
    put_str(os, e.name);
    put_i64(os, e.value.rows());
    put_i64(os, e.value.cols());
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(e.value.size() * 8));
  }
  if (!os) throw config_error("checkpoint: write failed: " + path);
}

NatPnModel NatPnModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw config_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw config_error("checkpoint: bad magic in " + path);
  uint32_t version = get_u32(is);
  if (version != kVersion) throw config_error("checkpoint: unsupported version");

  NatPnConfig cfg;
  std::string fname = get_str(is);
  int num_classes = static_cast<int>(get_u32(is));
  cfg.family.kind = family_from_name(fname);
  cfg.family.num_classes = num_classes;
  cfg.input_dim = static_cast<int>(get_u32(is));
  cfg.latent_dim = static_cast<int>(get_u32(is));
  uint32_t nh = get_u32(is);
  cfg.encoder_hidden.clear();
  for (uint32_t i = 0; i < nh; ++i) cfg.encoder_hidden.push_back(static_cast<int>(get_u32(is)));
  cfg.flow_spec = get_str(is);
  cfg.budget_mode = budget_mode_from_name(get_str(is));
  cfg.train_size = get_i64(is);
  cfg.entropy_weight = get_f64(is);
  uint32_t clen = get_u32(is);
  cfg.prior.chi.resize(clen);
  for (uint32_t i = 0; i < clen; ++i) cfg.prior.chi[i] = get_f64(is);
  cfg.prior.n = get_f64(is);

  NatPnModel model(cfg, /*seed=*/0);
  uint32_t count = get_u32(is);
  if (static_cast<int>(count) != model.store_.size())
    throw config_error("checkpoint: parameter count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = get_str(is);
    auto& e = model.store_[static_cast<int>(i)];
    if (name != e.name) throw config_error("checkpoint: parameter name mismatch: " + name);
    int64_t r = get_i64(is), c = get_i64(is);
    if (r != e.value.rows() || c != e.value.cols())
      throw config_error("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(e.value.data()),
            static_cast<std::streamsize>(e.value.size() * 8));
  }
  if (!is) throw config_error("checkpoint: truncated file: " + path);
  return model;
}

}  // namespace natpn
