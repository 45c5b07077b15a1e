#include "natpn/expfam.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "natpn/special.hpp"

namespace natpn {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kApproxThreshold = 1e4;
constexpr double kAlphaFloor = 1e-30;

std::atomic<int64_t> g_dirichlet_clamps{0};

double floor_alpha(double a) {
  if (a < kAlphaFloor) {
    g_dirichlet_clamps.fetch_add(1, std::memory_order_relaxed);
    return kAlphaFloor;
  }
  return a;
}

}  // namespace

int64_t dirichlet_clamp_count() { return g_dirichlet_clamps.load(); }

Family make_categorical(int num_classes) {
  if (num_classes < 2) throw domain_error("Categorical requires C >= 2");
  return Family{FamilyKind::Categorical, num_classes};
}
Family make_normal() { return Family{FamilyKind::Normal, 0}; }
Family make_poisson() { return Family{FamilyKind::Poisson, 0}; }

const char* family_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::Categorical: return "categorical";
    case FamilyKind::Normal: return "normal";
    case FamilyKind::Poisson: return "poisson";
  }
  return "?";
}

FamilyKind family_from_name(const std::string& name) {
  if (name == "categorical") return FamilyKind::Categorical;
  if (name == "normal") return FamilyKind::Normal;
  if (name == "poisson") return FamilyKind::Poisson;
  throw contract_error("unknown family: " + name);
}

void validate(const ConjugateParams& p, const Family& fam) {
  if (!(p.n > 0.0)) throw domain_error("ConjugateParams: evidence n must be > 0");
  if (static_cast<int>(p.chi.size()) != fam.chi_len())
    throw domain_error("ConjugateParams: chi length does not match family");
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      double s = 0.0;
      for (double c : p.chi) {
        if (c < 0.0) throw domain_error("Categorical chi must be non-negative");
        s += c;
      }
      if (std::fabs(s - 1.0) > 1e-8) throw domain_error("Categorical chi must sum to 1");
      break;
    }
    case FamilyKind::Normal:
      if (!(p.chi[1] > p.chi[0] * p.chi[0]))
        throw domain_error("Normal chi requires chi[1] > chi[0]^2");
      break;
    case FamilyKind::Poisson:
      if (!(p.chi[0] > 0.0)) throw domain_error("Poisson chi must be > 0");
      break;
  }
}

StandardParams to_standard(const ConjugateParams& p, const Family& fam) {
  validate(p, fam);
  StandardParams s;
  switch (fam.kind) {
    case FamilyKind::Categorical:
      s.alpha_vec.resize(p.chi.size());
      for (size_t c = 0; c < p.chi.size(); ++c) s.alpha_vec[c] = p.n * p.chi[c];
      break;
    case FamilyKind::Normal:
      s.mu0 = p.chi[0];
      s.lambda = p.n;
      s.alpha = 0.5 * p.n;
      s.beta = 0.5 * p.n * (p.chi[1] - p.chi[0] * p.chi[0]);
      break;
    case FamilyKind::Poisson:
      s.alpha = p.n * p.chi[0];
      s.beta = p.n;
      break;
  }
  return s;
}

ConjugateParams from_standard(const StandardParams& s, const Family& fam) {
  ConjugateParams p;
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      double a0 = 0.0;
      for (double a : s.alpha_vec) a0 += a;
      p.n = a0;
      p.chi.resize(s.alpha_vec.size());
      for (size_t c = 0; c < s.alpha_vec.size(); ++c) p.chi[c] = s.alpha_vec[c] / a0;
      break;
    }
    case FamilyKind::Normal:
      p.n = s.lambda;
      p.chi = {s.mu0, s.mu0 * s.mu0 + 2.0 * s.beta / s.lambda};
      break;
    case FamilyKind::Poisson:
      p.n = s.beta;
      p.chi = {s.alpha / s.beta};
      break;
  }
  validate(p, fam);
  return p;
}

SufficientStat sufficient_stat(double y, const Family& fam) {
  SufficientStat st;
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      int c = static_cast<int>(y);
      if (c < 0 || c >= fam.num_classes || y != std::floor(y))
        throw domain_error("sufficient_stat: class index out of range");
      st.u.assign(fam.num_classes, 0.0);
      st.u[c] = 1.0;
      st.log_h = 0.0;
      break;
    }
    case FamilyKind::Normal:
      st.u = {y, y * y};
      st.log_h = -0.5 * kLog2Pi;
      break;
    case FamilyKind::Poisson:
      if (y < 0.0 || y != std::floor(y))
        throw domain_error("sufficient_stat: Poisson target must be a non-negative integer");
      st.u = {y};
      st.log_h = -lgamma_pos(y + 1.0);
      break;
  }
  return st;
}

ConjugateParams default_prior(const Family& fam) {
  ConjugateParams p;
  switch (fam.kind) {
    case FamilyKind::Categorical:
      p.chi.assign(fam.num_classes, 1.0 / fam.num_classes);
      p.n = fam.num_classes;
      break;
    case FamilyKind::Normal:
      p.chi = {0.0, 100.0};
      p.n = 1.0;
      break;
    case FamilyKind::Poisson:
      p.chi = {1.0};
      p.n = 1.0;
      break;
  }
  return p;
}

double expected_log_likelihood(double y, const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      int c = static_cast<int>(y);
      if (c < 0 || c >= fam.num_classes || y != std::floor(y))
        throw domain_error("expected_log_likelihood: class index out of range");
      double a0 = 0.0;
      for (double a : s.alpha_vec) a0 += a;
      return digamma_pos(floor_alpha(s.alpha_vec[c])) - digamma_pos(a0);
    }
    case FamilyKind::Normal: {
      double d = y - s.mu0;
      return 0.5 * (-(s.alpha / s.beta) * d * d - 1.0 / s.lambda + digamma_pos(s.alpha) -
                    std::log(s.beta) - kLog2Pi);
    }
    case FamilyKind::Poisson: {
      if (y < 0.0 || y != std::floor(y))
        throw domain_error("expected_log_likelihood: Poisson target must be a count");
      return (digamma_pos(s.alpha) - std::log(s.beta)) * y - s.alpha / s.beta -
             lgamma_pos(y + 1.0);
    }
  }
  return 0.0;
}

namespace {

template <typename F>
F dirichlet_entropy_exact_t(const std::vector<double>& alpha) {
  F a0 = 0, logb = 0, sum_term = 0;
  int k = static_cast<int>(alpha.size());
  for (double a : alpha) a0 += static_cast<F>(a);
  for (double av : alpha) {
    F a = static_cast<F>(floor_alpha(av));
    logb += static_cast<F>(lgamma_impl(static_cast<double>(a)));
    sum_term += (a - 1) * static_cast<F>(digamma_impl(static_cast<double>(a)));
  }
  logb -= static_cast<F>(lgamma_impl(static_cast<double>(a0)));
  return logb + (a0 - k) * static_cast<F>(digamma_impl(static_cast<double>(a0))) - sum_term;
}

template <typename F>
F nig_entropy_exact_t(double lambda, double alpha, double beta) {
  F a = alpha;
  return F(0.5) + F(0.5) * F(kLog2Pi) + F(1.5) * std::log(F(beta)) +
         static_cast<F>(lgamma_impl(alpha)) - F(0.5) * std::log(F(lambda)) + a -
         (a + F(1.5)) * static_cast<F>(digamma_impl(alpha));
}

template <typename F>
F gamma_entropy_exact_t(double alpha, double beta) {
  F a = alpha;
  return a + static_cast<F>(lgamma_impl(alpha)) - std::log(F(beta)) +
         (F(1) - a) * static_cast<F>(digamma_impl(alpha));
}

}  // namespace

double prior_entropy_approx(const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      double a0 = 0.0, slog = 0.0;
      int k = fam.num_classes;
      for (double a : s.alpha_vec) {
        a0 += a;
        slog += std::log(floor_alpha(a));
      }
      return 0.5 * (k - 1) * (1.0 + kLog2Pi) + 0.5 * slog - (k - 0.5) * std::log(a0);
    }
    case FamilyKind::Normal:
      return 1.0 + kLog2Pi - 2.0 * std::log(s.alpha) + 1.5 * std::log(s.beta) -
             0.5 * std::log(s.lambda);
    case FamilyKind::Poisson:
      return 0.5 + 0.5 * kLog2Pi + 0.5 * std::log(s.alpha) - std::log(s.beta);
  }
  return 0.0;
}

long double prior_entropy_exact(const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical: return dirichlet_entropy_exact_t<long double>(s.alpha_vec);
    case FamilyKind::Normal: return nig_entropy_exact_t<long double>(s.lambda, s.alpha, s.beta);
    case FamilyKind::Poisson: return gamma_entropy_exact_t<long double>(s.alpha, s.beta);
  }
  return 0.0;
}

double prior_entropy(const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      double a0 = 0.0;
      for (double a : s.alpha_vec) a0 += a;
      if (a0 >= kApproxThreshold) return prior_entropy_approx(post, fam);
      return static_cast<double>(dirichlet_entropy_exact_t<double>(s.alpha_vec));
    }
    case FamilyKind::Normal:
      if (s.alpha >= kApproxThreshold) return prior_entropy_approx(post, fam);
      return static_cast<double>(nig_entropy_exact_t<double>(s.lambda, s.alpha, s.beta));
    case FamilyKind::Poisson:
      if (s.alpha >= kApproxThreshold) return prior_entropy_approx(post, fam);
      return static_cast<double>(gamma_entropy_exact_t<double>(s.alpha, s.beta));
  }
  return 0.0;
}

double target_entropy(const std::vector<double>& params, const Family& fam) {
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      // Shannon entropy -sum p log p (0 log 0 := 0).
      double h = 0.0, s = 0.0;
      for (double p : params) {
        if (p < 0.0) throw domain_error("target_entropy: probabilities must be non-negative");
        s += p;
        if (p > 0.0) h -= p * std::log(p);
      }
      if (std::fabs(s - 1.0) > 1e-6) throw domain_error("target_entropy: probabilities must sum to 1");
      return h;
    }
    case FamilyKind::Normal: {
      double sigma = params[0];
      if (!(sigma > 0.0)) throw domain_error("target_entropy: sigma must be > 0");
      return 0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
    }
    case FamilyKind::Poisson: {
      double lam = params[0];
      if (!(lam > 0.0)) throw domain_error("target_entropy: lambda must be > 0");
      double h = lam * (1.0 - std::log(lam));
      // e^{-lam} sum_k lam^k log(k!) / k!, truncated when terms fall
      // below 1e-12 or at k = 10*lam + 100.
      int64_t kmax = static_cast<int64_t>(10.0 * lam + 100.0);
      double log_w = -lam;  // log of e^{-lam} lam^k / k! at k = 0
      for (int64_t k = 0; k <= kmax; ++k) {
        if (k > 0) log_w += std::log(lam) - std::log(static_cast<double>(k));
        double term = std::exp(log_w) * lgamma_impl(static_cast<double>(k) + 1.0);
        h += term;
        if (k > lam && term < 1e-12) break;
      }
      return h;
    }
  }
  return 0.0;
}

std::vector<double> posterior_mean_target(const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      double a0 = 0.0;
      for (double a : s.alpha_vec) a0 += a;
      std::vector<double> p(s.alpha_vec.size());
      for (size_t c = 0; c < p.size(); ++c) p[c] = s.alpha_vec[c] / a0;
      return p;
    }
    case FamilyKind::Normal:
      return {s.mu0, std::sqrt(s.beta / s.alpha)};
    case FamilyKind::Poisson:
      return {s.alpha / s.beta};
  }
  return {};
}

namespace {

class CategoricalPred : public Predictive {
 public:
  explicit CategoricalPred(std::vector<double> probs) : p_(std::move(probs)) {}
  double log_prob(double y) const override {
    int c = static_cast<int>(y);
    if (c < 0 || c >= static_cast<int>(p_.size()))
      throw domain_error("CategoricalPred: class out of range");
    return std::log(p_[c]);
  }
  double cdf(double y) const override {
    double acc = 0.0;
    for (int c = 0; c <= static_cast<int>(std::floor(y)) && c < static_cast<int>(p_.size()); ++c)
      acc += p_[c];
    return std::min(acc, 1.0);
  }
  double mean() const override {
    double m = 0.0;
    for (size_t c = 0; c < p_.size(); ++c) m += c * p_[c];
    return m;
  }

 private:
  std::vector<double> p_;
};

class StudentTPred : public Predictive {
 public:
  StudentTPred(double nu, double loc, double scale) : nu_(nu), loc_(loc), scale_(scale) {}
  double log_prob(double y) const override {
    double t = (y - loc_) / scale_;
    return lgamma_impl(0.5 * (nu_ + 1.0)) - lgamma_impl(0.5 * nu_) -
           0.5 * std::log(nu_ * 3.14159265358979323846) - std::log(scale_) -
           0.5 * (nu_ + 1.0) * std::log1p(t * t / nu_);
  }
  double cdf(double y) const override { return student_t_cdf((y - loc_) / scale_, nu_); }
  double mean() const override { return loc_; }

 private:
  double nu_, loc_, scale_;
};

class NegBinPred : public Predictive {
 public:
  NegBinPred(double r, double p) : r_(r), p_(p) {}
  double log_prob(double y) const override {
    if (y < 0.0 || y != std::floor(y)) throw domain_error("NegBinPred: count required");
    return lgamma_impl(y + r_) - lgamma_impl(r_) - lgamma_impl(y + 1.0) + r_ * std::log(p_) +
           y * std::log1p(-p_);
  }
  double cdf(double y) const override { return negative_binomial_cdf(y, r_, p_); }
  double mean() const override { return r_ * (1.0 - p_) / p_; }

 private:
  double r_, p_;
};

}  // namespace

std::unique_ptr<Predictive> posterior_predictive(const ConjugateParams& post, const Family& fam) {
  StandardParams s = to_standard(post, fam);
  switch (fam.kind) {
    case FamilyKind::Categorical:
      return std::make_unique<CategoricalPred>(posterior_mean_target(post, fam));
    case FamilyKind::Normal: {
      double nu = 2.0 * s.alpha;
      double scale = std::sqrt(s.beta * (1.0 + 1.0 / s.lambda) / s.alpha);
      return std::make_unique<StudentTPred>(nu, s.mu0, scale);
    }
    case FamilyKind::Poisson:
      return std::make_unique<NegBinPred>(s.alpha, s.beta / (s.beta + 1.0));
  }
  return nullptr;
}

// ---- differentiable batched forms ----

namespace {

using ad::Node;

// 1 where concentration >= 1e4, per row, expanded to [N,1].
Tensor approx_mask(const Tensor& conc) {
  Tensor m({conc.rows(), 1});
  for (int64_t i = 0; i < conc.rows(); ++i) m.at(i, 0) = conc.at(i, 0) >= kApproxThreshold ? 1.0 : 0.0;
  return m;
}

void count_alpha_clamps(const Tensor& alpha) {
  for (int64_t i = 0; i < alpha.size(); ++i)
    if (alpha.at(i) < kAlphaFloor) g_dirichlet_clamps.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

ad::Node expected_log_likelihood_node(ad::Node chi_post, ad::Node n_post, const Tensor& targets,
                                      const Family& fam) {
  ad::Tape& t = *chi_post.tape;
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      Node alpha = ad::mul(n_post, chi_post);  // [N,1] x [N,C] col-broadcast
      count_alpha_clamps(t.value(alpha));
      alpha = ad::max_const(alpha, kAlphaFloor);
      Node onehot = t.leaf(targets);
      Node alpha_y = ad::rowsum(ad::mul(alpha, onehot));
      Node alpha0 = ad::rowsum(alpha);
      return ad::sub(ad::digamma(alpha_y), ad::digamma(alpha0));
    }
    case FamilyKind::Normal: {
      Node mu0 = ad::slice_cols(chi_post, 0, 1);
      Node chi2 = ad::slice_cols(chi_post, 1, 2);
      Node var2 = ad::max_const(ad::sub(chi2, ad::square(mu0)), kAlphaFloor);  // 2*beta/n
      Node y = t.leaf(targets);
      Node alpha = ad::mul_const(n_post, 0.5);
      Node beta = ad::mul(alpha, var2);
      Node d2 = ad::square(ad::sub(y, mu0));
      Node inv_lambda = ad::div(t.leaf(Tensor::scalar(1.0)), n_post);
      Node inner = ad::sub(ad::sub(ad::sub(ad::neg(ad::div(d2, var2)), inv_lambda),
                                   ad::log(beta)),
                           t.leaf(Tensor::scalar(kLog2Pi)));
      return ad::mul_const(ad::add(inner, ad::digamma(alpha)), 0.5);
    }
    case FamilyKind::Poisson: {
      Node alpha = ad::max_const(ad::mul(n_post, chi_post), kAlphaFloor);  // [N,1]
      Node beta = n_post;
      Node y = t.leaf(targets);
      // -lgamma(y+1) is constant w.r.t. parameters
      Tensor lg({targets.rows(), 1});
      for (int64_t i = 0; i < targets.rows(); ++i) lg.at(i, 0) = lgamma_impl(targets.at(i, 0) + 1.0);
      Node term = ad::mul(ad::sub(ad::digamma(alpha), ad::log(beta)), y);
      return ad::sub(ad::sub(term, ad::div(alpha, beta)), t.leaf(lg));
    }
  }
  throw contract_error("expected_log_likelihood_node: bad family");
}

ad::Node posterior_entropy_node(ad::Node chi_post, ad::Node n_post, const Family& fam) {
  ad::Tape& t = *chi_post.tape;
  switch (fam.kind) {
    case FamilyKind::Categorical: {
      int k = fam.num_classes;
      Node alpha = ad::mul(n_post, chi_post);
      count_alpha_clamps(t.value(alpha));
      alpha = ad::max_const(alpha, kAlphaFloor);
      Node alpha0 = ad::rowsum(alpha);
      Node exact = ad::add(
          ad::sub(ad::sub(ad::rowsum(ad::lgamma(alpha)), ad::lgamma(alpha0)),
                  ad::rowsum(ad::mul(ad::add_const(alpha, -1.0), ad::digamma(alpha)))),
          ad::mul(ad::add_const(alpha0, -static_cast<double>(k)), ad::digamma(alpha0)));
      Node approx = ad::add_const(
          ad::sub(ad::mul_const(ad::rowsum(ad::log(alpha)), 0.5),
                  ad::mul_const(ad::log(alpha0), k - 0.5)),
          0.5 * (k - 1) * (1.0 + kLog2Pi));
      return ad::where(approx_mask(t.value(alpha0)), approx, exact);
    }
    case FamilyKind::Normal: {
      Node mu0 = ad::slice_cols(chi_post, 0, 1);
      Node var2 = ad::max_const(ad::sub(ad::slice_cols(chi_post, 1, 2), ad::square(mu0)),
                                kAlphaFloor);
      Node lambda = n_post;
      Node alpha = ad::mul_const(n_post, 0.5);
      Node beta = ad::mul(alpha, var2);
      Node exact = ad::add(
          ad::sub(ad::add(ad::add_const(ad::mul_const(ad::log(beta), 1.5),
                                        0.5 + 0.5 * kLog2Pi),
                          ad::lgamma(alpha)),
                  ad::mul_const(ad::log(lambda), 0.5)),
          ad::sub(alpha, ad::mul(ad::add_const(alpha, 1.5), ad::digamma(alpha))));
      Node approx = ad::add_const(
          ad::sub(ad::sub(ad::mul_const(ad::log(beta), 1.5), ad::mul_const(ad::log(alpha), 2.0)),
                  ad::mul_const(ad::log(lambda), 0.5)),
          1.0 + kLog2Pi);
      return ad::where(approx_mask(t.value(alpha)), approx, exact);
    }
    case FamilyKind::Poisson: {
      Node alpha = ad::max_const(ad::mul(n_post, chi_post), kAlphaFloor);
      Node beta = n_post;
      Node exact = ad::add(ad::sub(ad::add(alpha, ad::lgamma(alpha)), ad::log(beta)),
                           ad::mul(ad::affine_const(alpha, -1.0, 1.0), ad::digamma(alpha)));
      Node approx = ad::add_const(ad::sub(ad::mul_const(ad::log(alpha), 0.5), ad::log(beta)),
                                  0.5 + 0.5 * kLog2Pi);
      return ad::where(approx_mask(t.value(alpha)), approx, exact);
    }
  }
  throw contract_error("posterior_entropy_node: bad family");
}

}  // namespace natpn
