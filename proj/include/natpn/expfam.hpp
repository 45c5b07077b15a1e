#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "natpn/autodiff.hpp"
#include "natpn/tensor.hpp"

namespace natpn {

enum class FamilyKind { Categorical, Normal, Poisson };

/// Family descriptor; num_classes is only meaningful for Categorical.
struct Family {
  FamilyKind kind = FamilyKind::Normal;
  int num_classes = 0;

  /// Length of the chi vector.
  int chi_len() const {
    switch (kind) {
      case FamilyKind::Categorical: return num_classes;
      case FamilyKind::Normal: return 2;
      case FamilyKind::Poisson: return 1;
    }
    return 0;
  }
};

Family make_categorical(int num_classes);
Family make_normal();
Family make_poisson();

const char* family_name(FamilyKind k);
FamilyKind family_from_name(const std::string& name);

/// Natural conjugate parametrization: mean sufficient statistics chi
/// and evidence pseudo-count n.
struct ConjugateParams {
  std::vector<double> chi;
  double n = 0.0;
};

/// Throws domain_error naming the violated constraint.
void validate(const ConjugateParams& p, const Family& fam);

/// Family-specific standard view. Dirichlet uses `alpha_vec`; NIG uses
/// (mu0, lambda, alpha, beta); Gamma uses (alpha, beta).
struct StandardParams {
  std::vector<double> alpha_vec;
  double mu0 = 0.0, lambda = 0.0, alpha = 0.0, beta = 0.0;
};

StandardParams to_standard(const ConjugateParams& p, const Family& fam);
ConjugateParams from_standard(const StandardParams& s, const Family& fam);

/// Sufficient statistics u(y) and log carrier measure log h(y).
struct SufficientStat {
  std::vector<double> u;
  double log_h = 0.0;
};

SufficientStat sufficient_stat(double y, const Family& fam);

/// Defaults: uniform chi with n = C for classification,
/// (0, 100) with n = 1 for regression, chi = 1 with n = 1 for counts.
ConjugateParams default_prior(const Family& fam);

/// E_{theta ~ prior(chi, n)}[log P(y | theta)], closed form per family.
double expected_log_likelihood(double y, const ConjugateParams& post, const Family& fam);

/// Entropy of the conjugate distribution; switches per-evaluation to the
/// large-concentration approximation at concentration >= 1e4.
double prior_entropy(const ConjugateParams& post, const Family& fam);

/// Exact closed-form entropy in long double, no approximation branch.
/// Reference route for testing the switch-over.
long double prior_entropy_exact(const ConjugateParams& post, const Family& fam);

/// Approximation branch alone (valid for large concentrations).
double prior_entropy_approx(const ConjugateParams& post, const Family& fam);

/// Entropy of the target distribution at given mean parameters:
/// Categorical takes the full probability vector; Normal takes sigma in
/// params[0]; Poisson takes lambda in params[0]. Shannon convention.
double target_entropy(const std::vector<double>& params, const Family& fam);

/// Mean target parameters implied by a posterior: probabilities for
/// Categorical, (mu, sigma) for Normal (sigma^2 = beta / alpha plug-in),
/// lambda for Poisson.
std::vector<double> posterior_mean_target(const ConjugateParams& post, const Family& fam);

/// Posterior predictive: Categorical(alpha/alpha0), Student-t, or
/// Negative-Binomial depending on the family.
class Predictive {
 public:
  virtual ~Predictive() = default;
  virtual double log_prob(double y) const = 0;
  virtual double cdf(double y) const = 0;
  virtual double mean() const = 0;
};

std::unique_ptr<Predictive> posterior_predictive(const ConjugateParams& post, const Family& fam);

/// Count of Dirichlet alpha floor events (alpha clamped to >= 1e-30
/// before lgamma). Exposed for logging.
int64_t dirichlet_clamp_count();

// ---- Differentiable batched forms used by the training loss ----
// chi_post: [N, L], n_post: [N, 1]. Targets: one-hot [N, C] for
// Categorical, [N, 1] otherwise.

ad::Node expected_log_likelihood_node(ad::Node chi_post, ad::Node n_post,
                                      const Tensor& targets, const Family& fam);
ad::Node posterior_entropy_node(ad::Node chi_post, ad::Node n_post, const Family& fam);

}  // namespace natpn
