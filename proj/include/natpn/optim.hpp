#pragma once

#include <string>

#include "natpn/params.hpp"
#include "natpn/tensor.hpp"

namespace natpn {

/// Error carrying training state at the point of failure.
class training_error : public std::runtime_error {
 public:
  explicit training_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Adam with fixed beta1=0.9, beta2=0.999, eps=1e-8.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;

  /// One step over a single parameter entry. Throws training_error on a
  /// non-finite gradient, naming the parameter. `t` must be advanced by
  /// the caller once per optimizer step (across all entries).
  void step_entry(ParamStore::Entry& e, const Tensor& grad) const {
    if (!grad.same_shape(e.value)) throw dim_error("adam: gradient shape mismatch");
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    Tensor nv = e.value.clone();
    for (int64_t i = 0; i < grad.size(); ++i) {
      double g = grad.at(i);
      if (!std::isfinite(g)) throw training_error("adam: non-finite gradient in " + e.name);
      e.m.at(i) = beta1 * e.m.at(i) + (1.0 - beta1) * g;
      e.v.at(i) = beta2 * e.v.at(i) + (1.0 - beta2) * g * g;
      double mhat = e.m.at(i) / bc1;
      double vhat = e.v.at(i) / bc2;
      nv.at(i) -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    e.value = nv;
  }
};

}  // namespace natpn
