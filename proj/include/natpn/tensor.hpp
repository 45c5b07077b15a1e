#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace natpn {

/// Error thrown when tensor shapes are incompatible.
class dim_error : public std::runtime_error {
 public:
  explicit dim_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error thrown when an operation is evaluated outside its domain.
class domain_error : public std::runtime_error {
 public:
  explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major tensor of doubles. Data is shared between copies;
/// by convention a tensor is never mutated after it escapes the
/// function that created it.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(count(shape_), 0.0)) {}

  Tensor(std::vector<int64_t> shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != count(shape_))
      throw dim_error("Tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : *t.data_) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t size() const { return count(shape_); }
  int64_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int64_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  bool empty() const { return !data_ || data_->empty(); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }

  double& at(int64_t i) { return (*data_)[i]; }
  double at(int64_t i) const { return (*data_)[i]; }
  double& at(int64_t r, int64_t c) { return (*data_)[r * cols() + c]; }
  double at(int64_t r, int64_t c) const { return (*data_)[r * cols() + c]; }

  double item() const {
    if (size() != 1) throw dim_error("Tensor::item: not a scalar");
    return (*data_)[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  /// Deep copy with its own storage.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
  }

  bool all_finite() const;

  static std::string shape_str(const std::vector<int64_t>& s);

 private:
  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (auto d : s) {
      if (d < 0) throw dim_error("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int64_t> shape_;
  std::shared_ptr<std::vector<double>> data_;
};

/// Low-level compute kernels. The OpenMP versions are the production
/// path; natpn::kernels::serial holds plain-loop references used by the
/// test suite and the kernel benchmark.
namespace kernels {

// C[M,N] = A[M,K] * B[K,N]
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C[M,K] = G[M,N] * B^T[N,K]
void matmul_bt(const double* g, const double* b, double* c, int64_t m, int64_t n, int64_t k);
// C[K,N] = A^T[K,M] * G[M,N]
void matmul_at(const double* a, const double* g, double* c, int64_t m, int64_t k, int64_t n);

// out[i] = f(a[i]) for the fixed op set used by the autodiff engine.
enum class Unary { Neg, Exp, Log, Sqrt, Square, Tanh, Softplus, LeakyRelu, Lgamma, Digamma, Trigamma };
void map_unary(Unary op, const double* a, double* out, int64_t n);

// Deterministic sum: per-block partials combined in block order, so the
// result does not depend on the number of threads.
double sum(const double* a, int64_t n);

namespace serial {
void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
void map_unary(Unary op, const double* a, double* out, int64_t n);
double sum(const double* a, int64_t n);
}  // namespace serial

}  // namespace kernels

}  // namespace natpn
