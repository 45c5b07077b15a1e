#include "natpn/tensor.hpp"

#include <cmath>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "natpn/special.hpp"

namespace natpn {

bool Tensor::all_finite() const {
  for (int64_t i = 0; i < size(); ++i)
    if (!std::isfinite(at(i))) return false;
  return true;
}

std::string Tensor::shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

namespace kernels {

namespace {

inline double apply_unary(Unary op, double x) {
  switch (op) {
    case Unary::Neg: return -x;
    case Unary::Exp: return std::exp(x);
    case Unary::Log: return std::log(x);
    case Unary::Sqrt: return std::sqrt(x);
    case Unary::Square: return x * x;
    case Unary::Tanh: return std::tanh(x);
    case Unary::Softplus:
      // log(1 + e^x), stable for large |x|
      return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
    case Unary::LeakyRelu: return x >= 0.0 ? x : 0.01 * x;
    case Unary::Lgamma: return lgamma_impl(x);
    case Unary::Digamma: return digamma_impl(x);
    case Unary::Trigamma: return trigamma_impl(x);
  }
  return 0.0;
}

}  // namespace

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (int64_t p = 0; p < k; ++p) {
      double av = a[i * k + p];
      const double* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_bt(const double* g, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < n; ++p) acc += g[i * n + p] * b[j * n + p];
      c[i * k + j] = acc;
    }
  }
}

void matmul_at(const double* a, const double* g, double* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static) if (m * n * k > 16384)
  for (int64_t i = 0; i < k; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < m; ++p) acc += a[p * k + i] * g[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void map_unary(Unary op, const double* a, double* out, int64_t n) {
#pragma omp parallel for schedule(static) if (n > 8192)
  for (int64_t i = 0; i < n; ++i) out[i] = apply_unary(op, a[i]);
}

double sum(const double* a, int64_t n) {
  // Fixed block size so the summation order is independent of the
  // thread count; blocks are combined serially in index order.
  constexpr int64_t kBlock = 4096;
  int64_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partial(static_cast<size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static) if (nblocks > 1)
  for (int64_t b = 0; b < nblocks; ++b) {
    double acc = 0.0;
    int64_t end = std::min(n, (b + 1) * kBlock);
    for (int64_t i = b * kBlock; i < end; ++i) acc += a[i];
    partial[static_cast<size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

namespace serial {

void matmul(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

void map_unary(Unary op, const double* a, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = apply_unary(op, a[i]);
}

double sum(const double* a, int64_t n) {
  constexpr int64_t kBlock = 4096;
  double total = 0.0;
  for (int64_t b = 0; b * kBlock < n; ++b) {
    double acc = 0.0;
    int64_t end = std::min(n, (b + 1) * kBlock);
    for (int64_t i = b * kBlock; i < end; ++i) acc += a[i];
    total += acc;
  }
  return total;
}

}  // namespace serial

}  // namespace kernels

}  // namespace natpn
