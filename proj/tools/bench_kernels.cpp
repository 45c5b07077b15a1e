// Benchmark comparing the OpenMP tensor kernels against the serial
// reference implementations, and checking that they agree.

#include <chrono>
#include <cmath>
#include <cstdio>

#include "natpn/rng.hpp"
#include "natpn/tensor.hpp"

using natpn::Tensor;

namespace {

double now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

Tensor random_tensor(int64_t r, int64_t c, natpn::Rng& rng) {
  Tensor t({r, c});
  for (int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal();
  return t;
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    double t0 = now();
    f();
    best = std::min(best, now() - t0);
  }
  return best;
}

}  // namespace

int main() {
  natpn::Rng rng(7);
  std::printf("%-28s %12s %12s %8s %10s\n", "kernel", "parallel(s)", "serial(s)", "speedup",
              "max|diff|");

  for (int64_t n : {128, 256, 512}) {
    Tensor a = random_tensor(n, n, rng);
    Tensor b = random_tensor(n, n, rng);
    Tensor out_p({n, n}), out_s({n, n});
    double tp = time_best_of(
        3, [&] { natpn::kernels::matmul(a.data(), b.data(), out_p.data(), n, n, n); });
    double ts = time_best_of(
        3, [&] { natpn::kernels::serial::matmul(a.data(), b.data(), out_s.data(), n, n, n); });
    double diff = 0.0;
    for (int64_t i = 0; i < out_p.size(); ++i)
      diff = std::max(diff, std::abs(out_p.at(i) - out_s.at(i)));
    std::printf("matmul %4lldx%-4lld            %12.6f %12.6f %8.2f %10.2e\n",
                static_cast<long long>(n), static_cast<long long>(n), tp, ts, ts / tp, diff);
  }

  {
    int64_t n = 4'000'000;
    Tensor a = random_tensor(n / 1000, 1000, rng);
    Tensor out_p({n / 1000, 1000}), out_s({n / 1000, 1000});
    double tp = time_best_of(
        5, [&] { natpn::kernels::map_unary(natpn::kernels::Unary::Exp, a.data(), out_p.data(), n); });
    double ts = time_best_of(5, [&] {
      natpn::kernels::serial::map_unary(natpn::kernels::Unary::Exp, a.data(), out_s.data(), n);
    });
    double diff = 0.0;
    for (int64_t i = 0; i < out_p.size(); ++i)
      diff = std::max(diff, std::abs(out_p.at(i) - out_s.at(i)));
    std::printf("map_unary(exp) 4M           %12.6f %12.6f %8.2f %10.2e\n", tp, ts, ts / tp, diff);

    double sp = 0.0, ss = 0.0;
    double tps = time_best_of(5, [&] { sp = natpn::kernels::sum(a.data(), n); });
    double tss = time_best_of(5, [&] { ss = natpn::kernels::serial::sum(a.data(), n); });
    std::printf("sum 4M                      %12.6f %12.6f %8.2f %10.2e\n", tps, tss, tss / tps,
                std::abs(sp - ss));
  }
  return 0;
}
