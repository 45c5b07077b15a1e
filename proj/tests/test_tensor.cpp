#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "natpn/rng.hpp"
#include "natpn/tensor.hpp"

using natpn::Tensor;
namespace k = natpn::kernels;

TEST_CASE("tensor shape and storage basics") {
  Tensor t({2, 3});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  for (int64_t i = 0; i < t.size(); ++i) CHECK(t.at(i) == 0.0);

  t.at(1, 2) = 5.0;
  CHECK(t.at(5) == 5.0);  // row-major layout

  Tensor c = t.clone();
  c.at(0) = 9.0;
  CHECK(t.at(0) == 0.0);  // clone owns its storage

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), natpn::dim_error);
  CHECK(Tensor::scalar(3.5).item() == 3.5);
  CHECK_THROWS_AS(Tensor({2, 2}).item(), natpn::dim_error);
  CHECK(Tensor::full({2, 2}, 7.0).at(3) == 7.0);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Tensor t({1, 3}, {1.0, 2.0, 3.0});
  CHECK(t.all_finite());
  t.at(1) = std::nan("");
  CHECK_FALSE(t.all_finite());
  t.at(1) = 1e308 * 10;
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("matmul matches a hand-worked 2x2 case") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  Tensor c({2, 2});
  k::matmul(a.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c.at(0, 0) == 19);
  CHECK(c.at(0, 1) == 22);
  CHECK(c.at(1, 0) == 43);
  CHECK(c.at(1, 1) == 50);
}

TEST_CASE("parallel kernels agree with the serial reference") {
  natpn::Rng rng(11);
  int64_t m = 33, kk = 47, n = 29;
  Tensor a({m, kk}), b({kk, n}), g({m, n});
  for (int64_t i = 0; i < a.size(); ++i) a.at(i) = rng.normal();
  for (int64_t i = 0; i < b.size(); ++i) b.at(i) = rng.normal();
  for (int64_t i = 0; i < g.size(); ++i) g.at(i) = rng.normal();

  Tensor c1({m, n}), c2({m, n});
  k::matmul(a.data(), b.data(), c1.data(), m, kk, n);
  k::serial::matmul(a.data(), b.data(), c2.data(), m, kk, n);
  for (int64_t i = 0; i < c1.size(); ++i) CHECK(c1.at(i) == doctest::Approx(c2.at(i)).epsilon(1e-14));

  // G * B^T against an explicit transpose
  Tensor bt({n, kk});
  for (int64_t i = 0; i < kk; ++i)
    for (int64_t j = 0; j < n; ++j) bt.at(j, i) = b.at(i, j);
  Tensor gb1({m, kk}), gb2({m, kk});
  k::matmul_bt(g.data(), b.data(), gb1.data(), m, n, kk);
  k::serial::matmul(g.data(), bt.data(), gb2.data(), m, n, kk);
  for (int64_t i = 0; i < gb1.size(); ++i)
    CHECK(gb1.at(i) == doctest::Approx(gb2.at(i)).epsilon(1e-12));

  // A^T * G
  Tensor at({kk, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < kk; ++j) at.at(j, i) = a.at(i, j);
  Tensor ag1({kk, n}), ag2({kk, n});
  k::matmul_at(a.data(), g.data(), ag1.data(), m, kk, n);
  k::serial::matmul(at.data(), g.data(), ag2.data(), kk, m, n);
  for (int64_t i = 0; i < ag1.size(); ++i)
    CHECK(ag1.at(i) == doctest::Approx(ag2.at(i)).epsilon(1e-12));
}

TEST_CASE("unary maps match reference functions") {
  natpn::Rng rng(3);
  int64_t n = 10000;
  std::vector<double> in(n);
  for (auto& v : in) v = 0.1 + 2.0 * rng.uniform();
  std::vector<double> out(n), ref(n);

  auto check = [&](k::Unary op, auto f) {
    k::map_unary(op, in.data(), out.data(), n);
    k::serial::map_unary(op, in.data(), ref.data(), n);
    for (int64_t i = 0; i < n; ++i) {
      CHECK(out[i] == ref[i]);  // parallel and serial must agree exactly
      CHECK(out[i] == doctest::Approx(f(in[i])).epsilon(1e-12));
    }
  };
  check(k::Unary::Neg, [](double x) { return -x; });
  check(k::Unary::Exp, [](double x) { return std::exp(x); });
  check(k::Unary::Log, [](double x) { return std::log(x); });
  check(k::Unary::Sqrt, [](double x) { return std::sqrt(x); });
  check(k::Unary::Square, [](double x) { return x * x; });
  check(k::Unary::Tanh, [](double x) { return std::tanh(x); });
  check(k::Unary::Softplus, [](double x) { return std::log1p(std::exp(x)); });
}

TEST_CASE("leaky relu slope is 0.01") {
  double in[2] = {-1.0, 2.0};
  double out[2];
  k::map_unary(k::Unary::LeakyRelu, in, out, 2);
  CHECK(out[0] == doctest::Approx(-0.01));
  CHECK(out[1] == doctest::Approx(2.0));
}

TEST_CASE("softplus is stable for large magnitudes") {
  double in[2] = {800.0, -800.0};
  double out[2];
  k::map_unary(k::Unary::Softplus, in, out, 2);
  CHECK(out[0] == doctest::Approx(800.0));
  CHECK(out[1] >= 0.0);
  CHECK(out[1] < 1e-300);
}

TEST_CASE("deterministic sum is exactly reproducible and accurate") {
  natpn::Rng rng(7);
  int64_t n = 100003;  // deliberately not a block multiple
  std::vector<double> v(n);
  long double exact = 0.0L;
  for (auto& x : v) {
    x = rng.normal();
    exact += x;
  }
  double s1 = k::sum(v.data(), n);
  double s2 = k::sum(v.data(), n);
  double ss = k::serial::sum(v.data(), n);
  CHECK(s1 == s2);
  CHECK(s1 == ss);  // identical blocked combine order
  CHECK(std::abs(s1 - static_cast<double>(exact)) < 1e-8);
}
