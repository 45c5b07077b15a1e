#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "natpn/training.hpp"

using namespace natpn;

namespace {

std::vector<double> snapshot_bytes(const ParamStore& store, const std::string& prefix) {
  std::vector<double> out;
  for (const auto& e : store.entries) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    for (int64_t i = 0; i < e.value.size(); ++i) out.push_back(e.value.at(i));
  }
  return out;
}

Dataset toy_classification(uint64_t seed = 0) {
  return make_toys("two_moons", 400, 0.1, seed);
}

NatPnConfig toy_config(const Dataset& d) {
  NatPnConfig cfg;
  cfg.family = family_for(d);
  cfg.input_dim = static_cast<int>(d.dim());
  cfg.latent_dim = 4;
  cfg.encoder_hidden = {16};
  cfg.flow_spec = "radial-4";
  return cfg;
}

TrainConfig quick_train(uint64_t seed = 0) {
  TrainConfig tc;
  tc.lr = 5e-3;
  tc.batch_size = 128;
  tc.max_epochs = 40;
  tc.patience = 40;
  tc.warmup_steps = 30;
  tc.finetune_steps = 20;
  tc.seed = seed;
  return tc;
}

}  // namespace

TEST_CASE("adam on trivial objectives") {
  // single step on f(w) = w from zero moments moves by exactly lr
  {
    ParamStore store;
    int i = store.add("w", Tensor({1, 1}, {0.7}));
    Adam opt;
    opt.lr = 0.1;
    opt.t = 1;
    opt.step_entry(store[i], Tensor({1, 1}, {1.0}));
    CHECK(store[i].value.at(0) == doctest::Approx(0.7 - 0.1).epsilon(1e-6));
  }
  // zero gradient leaves the parameter untouched
  {
    ParamStore store;
    int i = store.add("w", Tensor({1, 1}, {0.7}));
    Adam opt;
    opt.t = 1;
    opt.step_entry(store[i], Tensor({1, 1}, {0.0}));
    CHECK(store[i].value.at(0) == 0.7);
  }
  // non-finite gradients name the parameter
  {
    ParamStore store;
    int i = store.add("enc.l0.w", Tensor({1, 1}, {0.0}));
    Adam opt;
    opt.t = 1;
    try {
      opt.step_entry(store[i], Tensor({1, 1}, {std::nan("")}));
      FAIL("expected training_error");
    } catch (const training_error& e) {
      CHECK(std::string(e.what()).find("enc.l0.w") != std::string::npos);
    }
  }
}

TEST_CASE("adam minimizes a quadratic bowl") {
  // f(w) = 0.5 * sum w_i^2, gradient w; 2000 steps from (3, -2)
  ParamStore store;
  int i = store.add("w", Tensor({1, 2}, {3.0, -2.0}));
  Adam opt;
  opt.lr = 0.05;
  for (int s = 1; s <= 2000; ++s) {
    opt.t = s;
    opt.step_entry(store[i], store[i].value.clone());
  }
  CHECK(std::abs(store[i].value.at(0)) < 1e-3);
  CHECK(std::abs(store[i].value.at(1)) < 1e-3);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  TrainConfig bad = tc;
  bad.lr = 0.5;  // outside the sanctioned range without the override
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad.allow_lr_outside_grid = true;
  CHECK_NOTHROW(bad.validate());
  bad = tc;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = tc;
  bad.max_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("fit improves the validation loss and fills the run record") {
  Dataset d = toy_classification();
  NatPnModel model(toy_config(d), 1);
  double before = evaluate_loss(model, d.X_val, d.y_val);
  RunRecord rec = fit(model, d, quick_train(1));
  double after = evaluate_loss(model, d.X_val, d.y_val);
  CHECK(after < before);
  CHECK(rec.best_epoch >= 0);
  CHECK(rec.warmup_trace.size() == 30);
  CHECK(!rec.train_loss.empty());
  CHECK(rec.train_loss.size() == rec.val_loss.size());
  CHECK(rec.finetune_trace.size() == 20);
  CHECK(rec.wall_time_sec >= 0.0);
  // warm-up improves the flow likelihood front to back
  CHECK(rec.warmup_trace.back() > rec.warmup_trace.front());
}

TEST_CASE("fit is deterministic: identical seeds give bit-identical parameters") {
  Dataset d = toy_classification();
  NatPnModel a(toy_config(d), 3);
  NatPnModel b(toy_config(d), 3);
  TrainConfig tc = quick_train(3);
  tc.max_epochs = 10;
  fit(a, d, tc);
  fit(b, d, tc);
  REQUIRE(a.params().size() == b.params().size());
  for (int i = 0; i < a.params().size(); ++i) {
    const auto& ea = a.params()[i];
    const auto& eb = b.params()[i];
    REQUIRE(ea.value.size() == eb.value.size());
    for (int64_t j = 0; j < ea.value.size(); ++j) REQUIRE(ea.value.at(j) == eb.value.at(j));
  }
}

TEST_CASE("warm-up and fine-tune phases only touch flow parameters") {
  Dataset d = toy_classification();
  NatPnModel model(toy_config(d), 5);
  auto enc0 = snapshot_bytes(model.params(), "enc.");
  auto dec0 = snapshot_bytes(model.params(), "dec.");
  auto flow0 = snapshot_bytes(model.params(), "flow.");
  TrainConfig tc = quick_train(5);
  tc.max_epochs = 0;  // skip the joint phase entirely
  fit(model, d, tc);
  CHECK(snapshot_bytes(model.params(), "enc.") == enc0);
  CHECK(snapshot_bytes(model.params(), "dec.") == dec0);
  CHECK(snapshot_bytes(model.params(), "flow.") != flow0);
}

TEST_CASE("early stopping keeps the best validation parameters") {
  Dataset d = toy_classification();
  NatPnModel model(toy_config(d), 7);
  TrainConfig tc = quick_train(7);
  tc.max_epochs = 60;
  tc.patience = 5;
  tc.finetune_steps = 0;
  RunRecord rec = fit(model, d, tc);
  // the model's final validation loss equals the recorded best epoch's loss
  double final_val = evaluate_loss(model, d.X_val, d.y_val);
  CHECK(final_val == doctest::Approx(rec.best_val_loss).epsilon(1e-9));
  CHECK(rec.best_epoch < static_cast<int>(rec.val_loss.size()));
  // and it is the minimum of the trace
  double mn = 1e300;
  for (double v : rec.val_loss) mn = std::min(mn, v);
  CHECK(rec.best_val_loss == doctest::Approx(mn).epsilon(1e-12));
}

TEST_CASE("grid search selects by validation loss and writes the leaderboard") {
  Dataset d = toy_classification();
  NatPnConfig base = toy_config(d);
  TrainConfig tc = quick_train(2);
  tc.max_epochs = 8;
  tc.warmup_steps = 10;
  tc.finetune_steps = 0;

  std::vector<GridCell> cells = {
      {4, "radial-4", 1e-5, 5e-3},
      {4, "radial-4", 0.0, 5e-3},
  };
  std::string csv = "grid_test.csv";
  GridResult res = grid_search(cells, d, base, tc, csv, 2);
  REQUIRE(res.rows.size() == 2);
  double best = 1e300;
  for (const auto& r : res.rows) {
    CHECK(!r.failed);
    best = std::min(best, r.val_loss);
  }
  CHECK(res.best.val_loss == doctest::Approx(best));

  std::ifstream is(csv);
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "latent_dim,flow_spec,entropy_weight,lr,val_loss,test_metric,wall_time_sec,seed,status,"
        "error");
  int lines = 0;
  for (std::string line; std::getline(is, line);)
    if (!line.empty()) ++lines;
  CHECK(lines == 2);
  std::remove(csv.c_str());
}

TEST_CASE("grid search survives a failing cell") {
  Dataset d = toy_classification();
  NatPnConfig base = toy_config(d);
  TrainConfig tc = quick_train(2);
  tc.max_epochs = 4;
  tc.warmup_steps = 5;
  tc.finetune_steps = 0;
  tc.allow_lr_outside_grid = true;

  std::vector<GridCell> cells = {
      {4, "radial-4", 1e-5, 5e-3},
      {4, "bogus-flow", 1e-5, 5e-3},  // make_flow rejects this spec string
  };
  GridResult res = grid_search(cells, d, base, tc, "", 1);
  REQUIRE(res.rows.size() == 2);
  CHECK(!res.rows[0].failed);
  CHECK(res.rows[1].failed);
  CHECK(!res.rows[1].error.empty());
  CHECK(res.best.cell.flow_spec == "radial-4");
}

TEST_CASE("loss targets and task-family mapping") {
  Dataset d = toy_classification();
  CHECK(family_for(d).kind == FamilyKind::Categorical);
  Tensor y({3, 1}, {0.0, 1.0, 1.0});
  Tensor t = loss_targets(y, make_categorical(2));
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 2);
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(1, 1) == 1.0);
  CHECK(t.at(2, 0) == 0.0);
  Tensor tr = loss_targets(y, make_normal());
  CHECK(tr.cols() == 1);
  CHECK(tr.at(2, 0) == 1.0);

  Dataset r = make_toys("sine_regression", 200, 0.1, 0);
  CHECK(family_for(r).kind == FamilyKind::Normal);
}
