#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "natpn/data.hpp"
#include "natpn/model.hpp"  // config_error
#include "natpn/rng.hpp"

using namespace natpn;

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path);
  os << content;
}

struct TmpFile {
  std::string path;
  explicit TmpFile(std::string p, const std::string& content) : path(std::move(p)) {
    write_file(path, content);
  }
  ~TmpFile() { std::remove(path.c_str()); }
};

Tensor column(const Tensor& X, int64_t c) {
  Tensor out({X.rows(), 1});
  for (int64_t i = 0; i < X.rows(); ++i) out.at(i, 0) = X.at(i, c);
  return out;
}

}  // namespace

TEST_CASE("csv loading round-trips values and respects the schema") {
  TmpFile f("ds_basic.csv",
            "a,b,drop_me,y\n"
            "1.0,2.0,9,10.5\n"
            "2.0,3.0,9,11.5\n"
            "3.0,4.0,9,12.5\n"
            "4.0,5.0,9,13.5\n"
            "5.0,6.0,9,14.5\n"
            "6.0,7.0,9,15.5\n"
            "7.0,8.0,9,16.5\n"
            "8.0,9.0,9,17.5\n"
            "9.0,10.0,9,18.5\n"
            "10.0,11.0,9,19.5\n");
  CsvSchema schema;
  schema.target_column = "y";
  schema.task = TaskKind::Regression;
  schema.drop_columns = {"drop_me"};
  SplitSpec split;
  split.seed = 1;
  Dataset d = load_csv(f.path, schema, split);
  CHECK(d.name == "ds_basic");
  CHECK(d.X_raw.rows() == 10);
  CHECK(d.X_raw.cols() == 2);
  REQUIRE(d.feature_names == std::vector<std::string>{"a", "b"});
  // raw values preserved
  CHECK(d.X_raw.at(0, 0) == 1.0);
  CHECK(d.X_raw.at(9, 1) == 11.0);
  CHECK(d.y_raw[4] == 14.5);
  // 70/15/15 with floors: 7/1 and remaining 2 rows cover everything
  CHECK(d.train_idx.size() == 7);
  CHECK(d.train_idx.size() + d.val_idx.size() + d.test_idx.size() == 10);
}

TEST_CASE("csv errors carry a locus") {
  // non-numeric cell
  {
    TmpFile f("ds_badcell.csv", "a,y\n1.0,2.0\nfoo,3.0\n");
    CsvSchema s;
    s.target_column = "y";
    try {
      load_csv(f.path, s, SplitSpec{});
      FAIL("expected ingestion_error");
    } catch (const ingestion_error& e) {
      std::string msg = e.what();
      CHECK(msg.find("row") != std::string::npos);
      CHECK(msg.find("a") != std::string::npos);
    }
  }
  // ragged row
  {
    TmpFile f("ds_ragged.csv", "a,b,y\n1,2,3\n1,2\n");
    CsvSchema s;
    s.target_column = "y";
    CHECK_THROWS_AS(load_csv(f.path, s, SplitSpec{}), ingestion_error);
  }
  // missing target column
  {
    TmpFile f("ds_notarget.csv", "a,b\n1,2\n");
    CsvSchema s;
    s.target_column = "y";
    CHECK_THROWS_AS(load_csv(f.path, s, SplitSpec{}), ingestion_error);
  }
  // missing file
  {
    CsvSchema s;
    s.target_column = "y";
    CHECK_THROWS_AS(load_csv("no_such_file_anywhere.csv", s, SplitSpec{}), ingestion_error);
  }
}

TEST_CASE("standardization uses train statistics only") {
  Rng rng(3);
  int64_t N = 400;
  Tensor X({N, 2});
  std::vector<double> y(N);
  for (int64_t i = 0; i < N; ++i) {
    X.at(i, 0) = 5.0 + 2.0 * rng.normal();
    X.at(i, 1) = -1.0 + 0.5 * rng.normal();
    y[i] = 100.0 + 10.0 * rng.normal();
  }
  SplitSpec split;
  split.seed = 9;
  Dataset d = build_dataset("synth", TaskKind::Regression, X.clone(), y, {"x0", "x1"}, split);

  // train features have mean ~0 and std ~1 exactly (they define the stats)
  for (int64_t c = 0; c < 2; ++c) {
    Tensor col = column(d.X_train, c);
    double m = 0.0;
    for (int64_t i = 0; i < col.rows(); ++i) m += col.at(i, 0);
    m /= col.rows();
    double v = 0.0;
    for (int64_t i = 0; i < col.rows(); ++i) v += (col.at(i, 0) - m) * (col.at(i, 0) - m);
    v /= col.rows();
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::sqrt(v) == doctest::Approx(1.0).epsilon(1e-10));
  }
  // val/test are transformed with the same stats, not re-centered:
  // reconstruct raw values and compare
  for (size_t k = 0; k < d.val_idx.size(); ++k) {
    int64_t ri = d.val_idx[k];
    for (int64_t c = 0; c < 2; ++c) {
      double recon = d.X_val.at(static_cast<int64_t>(k), c) * d.feat_std[c] + d.feat_mean[c];
      CHECK(recon == doctest::Approx(d.X_raw.at(ri, c)).epsilon(1e-10));
    }
  }
  // regression target scaled by train stats, reversible
  for (size_t k = 0; k < d.test_idx.size(); ++k) {
    int64_t ri = d.test_idx[k];
    double recon = d.destandardize_target(d.y_test.at(static_cast<int64_t>(k), 0));
    CHECK(recon == doctest::Approx(d.y_raw[ri]).epsilon(1e-10));
  }
}

TEST_CASE("classification and count targets are not scaled") {
  Rng rng(4);
  int64_t N = 300;
  Tensor X({N, 2});
  std::vector<double> y(N);
  for (int64_t i = 0; i < N; ++i) {
    X.at(i, 0) = rng.normal();
    X.at(i, 1) = rng.normal();
    y[i] = static_cast<double>(rng.index(3));
  }
  Dataset d = build_dataset("cls", TaskKind::Classification, X.clone(), y, {"x0", "x1"},
                            SplitSpec{});
  CHECK(d.num_classes == 3);
  CHECK(d.target_mean == 0.0);
  CHECK(d.target_std == 1.0);
  std::set<double> seen;
  for (int64_t i = 0; i < d.y_train.rows(); ++i) seen.insert(d.y_train.at(i, 0));
  for (double v : seen) CHECK((v == 0.0 || v == 1.0 || v == 2.0));
}

TEST_CASE("constant features get a unit standard deviation floor") {
  int64_t N = 100;
  Tensor X({N, 2});
  std::vector<double> y(N);
  Rng rng(8);
  for (int64_t i = 0; i < N; ++i) {
    X.at(i, 0) = 7.0;  // constant
    X.at(i, 1) = rng.normal();
    y[i] = rng.normal();
  }
  Dataset d = build_dataset("const", TaskKind::Regression, X.clone(), y, {"c", "x"}, SplitSpec{});
  CHECK(d.feat_std[0] == 1.0);
  for (int64_t i = 0; i < d.X_train.rows(); ++i) CHECK(d.X_train.at(i, 0) == 0.0);
}

TEST_CASE("splits are deterministic, disjoint, and exhaustive") {
  Rng rng(5);
  int64_t N = 1000;
  Tensor X({N, 3});
  std::vector<double> y(N);
  for (int64_t i = 0; i < X.size(); ++i) X.at(i) = rng.normal();
  for (int64_t i = 0; i < N; ++i) y[i] = rng.normal();
  SplitSpec split;
  split.seed = 42;
  Dataset a = build_dataset("s", TaskKind::Regression, X.clone(), y, {"a", "b", "c"}, split);
  Dataset b = build_dataset("s", TaskKind::Regression, X.clone(), y, {"a", "b", "c"}, split);
  CHECK(a.train_idx == b.train_idx);
  CHECK(a.val_idx == b.val_idx);
  CHECK(a.test_idx == b.test_idx);

  CHECK(a.train_idx.size() == 700);
  CHECK(a.val_idx.size() == 150);
  CHECK(a.test_idx.size() == 150);
  std::set<int64_t> all;
  for (auto v : a.train_idx) all.insert(v);
  for (auto v : a.val_idx) all.insert(v);
  for (auto v : a.test_idx) all.insert(v);
  CHECK(all.size() == static_cast<size_t>(N));
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == N - 1);

  // a different seed permutes differently
  split.seed = 43;
  Dataset c = build_dataset("s", TaskKind::Regression, X.clone(), y, {"a", "b", "c"}, split);
  CHECK(c.train_idx != a.train_idx);
}

TEST_CASE("two moons toy") {
  Dataset d = make_toys("two_moons", 1000, 0.05, 7);
  CHECK(d.task == TaskKind::Classification);
  CHECK(d.num_classes == 2);
  CHECK(d.X_raw.rows() == 1000);
  CHECK(d.X_raw.cols() == 2);
  // both classes present and roughly balanced
  int64_t pos = 0;
  for (double v : d.y_raw) pos += (v == 1.0);
  CHECK(pos > 400);
  CHECK(pos < 600);
  // 1-nearest-neighbor on raw coordinates separates the classes almost
  // perfectly at low noise
  int64_t correct = 0;
  for (int64_t i = 0; i < 200; ++i) {
    double best = 1e300;
    int64_t arg = -1;
    for (int64_t j = 0; j < 1000; ++j) {
      if (j == i) continue;
      double dx = d.X_raw.at(i, 0) - d.X_raw.at(j, 0);
      double dy = d.X_raw.at(i, 1) - d.X_raw.at(j, 1);
      double dist = dx * dx + dy * dy;
      if (dist < best) {
        best = dist;
        arg = j;
      }
    }
    correct += (d.y_raw[static_cast<size_t>(arg)] == d.y_raw[static_cast<size_t>(i)]);
  }
  CHECK(correct >= 195);
  // determinism
  Dataset e = make_toys("two_moons", 1000, 0.05, 7);
  for (int64_t i = 0; i < d.X_raw.size(); ++i) CHECK(d.X_raw.at(i) == e.X_raw.at(i));
}

TEST_CASE("sine regression toy") {
  Dataset d = make_toys("sine_regression", 800, 0.05, 3);
  CHECK(d.task == TaskKind::Regression);
  CHECK(d.X_raw.cols() == 1);
  // targets track a bounded smooth curve: |y| bounded by amplitude + noise
  for (double v : d.y_raw) CHECK(std::abs(v) < 3.0);
  // local smoothness: nearby x values give nearby y on average
  CHECK_THROWS(make_toys("no_such_toy", 10, 0.1, 0));
}

TEST_CASE("oodom_scale and gaussian_noise sets") {
  Dataset base = make_toys("two_moons", 500, 0.1, 1);
  OodSpec spec;
  spec.kind = "oodom_scale";
  spec.scale = 255.0;
  Dataset d = make_ood(base, spec);
  REQUIRE(d.ood_sets.size() == 1);
  CHECK(d.ood_sets[0].X.rows() == d.X_test.rows());
  for (int64_t i = 0; i < d.ood_sets[0].X.size(); ++i)
    CHECK(d.ood_sets[0].X.at(i) == doctest::Approx(255.0 * d.X_test.at(i)).epsilon(1e-12));
  // base splits untouched
  CHECK(d.train_idx == base.train_idx);

  OodSpec g;
  g.kind = "gaussian_noise";
  g.sigma = 2.0;
  g.n = 256;
  Dataset d2 = make_ood(d, g);
  REQUIRE(d2.ood_sets.size() == 2);
  CHECK(d2.ood_sets[1].X.rows() == 256);
  CHECK(d2.ood_sets[1].X.cols() == base.dim());
  double m = 0.0;
  for (int64_t i = 0; i < d2.ood_sets[1].X.size(); ++i) m += d2.ood_sets[1].X.at(i);
  m /= d2.ood_sets[1].X.size();
  CHECK(std::abs(m) < 0.5);

  OodSpec bad;
  bad.kind = "nonsense";
  CHECK_THROWS_AS(make_ood(base, bad), config_error);
}

TEST_CASE("left-out category rebuilds splits without the held-out class") {
  Rng rng(11);
  int64_t N = 600;
  Tensor X({N, 2});
  std::vector<double> y(N);
  for (int64_t i = 0; i < N; ++i) {
    int cls = static_cast<int>(rng.index(3));
    X.at(i, 0) = cls + 0.1 * rng.normal();
    X.at(i, 1) = rng.normal();
    y[i] = cls;
  }
  Dataset base = build_dataset("lo", TaskKind::Classification, X.clone(), y, {"x0", "x1"},
                               SplitSpec{});
  OodSpec spec;
  spec.kind = "left_out_category";
  spec.values = {2.0};
  Dataset d = make_ood(base, spec);
  // no held-out class remains in any split
  auto no2 = [&](const Tensor& yt) {
    for (int64_t i = 0; i < yt.rows(); ++i) CHECK(yt.at(i, 0) != 2.0);
  };
  no2(d.y_train);
  no2(d.y_val);
  no2(d.y_test);
  CHECK(d.num_classes == 2);
  REQUIRE(d.ood_sets.size() == 1);
  // the OOD set holds every row of the held-out class
  int64_t held = 0;
  for (double v : y) held += (v == 2.0);
  CHECK(d.ood_sets[0].X.rows() == held);
  // and is standardized with the retained-data statistics: feature 0 of
  // class 2 sits far above the retained mean
  double m = 0.0;
  for (int64_t i = 0; i < d.ood_sets[0].X.rows(); ++i) m += d.ood_sets[0].X.at(i, 0);
  m /= d.ood_sets[0].X.rows();
  CHECK(m > 1.0);
}

TEST_CASE("left-out attribute value splits per value") {
  Rng rng(13);
  int64_t N = 800;
  Tensor X({N, 2});
  std::vector<double> y(N);
  for (int64_t i = 0; i < N; ++i) {
    double season = static_cast<double>(rng.index(4));
    X.at(i, 0) = season;
    X.at(i, 1) = season * 2.0 + rng.normal();
    y[i] = X.at(i, 1) + 0.1 * rng.normal();
  }
  Dataset base = build_dataset("seasons", TaskKind::Regression, X.clone(), y,
                               {"season", "temp"}, SplitSpec{});
  OodSpec spec;
  spec.kind = "left_out_attribute_value";
  spec.attribute = "season";
  spec.values = {0.0, 3.0};
  Dataset d = make_ood(base, spec);
  REQUIRE(d.ood_sets.size() == 2);
  // the filter column is dropped everywhere
  CHECK(std::find(d.feature_names.begin(), d.feature_names.end(), "season") ==
        d.feature_names.end());
  CHECK(d.dim() == 1);
  // retained rows are exactly those with seasons 1 and 2, OOD sets hold
  // the rest partitioned by value
  int64_t n_keep = 0, n_s0 = 0, n_s3 = 0;
  for (int64_t i = 0; i < N; ++i) {
    double s = X.at(i, 0);
    if (s == 1.0 || s == 2.0) ++n_keep;
    if (s == 0.0) ++n_s0;
    if (s == 3.0) ++n_s3;
  }
  CHECK(d.X_raw.rows() == n_keep);
  CHECK(d.ood_sets[0].X.rows() == n_s0);
  CHECK(d.ood_sets[1].X.rows() == n_s3);
  // each OOD set is named after its value
  CHECK(d.ood_sets[0].name.find("season") != std::string::npos);
  CHECK(d.ood_sets[0].name != d.ood_sets[1].name);

  OodSpec bad = spec;
  bad.attribute = "nonexistent";
  CHECK_THROWS_AS(make_ood(base, bad), config_error);
}

TEST_CASE("degenerate inputs are rejected") {
  Tensor X({3, 1}, {1.0, 2.0, 3.0});
  std::vector<double> y = {1.0, 2.0, 3.0};
  // three rows cannot fill a 70/15/15 split with a nonempty train set;
  // tiny-but-valid is fine, empty splits are not
  CHECK_THROWS_AS(
      build_dataset("tiny", TaskKind::Regression, X.clone(), {1.0}, {"x"}, SplitSpec{}),
      ingestion_error);  // y length mismatch
  CHECK_THROWS_AS(task_from_name("bogus"), ingestion_error);
  CHECK(std::string(task_name(TaskKind::Count)) == "count");
  CHECK(task_from_name("classification") == TaskKind::Classification);
}
