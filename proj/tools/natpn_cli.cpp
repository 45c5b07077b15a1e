// natpn command-line front end: train, eval, sweep, plot, ood-report.
// Exit codes: 0 success, 2 user/config error, 3 numeric/training failure.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "natpn/data.hpp"
#include "natpn/metrics.hpp"
#include "natpn/model.hpp"
#include "natpn/training.hpp"

namespace fs = std::filesystem;
using natpn::Dataset;
using natpn::NatPnModel;
using nlohmann::json;

namespace {

json load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw natpn::config_error("manifest not found: " + path);
  json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw natpn::config_error(std::string("manifest parse error: ") + e.what());
  }
  return j;
}

Dataset dataset_from_manifest(const json& m, uint64_t seed_override, bool has_override) {
  if (!m.contains("dataset")) throw natpn::config_error("manifest: missing 'dataset' block");
  const json& d = m["dataset"];
  natpn::SplitSpec split;
  split.seed = d.value("split_seed", 0ULL);
  if (has_override) split.seed = seed_override;

  Dataset ds;
  std::string kind = d.value("kind", "csv");
  if (kind == "toy") {
    ds = natpn::make_toys(d.at("toy").get<std::string>(), d.value("n", 2000LL),
                          d.value("noise", 0.1), split.seed);
  } else if (kind == "csv") {
    natpn::CsvSchema schema;
    const json& s = d.at("schema");
    schema.target_column = s.at("target").get<std::string>();
    schema.task = natpn::task_from_name(s.at("task").get<std::string>());
    if (s.contains("features"))
      schema.feature_columns = s["features"].get<std::vector<std::string>>();
    if (s.contains("drop")) schema.drop_columns = s["drop"].get<std::vector<std::string>>();
    std::string path = d.at("path").get<std::string>();
    if (!fs::exists(path)) throw natpn::config_error("dataset path does not exist: " + path);
    ds = natpn::load_csv(path, schema, split);
  } else {
    throw natpn::config_error("manifest: unknown dataset kind '" + kind + "'");
  }

  if (m.contains("ood")) {
    for (const json& o : m["ood"]) {
      natpn::OodSpec spec;
      spec.kind = o.at("kind").get<std::string>();
      spec.name = o.value("name", "");
      if (o.contains("values")) spec.values = o["values"].get<std::vector<double>>();
      spec.attribute = o.value("attribute", "");
      spec.scale = o.value("scale", 255.0);
      spec.sigma = o.value("sigma", 1.0);
      spec.n = o.value("n", 1024LL);
      spec.seed = split.seed + 7919;
      ds = natpn::make_ood(ds, spec);
    }
  }
  return ds;
}

natpn::NatPnConfig model_config_from_manifest(const json& m, const Dataset& ds) {
  natpn::NatPnConfig cfg;
  cfg.family = natpn::family_for(ds);
  const json mm = m.value("model", json::object());
  if (mm.contains("family")) {
    std::string fam = mm["family"].get<std::string>();
    cfg.family.kind = natpn::family_from_name(fam);
    if (cfg.family.kind == natpn::FamilyKind::Categorical) cfg.family.num_classes = ds.num_classes;
  }
  cfg.input_dim = static_cast<int>(ds.dim());
  cfg.latent_dim = mm.value("latent_dim", 8);
  if (mm.contains("encoder_hidden"))
    cfg.encoder_hidden = mm["encoder_hidden"].get<std::vector<int>>();
  cfg.flow_spec = mm.value("flow", "radial-8");
  cfg.entropy_weight = mm.value("entropy_weight", 1e-5);
  cfg.budget_mode = natpn::budget_mode_from_name(mm.value("budget", "dimension_scaled"));
  cfg.train_size = ds.X_train.rows();
  if (mm.contains("prior")) {
    cfg.prior.chi = mm["prior"].at("chi").get<std::vector<double>>();
    cfg.prior.n = mm["prior"].at("n").get<double>();
  }
  return cfg;
}

natpn::TrainConfig train_config_from_manifest(const json& m, uint64_t seed) {
  natpn::TrainConfig tc;
  const json t = m.value("train", json::object());
  tc.lr = t.value("lr", 1e-3);
  tc.batch_size = t.value("batch_size", 512);
  tc.max_epochs = t.value("max_epochs", 500);
  tc.patience = t.value("patience", 50);
  tc.warmup_steps = t.value("warmup_steps", 200);
  tc.finetune_steps = t.value("finetune_steps", 200);
  tc.allow_lr_outside_grid = t.value("allow_lr_outside_grid", false);
  tc.seed = seed;
  return tc;
}

std::vector<uint64_t> seeds_from_manifest(const json& m, bool has_override, uint64_t override_seed) {
  if (has_override) return {override_seed};
  std::vector<uint64_t> seeds;
  if (m.contains("seeds")) seeds = m["seeds"].get<std::vector<uint64_t>>();
  if (seeds.empty()) seeds.push_back(0);
  return seeds;
}

std::string dataset_tag(const json& m) {
  const json& d = m.at("dataset");
  if (d.value("kind", "csv") == "toy") return d.at("toy").get<std::string>();
  std::string p = d.at("path").get<std::string>();
  std::string base = fs::path(p).stem().string();
  return base;
}

// ---- evaluation ----

natpn::EvalReport evaluate(const NatPnModel& model, const Dataset& ds,
                           const natpn::PosteriorPrediction& pred, const std::string& ckpt_name,
                           uint64_t seed,
                           const std::vector<natpn::PosteriorPrediction>* ood_preds) {
  natpn::EvalReport rep;
  rep.dataset = ds.name;
  rep.checkpoint = ckpt_name;
  rep.family = natpn::family_name(model.config().family.kind);
  rep.seed = seed;

  std::vector<double> points = model.point_predictions(pred);
  std::vector<double> truth;
  for (int64_t i = 0; i < ds.y_test.rows(); ++i) truth.push_back(ds.y_test.at(i, 0));

  if (ds.task == natpn::TaskKind::Classification) {
    rep.accuracy_value = natpn::accuracy(points, truth);
    std::vector<int> labels;
    for (double t : truth) labels.push_back(static_cast<int>(std::llround(t)));
    rep.brier_value = natpn::brier(pred.chi_post, labels);
  } else {
    std::vector<double> p = points, t = truth;
    for (auto& v : p) v = ds.destandardize_target(v);
    for (auto& v : t) v = ds.destandardize_target(v);
    rep.rmse_value = natpn::rmse(p, t);
    std::vector<double> cdfs;
    for (int64_t i = 0; i < pred.size(); ++i) {
      auto predictive = natpn::posterior_predictive(pred.row(i), model.config().family);
      cdfs.push_back(std::clamp(predictive->cdf(truth[static_cast<size_t>(i)]), 0.0, 1.0));
    }
    rep.calibration_value = natpn::regression_calibration(cdfs);
  }

  if (ood_preds) {
    std::vector<double> id_epist, id_alea;
    for (int64_t i = 0; i < pred.size(); ++i) {
      natpn::Uncertainty u = model.uncertainties(pred, i);
      id_epist.push_back(u.epistemic);
      id_alea.push_back(-u.aleatoric);  // higher = more confident = more ID
    }
    for (size_t k = 0; k < ds.ood_sets.size(); ++k) {
      const auto& op = (*ood_preds)[k];
      std::vector<double> ood_epist, ood_alea;
      for (int64_t i = 0; i < op.size(); ++i) {
        natpn::Uncertainty u = model.uncertainties(op, i);
        ood_epist.push_back(u.epistemic);
        ood_alea.push_back(-u.aleatoric);
      }
      natpn::OodScores s;
      s.epist_aucpr = natpn::auc_pr(id_epist, ood_epist);
      s.epist_aucroc = natpn::auc_roc(id_epist, ood_epist);
      s.alea_aucpr = natpn::auc_pr(id_alea, ood_alea);
      s.alea_aucroc = natpn::auc_roc(id_alea, ood_alea);
      rep.ood[ds.ood_sets[k].name] = s;
    }
  }
  return rep;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw natpn::config_error("cannot write " + path.string());
  os << text;
}

// Simple grayscale-to-color PPM heatmap.
void write_ppm(const fs::path& path, const std::vector<std::vector<double>>& grid) {
  double lo = 1e300, hi = -1e300;
  for (const auto& row : grid)
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi <= lo) hi = lo + 1.0;
  std::ostringstream os;
  os << "P6\n" << grid[0].size() << " " << grid.size() << "\n255\n";
  for (const auto& row : grid)
    for (double v : row) {
      double t = (v - lo) / (hi - lo);
      auto r = static_cast<unsigned char>(255.0 * t);
      auto b = static_cast<unsigned char>(255.0 * (1.0 - t));
      auto g = static_cast<unsigned char>(80.0 * (1.0 - std::abs(2.0 * t - 1.0)));
      os.put(static_cast<char>(r)).put(static_cast<char>(g)).put(static_cast<char>(b));
    }
  write_text(path, os.str());
}

// ---- commands ----

int cmd_train(const json& m, const std::string& out_dir, bool has_seed, uint64_t seed) {
  Dataset ds = dataset_from_manifest(m, 0, false);
  natpn::NatPnConfig mc = model_config_from_manifest(m, ds);
  std::string tag = dataset_tag(m);
  for (uint64_t s : seeds_from_manifest(m, has_seed, seed)) {
    natpn::TrainConfig tc = train_config_from_manifest(m, s);
    NatPnModel model(mc, s);
    natpn::RunRecord rec = natpn::fit(model, ds, tc);

    fs::path ckpt = fs::path(out_dir) / (tag + "_seed" + std::to_string(s) + ".ckpt");
    fs::create_directories(out_dir);
    model.save(ckpt.string());

    json rj;
    rj["seed"] = s;
    rj["checkpoint"] = ckpt.string();
    rj["best_epoch"] = rec.best_epoch;
    rj["best_val_loss"] = rec.best_val_loss;
    rj["train_loss"] = rec.train_loss;
    rj["val_loss"] = rec.val_loss;
    rj["warmup_trace"] = rec.warmup_trace;
    rj["finetune_trace"] = rec.finetune_trace;
    rj["wall_time_sec"] = rec.wall_time_sec;
    rj["evidence_clamp_events"] = model.evidence_clamp_count();
    write_text(fs::path(out_dir) / (tag + "_seed" + std::to_string(s) + "_run.json"),
               rj.dump(2) + "\n");
    std::cout << "trained seed " << s << ": best val loss " << rec.best_val_loss << " at epoch "
              << rec.best_epoch << ", checkpoint " << ckpt.string() << "\n";
  }
  return 0;
}

int cmd_eval(const json& m, const std::string& out_dir, std::vector<std::string> ckpts,
             bool ensemble, bool has_seed, uint64_t seed) {
  if (ckpts.empty()) throw natpn::config_error("eval: at least one --checkpoint required");
  Dataset ds = dataset_from_manifest(m, seed, has_seed);
  fs::create_directories(out_dir);

  std::vector<NatPnModel> models;
  for (const auto& c : ckpts) models.push_back(NatPnModel::load(c));
  for (const auto& model : models) {
    bool ok = false;
    switch (ds.task) {
      case natpn::TaskKind::Classification:
        ok = model.config().family.kind == natpn::FamilyKind::Categorical &&
             model.config().family.num_classes == ds.num_classes;
        break;
      case natpn::TaskKind::Regression: ok = model.config().family.kind == natpn::FamilyKind::Normal; break;
      case natpn::TaskKind::Count: ok = model.config().family.kind == natpn::FamilyKind::Poisson; break;
    }
    if (!ok || model.config().input_dim != ds.dim())
      throw natpn::config_error("eval: checkpoint family/shape does not match the dataset task");
  }

  std::vector<natpn::EvalReport> reports;
  if (ensemble) {
    std::vector<natpn::PosteriorPrediction> member_test, member_ood_flat;
    std::vector<std::vector<natpn::PosteriorPrediction>> member_ood(models.size());
    for (size_t k = 0; k < models.size(); ++k) {
      member_test.push_back(models[k].forward(ds.X_test));
      for (const auto& o : ds.ood_sets) member_ood[k].push_back(models[k].forward(o.X));
    }
    const auto& prior = models[0].config().prior;
    const auto& fam = models[0].config().family;
    natpn::PosteriorPrediction combined = natpn::ensemble_combine(member_test, prior, fam);
    std::vector<natpn::PosteriorPrediction> ood_combined;
    for (size_t o = 0; o < ds.ood_sets.size(); ++o) {
      std::vector<natpn::PosteriorPrediction> members;
      for (size_t k = 0; k < models.size(); ++k) members.push_back(member_ood[k][o]);
      ood_combined.push_back(natpn::ensemble_combine(members, prior, fam));
    }
    reports.push_back(evaluate(models[0], ds, combined, "ensemble", 0, &ood_combined));
  } else {
    for (size_t k = 0; k < models.size(); ++k) {
      natpn::PosteriorPrediction pred = models[k].forward(ds.X_test);
      std::vector<natpn::PosteriorPrediction> ood_preds;
      for (const auto& o : ds.ood_sets) ood_preds.push_back(models[k].forward(o.X));
      reports.push_back(evaluate(models[k], ds, pred, ckpts[k], k, &ood_preds));
    }
  }

  std::ostringstream csv;
  csv << reports[0].csv_header() << "\n";
  for (const auto& r : reports) csv << r.csv_row() << "\n";
  write_text(fs::path(out_dir) / "eval.csv", csv.str());

  json all = json::array();
  for (const auto& r : reports) all.push_back(json::parse(r.to_json()));

  if (reports.size() > 1) {
    // mean +/- standard error of the mean across checkpoints
    auto agg = [&](auto getter) {
      std::vector<double> vals;
      for (const auto& r : reports) {
        double v = getter(r);
        if (!std::isnan(v)) vals.push_back(v);
      }
      json j;
      if (vals.empty()) return j;
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      double sem = vals.size() > 1
                       ? std::sqrt(var / static_cast<double>(vals.size() - 1)) /
                             std::sqrt(static_cast<double>(vals.size()))
                       : 0.0;
      j["mean"] = mean;
      j["sem"] = sem;
      return j;
    };
    json summary;
    summary["rmse"] = agg([](const natpn::EvalReport& r) { return r.rmse_value; });
    summary["accuracy"] = agg([](const natpn::EvalReport& r) { return r.accuracy_value; });
    summary["brier"] = agg([](const natpn::EvalReport& r) { return r.brier_value; });
    summary["calibration"] = agg([](const natpn::EvalReport& r) { return r.calibration_value; });
    json wrapped;
    wrapped["reports"] = all;
    wrapped["aggregate"] = summary;
    write_text(fs::path(out_dir) / "eval.json", wrapped.dump(2) + "\n");
  } else {
    write_text(fs::path(out_dir) / "eval.json", all[0].dump(2) + "\n");
  }
  std::cout << "wrote " << (fs::path(out_dir) / "eval.json").string() << "\n";
  return 0;
}

int cmd_sweep(const json& m, const std::string& out_dir, bool has_seed, uint64_t seed) {
  Dataset ds = dataset_from_manifest(m, 0, false);
  natpn::NatPnConfig base_mc = model_config_from_manifest(m, ds);
  uint64_t s = has_seed ? seed : seeds_from_manifest(m, false, 0)[0];
  natpn::TrainConfig base_tc = train_config_from_manifest(m, s);

  const json sw = m.value("sweep", json::object());
  std::vector<int> dims = sw.value("latent_dims", std::vector<int>{base_mc.latent_dim});
  std::vector<std::string> flows =
      sw.value("flows", std::vector<std::string>{base_mc.flow_spec});
  std::vector<double> lambdas = sw.value("lambdas", std::vector<double>{base_mc.entropy_weight});
  std::vector<double> lrs = sw.value("lrs", std::vector<double>{base_tc.lr});

  std::vector<natpn::GridCell> cells;
  for (int h : dims)
    for (const auto& f : flows)
      for (double lam : lambdas)
        for (double lr : lrs) cells.push_back({h, f, lam, lr});

  int workers = 1;
  if (const char* w = std::getenv("NATPN_WORKERS")) workers = std::max(1, std::atoi(w));

  fs::create_directories(out_dir);
  std::string csv = (fs::path(out_dir) / "sweep.csv").string();
  natpn::GridResult res = natpn::grid_search(cells, ds, base_mc, base_tc, csv, workers);
  std::cout << "best cell: H=" << res.best.cell.latent_dim << " flow=" << res.best.cell.flow_spec
            << " lambda=" << res.best.cell.entropy_weight << " lr=" << res.best.cell.lr
            << " val_loss=" << res.best.val_loss << "\nleaderboard: " << csv << "\n";
  return 0;
}

int cmd_plot(const json& m, const std::string& out_dir, const std::string& ckpt, bool has_seed,
             uint64_t seed) {
  if (ckpt.empty()) throw natpn::config_error("plot: --checkpoint required");
  Dataset ds = dataset_from_manifest(m, seed, has_seed);
  if (ds.dim() > 2) throw natpn::config_error("plot: input dimension must be <= 2");
  NatPnModel model = NatPnModel::load(ckpt);
  if (model.config().input_dim != ds.dim())
    throw natpn::config_error("plot: checkpoint input width does not match the dataset");
  fs::create_directories(out_dir);

  if (ds.dim() == 2) {
    constexpr int G = 64;
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (int64_t i = 0; i < ds.X_train.rows(); ++i) {
      x0 = std::min(x0, ds.X_train.at(i, 0));
      x1 = std::max(x1, ds.X_train.at(i, 0));
      y0 = std::min(y0, ds.X_train.at(i, 1));
      y1 = std::max(y1, ds.X_train.at(i, 1));
    }
    double mx = 0.5 * (x1 - x0), my = 0.5 * (y1 - y0);
    x0 -= mx; x1 += mx; y0 -= my; y1 += my;

    natpn::Tensor grid({G * G, 2});
    for (int r = 0; r < G; ++r)
      for (int c = 0; c < G; ++c) {
        grid.at(r * G + c, 0) = x0 + (x1 - x0) * c / (G - 1);
        grid.at(r * G + c, 1) = y0 + (y1 - y0) * r / (G - 1);
      }
    natpn::PosteriorPrediction pred = model.forward(grid);
    std::vector<std::vector<double>> alea(G, std::vector<double>(G));
    std::vector<std::vector<double>> predictive(G, std::vector<double>(G));
    std::vector<std::vector<double>> evidence(G, std::vector<double>(G));
    std::ostringstream csv;
    csv.precision(10);
    csv << "x0,x1,aleatoric,predictive,evidence\n";
    for (int r = 0; r < G; ++r)
      for (int c = 0; c < G; ++c) {
        natpn::Uncertainty u = model.uncertainties(pred, r * G + c);
        alea[r][c] = u.aleatoric;
        predictive[r][c] = u.predictive;
        evidence[r][c] = u.epistemic;
        csv << grid.at(r * G + c, 0) << "," << grid.at(r * G + c, 1) << "," << u.aleatoric << ","
            << u.predictive << "," << u.epistemic << "\n";
      }
    write_ppm(fs::path(out_dir) / "aleatoric.ppm", alea);
    write_ppm(fs::path(out_dir) / "predictive.ppm", predictive);
    write_ppm(fs::path(out_dir) / "evidence.ppm", evidence);
    write_text(fs::path(out_dir) / "grid.csv", csv.str());
  } else {
    constexpr int G = 256;
    double x0 = 1e300, x1 = -1e300;
    for (int64_t i = 0; i < ds.X_train.rows(); ++i) {
      x0 = std::min(x0, ds.X_train.at(i, 0));
      x1 = std::max(x1, ds.X_train.at(i, 0));
    }
    double mx = 0.5 * (x1 - x0);
    x0 -= mx; x1 += mx;
    natpn::Tensor grid({G, 1});
    for (int i = 0; i < G; ++i) grid.at(i, 0) = x0 + (x1 - x0) * i / (G - 1);
    natpn::PosteriorPrediction pred = model.forward(grid);
    std::ostringstream csv;
    csv.precision(10);
    csv << "x,mean,lo,hi,evidence,predictive_entropy\n";
    std::vector<std::vector<double>> band(64, std::vector<double>(G, 0.0));
    double ymin = 1e300, ymax = -1e300;
    std::vector<double> mean(G), lo(G), hi(G);
    for (int i = 0; i < G; ++i) {
      auto row = pred.row(i);
      auto predictive = natpn::posterior_predictive(row, model.config().family);
      natpn::Uncertainty u = model.uncertainties(pred, i);
      auto sp = natpn::to_standard(row, model.config().family);
      double m0 = predictive->mean();
      double sd = model.config().family.kind == natpn::FamilyKind::Normal
                      ? std::sqrt(sp.beta * (1.0 + 1.0 / sp.lambda) / sp.alpha)
                      : std::sqrt(std::max(m0, 1e-12));
      mean[i] = m0;
      lo[i] = m0 - 2 * sd;
      hi[i] = m0 + 2 * sd;
      ymin = std::min(ymin, lo[i]);
      ymax = std::max(ymax, hi[i]);
      csv << grid.at(i, 0) << "," << m0 << "," << lo[i] << "," << hi[i] << "," << u.epistemic
          << "," << u.predictive << "\n";
    }
    for (int i = 0; i < G; ++i) {
      auto to_row = [&](double y) {
        return std::clamp(static_cast<int>((ymax - y) / (ymax - ymin + 1e-300) * 63.0), 0, 63);
      };
      for (int r = to_row(hi[i]); r <= to_row(lo[i]); ++r) band[static_cast<size_t>(r)][static_cast<size_t>(i)] = 0.5;
      band[static_cast<size_t>(to_row(mean[i]))][static_cast<size_t>(i)] = 1.0;
    }
    write_ppm(fs::path(out_dir) / "bands.ppm", band);
    write_text(fs::path(out_dir) / "grid.csv", csv.str());
  }
  std::cout << "wrote plots to " << out_dir << "\n";
  return 0;
}

int cmd_ood_report(const json& m, const std::string& out_dir, const std::string& ckpt,
                   bool has_seed, uint64_t seed) {
  if (ckpt.empty()) throw natpn::config_error("ood-report: --checkpoint required");
  Dataset ds = dataset_from_manifest(m, seed, has_seed);
  if (ds.ood_sets.empty()) throw natpn::config_error("ood-report: manifest defines no OOD sets");
  NatPnModel model = NatPnModel::load(ckpt);
  if (model.config().input_dim != ds.dim())
    throw natpn::config_error("ood-report: checkpoint does not match the dataset width");
  fs::create_directories(out_dir);

  natpn::PosteriorPrediction pred = model.forward(ds.X_test);
  std::vector<natpn::PosteriorPrediction> ood_preds;
  for (const auto& o : ds.ood_sets) ood_preds.push_back(model.forward(o.X));
  natpn::EvalReport rep = evaluate(model, ds, pred, ckpt, 0, &ood_preds);

  std::vector<double> clean_n;
  for (int64_t i = 0; i < pred.size(); ++i) clean_n.push_back(pred.n_post.at(i, 0));
  std::vector<std::vector<double>> shifted;
  for (const auto& op : ood_preds) {
    std::vector<double> v;
    for (int64_t i = 0; i < op.size(); ++i) v.push_back(op.n_post.at(i, 0));
    shifted.push_back(std::move(v));
  }
  rep.confidence_ratios = natpn::confidence_ratio(clean_n, shifted);

  write_text(fs::path(out_dir) / "ood_report.json", rep.to_json() + "\n");
  std::ostringstream csv;
  csv << rep.csv_header() << "\n" << rep.csv_row() << "\n";
  write_text(fs::path(out_dir) / "ood_report.csv", csv.str());
  std::cout << "wrote " << (fs::path(out_dir) / "ood_report.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"natpn: evidential uncertainty models - training, evaluation, and reporting"};
  app.require_subcommand(1);

  std::string manifest_path, out_dir = "out", checkpoint;
  std::vector<std::string> checkpoints;
  uint64_t seed = 0;
  bool ensemble = false;
  bool has_seed = false;

  auto add_common = [&](CLI::App* cmd, bool needs_manifest = true) {
    auto* opt = cmd->add_option("--manifest", manifest_path, "experiment manifest (JSON)");
    if (needs_manifest) opt->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override the manifest seed(s)")->each([&](const std::string&) {
      has_seed = true;
    });
  };

  CLI::App* train = app.add_subcommand("train", "train one model per seed");
  add_common(train);

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints on a dataset");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoints, "checkpoint file (repeatable)");
  eval_cmd->add_option("--checkpoints", checkpoints, "checkpoint files");
  eval_cmd->add_flag("--ensemble", ensemble, "combine checkpoints as a Bayesian ensemble");

  CLI::App* sweep = app.add_subcommand("sweep", "grid search over the manifest sweep block");
  add_common(sweep);

  CLI::App* plot = app.add_subcommand("plot", "uncertainty landscape figures (input dim <= 2)");
  add_common(plot);
  plot->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  CLI::App* oodr = app.add_subcommand("ood-report", "OOD detection scores and confidence ratios");
  add_common(oodr);
  oodr->add_option("--checkpoint", checkpoint, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    json m = load_manifest(manifest_path);
    if (train->parsed()) return cmd_train(m, out_dir, has_seed, seed);
    if (eval_cmd->parsed()) return cmd_eval(m, out_dir, checkpoints, ensemble, has_seed, seed);
    if (sweep->parsed()) return cmd_sweep(m, out_dir, has_seed, seed);
    if (plot->parsed()) return cmd_plot(m, out_dir, checkpoint, has_seed, seed);
    if (oodr->parsed()) return cmd_ood_report(m, out_dir, checkpoint, has_seed, seed);
  } catch (const natpn::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const natpn::ingestion_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const natpn::contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const natpn::dim_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const natpn::training_error& e) {
    std::cerr << "training failure: " << e.what() << "\n";
    return 3;
  } catch (const natpn::domain_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
