// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// if any criterion fails.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "oracles.hpp"
#include "vstab/agreement.hpp"
#include "vstab/cluster.hpp"
#include "vstab/downstream.hpp"
#include "vstab/instability.hpp"
#include "vstab/io.hpp"
#include "vstab/pipeline.hpp"
#include "vstab/stability_classifier.hpp"
#include "vstab/svm.hpp"
#include "vstab/synth.hpp"

using namespace vstab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd gaussian(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Percentile at which the expected planted fraction sits just above tau.
double matched_percentile(const SynthConfig& cfg) {
  return 100.0 * (1.0 - cfg.accidental_rate - cfg.ood_rate);
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> n_dist(2, 100), d_dist(1, 64);
  std::uniform_real_distribution<double> radius(2.0, 60.0);
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t mismatched_presence = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto scene = oracle::random_scene(rng, n_dist(rng), d_dist(rng));
    ScoringConfig cfg;
    cfg.radius = radius(rng);
    const auto got = instability_scores(scene, "f", cfg);
    const auto want = oracle::brute_force_scores(scene, "f", cfg.radius);
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i].has_value() != want[i].has_value()) ++mismatched_presence;
      else if (got[i]) worst = std::max(worst, std::abs(*got[i] - *want[i]));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && mismatched_presence == 0 && secs < 10.0,
          fmt::format("200 scenes, max |diff| {:.3g}, scored-set mismatches {}, {:.2f}s", worst,
                      mismatched_presence, secs)};
}

Outcome trivial_stability() {
  std::mt19937_64 rng(7);
  std::size_t nonzero = 0, unstable = 0, views = 0;
  const std::vector<double> percentiles{1.0, 25.0, 50.0, 90.0, 97.0, 99.0, 99.9};
  for (int trial = 0; trial < 20; ++trial) {
    Dataset ds;
    for (int s = 0; s < 5; ++s) {
      auto scene = oracle::random_scene(rng, 10 + static_cast<std::size_t>(rng() % 60), 16,
                                        "s" + std::to_string(s));
      auto& rows = scene.embeddings.at("f").rows;
      rows = rows.row(0).replicate(rows.rows(), 1);
      ds.scenes.push_back(std::move(scene));
    }
    for (double p : percentiles) {
      ScoringConfig cfg;
      cfg.radius = 40.0;
      cfg.percentile = p;
      const auto table = build_instability_table(ds, "f", cfg);
      for (const auto& r : table.rows) {
        ++views;
        if (r.score && *r.score != 0.0) ++nonzero;
        if (r.unstable) ++unstable;
      }
    }
  }
  return {nonzero == 0 && unstable == 0,
          fmt::format("{} view-evaluations over 7 percentiles: {} nonzero scores, {} unstable",
                      views, nonzero, unstable)};
}

Outcome threshold_budget() {
  std::mt19937_64 rng(97);
  double worst_slack = -1.0;
  bool ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    Dataset ds;
    const int scenes = 1 + static_cast<int>(rng() % 8);
    for (int s = 0; s < scenes; ++s) {
      ds.scenes.push_back(oracle::random_scene(rng, 5 + rng() % 95, 1 + rng() % 32,
                                               "s" + std::to_string(s)));
    }
    ScoringConfig cfg;
    cfg.radius = 30.0;
    cfg.percentile = 97.0;
    const auto table = build_instability_table(ds, "f", cfg);
    const auto unstable = static_cast<double>(table.unstable_views().size());
    const auto scored = static_cast<double>(table.scored);
    const double bound = 0.03 + 1.0 / scored;
    const double frac = unstable / scored;
    worst_slack = std::max(worst_slack, frac - bound);
    if (frac > bound) ok = false;
  }
  return {ok, fmt::format("50 datasets, max(fraction - bound) = {:.4f}", worst_slack)};
}

Outcome synthetic_recovery() {
  const auto t0 = Clock::now();
  std::size_t split_correct = 0;
  double min_recall = 1.0, min_precision = 1.0;
  std::size_t tp_all = 0, planted_all = 0, flagged_all = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    SynthConfig cfg;
    cfg.separation = 5.0;
    cfg.seed = 1000 + trial;
    const auto out = generate(cfg);
    ScoringConfig sc;
    sc.percentile = matched_percentile(cfg);
    for (const auto& fid : out.dataset.featurizer_ids()) {
      const auto table = build_instability_table(out.dataset, fid, sc);
      ViewSet planted = out.truth_set(fid, Category::accidental);
      const ViewSet ood = out.truth_set(fid, Category::ood);
      planted.insert(ood.begin(), ood.end());
      const ViewSet flagged = table.unstable_views();
      std::size_t tp = 0;
      for (const auto& k : flagged) tp += planted.count(k);
      tp_all += tp;
      planted_all += planted.size();
      flagged_all += flagged.size();
      min_recall = std::min(min_recall, static_cast<double>(tp) / static_cast<double>(planted.size()));
      min_precision =
          std::min(min_precision, flagged.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(flagged.size()));

      if (fid != out.dataset.featurizer_ids().front()) continue;
      std::vector<ViewKey> keys;
      std::vector<Eigen::RowVectorXd> rows;
      for (const auto& r : table.rows) {
        if (!r.unstable) continue;
        keys.emplace_back(r.scene_id, r.view_id);
        rows.push_back(out.dataset.scene(r.scene_id).embedding(fid).rows.row(static_cast<Eigen::Index>(r.ordinal)));
      }
      Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
      const auto split = split_accidental_ood(x, trial);
      const ViewSet truth_acc = out.truth_set(fid, Category::accidental);
      bool correct = true;
      for (std::size_t i = 0; i < keys.size(); ++i) {
        if (split.is_accidental(i) != (truth_acc.count(keys[i]) > 0)) correct = false;
      }
      if (correct) ++split_correct;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = min_recall >= 0.90 && min_precision >= 0.80 && split_correct >= 95 && secs < 60.0;
  return {ok, fmt::format("100 trials x 3 featurizers at separation 5, percentile {:.0f}: min recall "
                          "{:.3f}, min precision {:.3f} (pooled {:.3f}/{:.3f}); split correct "
                          "{}/100; {:.1f}s",
                          matched_percentile(SynthConfig{}), min_recall, min_precision,
                          static_cast<double>(tp_all) / static_cast<double>(planted_all),
                          static_cast<double>(tp_all) / static_cast<double>(flagged_all),
                          split_correct, secs)};
}

// Collected from every SVM fit in this binary for the solver criterion.
std::vector<SvmTrainReport> g_svm_reports;

Outcome classifier_sanity() {
  double min_acc = 100.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = 300 + seed;
    const auto out = generate(cfg);
    ScoringConfig sc;
    sc.percentile = matched_percentile(cfg);
    const auto table = build_instability_table(out.dataset, synth_featurizer_id(0), sc);
    SvmParams params;
    params.seed = seed;
    const auto rep = evaluate_stability_classifier(out.dataset, table,
                                                   scene_split(out.dataset, 0.8, seed), params);
    g_svm_reports.push_back(rep.training);
    min_acc = std::min(min_acc, rep.accuracy);
  }

  // Same protocol with the stability labels permuted across scored views.
  // The unweighted fit is a diagnostic only and does not affect the verdict.
  double sum_acc = 0.0, sum_majority = 0.0, worst_gap = 0.0, sum_unweighted = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = 400 + seed;
    const auto out = generate(cfg);
    ScoringConfig sc;
    sc.percentile = matched_percentile(cfg);
    auto table = build_instability_table(out.dataset, synth_featurizer_id(0), sc);
    std::vector<std::size_t> scored;
    std::vector<std::pair<bool, bool>> flags;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      if (!table.rows[r].score) continue;
      scored.push_back(r);
      flags.emplace_back(table.rows[r].unstable, table.rows[r].nms_kept);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(flags.begin(), flags.end(), rng);
    for (std::size_t i = 0; i < scored.size(); ++i) {
      table.rows[scored[i]].unstable = flags[i].first;
      table.rows[scored[i]].nms_kept = flags[i].second;
    }
    SvmParams params;
    params.seed = seed;
    const auto rep = evaluate_stability_classifier(out.dataset, table,
                                                   scene_split(out.dataset, 0.8, seed), params);
    g_svm_reports.push_back(rep.training);
    params.balanced_class_weights = false;
    const auto unweighted = evaluate_stability_classifier(out.dataset, table,
                                                          scene_split(out.dataset, 0.8, seed), params);
    g_svm_reports.push_back(unweighted.training);
    sum_unweighted += unweighted.accuracy;
    sum_acc += rep.accuracy;
    sum_majority += rep.majority_rate;
    worst_gap = std::max(worst_gap, std::abs(rep.accuracy - rep.majority_rate));
  }
  const double mean_gap = std::abs(sum_acc - sum_majority) / 10.0;
  return {min_acc >= 95.0 && mean_gap <= 5.0,
          fmt::format("separable: min test accuracy {:.2f}% over 10 seeds; shuffled: mean accuracy "
                      "{:.2f}% vs majority {:.2f}% (|gap| {:.2f}, worst seed {:.2f}); "
                      "unweighted-SVM diagnostic {:.2f}%",
                      min_acc, sum_acc / 10.0, sum_majority / 10.0, mean_gap, worst_gap,
                      sum_unweighted / 10.0)};
}

double acc_at(const std::vector<CategoryAccuracy>& rows, Category c, std::size_t k) {
  for (const auto& r : rows) {
    if (r.category != c) continue;
    for (const auto& [kk, a] : r.accuracy_at) {
      if (kk == k) return a;
    }
  }
  return -1.0;
}

Outcome downstream_ordering() {
  bool ordered = true, monotone = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthConfig cfg;
    cfg.seed = 500 + seed;
    cfg.n_scenes = 50;  // about 20 planted views per category on the probe's test side
    const auto out = generate(cfg);
    PipelineConfig pc;
    pc.seed = seed;
    pc.percentile = matched_percentile(cfg);
    pc.ks = {1, 2, 3, 5};
    for (const auto& b : out.banks) pc.banks.emplace(b.featurizer_id, b);
    const auto bundle = run_pipeline(out.dataset, pc, Stage::all);
    for (const auto& rep : bundle.featurizers) {
      for (const auto* rows : {&*rep.zero_shot, &*rep.probe}) {
        const double s = acc_at(*rows, Category::stable, 1);
        const double o = acc_at(*rows, Category::ood, 1);
        const double a = acc_at(*rows, Category::accidental, 1);
        if (!(s > o && o > a)) {
          ordered = false;
          detail += fmt::format(" [seed {} {} {}: {:.1f}/{:.1f}/{:.1f}]", seed, rep.featurizer_id,
                                rows == &*rep.zero_shot ? "zero-shot" : "probe", s, o, a);
        }
      }
      for (const auto& r : *rep.zero_shot) {
        for (std::size_t i = 1; i < r.accuracy_at.size(); ++i) {
          if (r.accuracy_at[i].second < r.accuracy_at[i - 1].second) monotone = false;
        }
      }
      if (seed == 0 && rep.featurizer_id == "synth_f0") {
        detail = fmt::format("seed 0 synth_f0 acc@1 stable/ood/accidental zero-shot "
                             "{:.1f}/{:.1f}/{:.1f}, probe {:.1f}/{:.1f}/{:.1f}",
                             acc_at(*rep.zero_shot, Category::stable, 1),
                             acc_at(*rep.zero_shot, Category::ood, 1),
                             acc_at(*rep.zero_shot, Category::accidental, 1),
                             acc_at(*rep.probe, Category::stable, 1),
                             acc_at(*rep.probe, Category::ood, 1),
                             acc_at(*rep.probe, Category::accidental, 1)) + detail;
      }
    }
  }
  return {ordered && monotone,
          fmt::format("5 seeds x 3 featurizers x (zero-shot, probe): ordering {}, acc@k monotone {}; {}",
                      ordered ? "holds" : "violated", monotone ? "yes" : "no", detail)};
}

Outcome agreement_signal() {
  double acc_sum = 0.0, ood_sum = 0.0;
  const int runs = 5;
  for (int seed = 0; seed < runs; ++seed) {
    SynthConfig cfg;
    cfg.seed = 600 + static_cast<std::uint64_t>(seed);
    cfg.n_featurizers = 4;
    const auto out = generate(cfg);
    PipelineConfig pc;
    pc.seed = static_cast<std::uint64_t>(seed);
    pc.percentile = matched_percentile(cfg);
    const auto bundle = run_pipeline(out.dataset, pc, Stage::agree);
    acc_sum += (*bundle.agreement->mean)[1];
    ood_sum += (*bundle.agreement->mean)[2];
  }
  const double acc = acc_sum / runs, ood = ood_sum / runs;
  return {acc >= 2.0 * ood,
          fmt::format("4 featurizers, 5 seeds: mean accidental IoU {:.3f}, mean ood IoU {:.3f}", acc, ood)};
}

Outcome solver_suites() {
  std::mt19937_64 rng(808);
  std::vector<std::string> failures;

  // k-means: monotone inertia and exhaustive optimum on <= 12 points.
  std::size_t kmeans_bad = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(rng() % 9);
    const std::size_t k = 2 + static_cast<std::size_t>(trial % 2);
    const Eigen::MatrixXd x = gaussian(rng, n, 1 + static_cast<Eigen::Index>(rng() % 4));
    const auto r = kmeans_fit(x, {.k = k, .seed = static_cast<std::uint64_t>(trial), .restarts = 20});
    for (std::size_t t = 1; t < r.inertia_history.size(); ++t) {
      if (r.inertia_history[t] > r.inertia_history[t - 1] + 1e-12) ++kmeans_bad;
    }
    const double best = oracle::exhaustive_min_inertia(x, k);
    if (std::abs(r.inertia - best) > 1e-9 * std::max(1.0, best)) ++kmeans_bad;
  }
  if (kmeans_bad) failures.push_back(fmt::format("k-means {}", kmeans_bad));

  // Silhouette vs brute force.
  double sil_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 60);
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % std::min<std::size_t>(4, static_cast<std::size_t>(n) - 1));
    const Eigen::MatrixXd x = gaussian(rng, n, 1 + static_cast<Eigen::Index>(rng() % 8));
    std::vector<std::size_t> a(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = i < k ? i : rng() % k;
    const auto got = silhouette_per_cluster(x, a, k);
    const auto want = oracle::brute_force_silhouette_clusters(x, a, k);
    for (std::size_t c = 0; c < k; ++c) sil_worst = std::max(sil_worst, std::abs(got[c] - want[c]));
  }
  if (sil_worst > 1e-9) failures.push_back(fmt::format("silhouette {:.3g}", sil_worst));

  // PCA vs Jacobi eigendecomposition.
  double ortho_worst = 0.0, evr_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index n = d + 1 + static_cast<Eigen::Index>(rng() % 30);
    const Eigen::MatrixXd x = gaussian(rng, n, d);
    const auto q = static_cast<std::size_t>(1 + rng() % static_cast<std::size_t>(d));
    const auto p = pca_project(x, q);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const auto [vals, vecs] = oracle::jacobi_eigen(centered.transpose() * centered / static_cast<double>(n - 1));
    const auto qi = static_cast<Eigen::Index>(q);
    ortho_worst = std::max(ortho_worst, (p.components * p.components.transpose() - Eigen::MatrixXd::Identity(qi, qi)).cwiseAbs().maxCoeff());
    for (Eigen::Index c = 0; c < qi; ++c) {
      evr_worst = std::max(evr_worst, std::abs(p.explained_variance_ratio(c) - vals(c) / vals.sum()));
    }
  }
  if (ortho_worst > 1e-6 || evr_worst > 1e-6) {
    failures.push_back(fmt::format("pca {:.3g}/{:.3g}", ortho_worst, evr_worst));
  }

  // SMO exit state on random problems plus every classifier fit above.
  std::vector<SvmTrainReport> reports = g_svm_reports;
  for (int trial = 0; trial < 40; ++trial) {
    const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng() % 200);
    const Eigen::MatrixXd x = gaussian(rng, n, 2 + static_cast<Eigen::Index>(rng() % 10));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) + 0.3 * x(i, 1) * x(i, 1) > 0.4 ? 1 : -1;
    y[0] = 1;
    y[1] = -1;
    SvmParams params;
    params.seed = static_cast<std::uint64_t>(trial);
    params.c = trial % 2 ? 1.0 : 20.0;
    reports.push_back(svm_train(x, y, params).report);
  }
  const SvmParams defaults;
  std::size_t smo_bad = 0;
  double worst_gap = 0.0, worst_eq = 0.0;
  for (const auto& r : reports) {
    worst_gap = std::max(worst_gap, r.kkt_gap);
    worst_eq = std::max(worst_eq, r.max_equality_residual);
    if (!r.converged || r.kkt_gap >= defaults.tol || r.max_equality_residual > 1e-8 ||
        r.max_box_violation > 0.0) {
      ++smo_bad;
    }
  }
  if (smo_bad) failures.push_back(fmt::format("smo {}", smo_bad));

  std::string fails;
  for (const auto& f : failures) fails += " " + f;
  return {failures.empty(),
          fmt::format("k-means 60 exhaustive instances; silhouette max diff {:.2g}; PCA ortho {:.2g}, "
                      "EVR {:.2g}; SMO {} fits, max KKT gap {:.2g}, max |sum a*y| {:.2g}{}",
                      sil_worst, ortho_worst, evr_worst, reports.size(), worst_gap, worst_eq,
                      failures.empty() ? "" : "; failing:" + fails)};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / fmt::format("vstab_accept_{}", std::random_device{}());
  SynthConfig sc;
  sc.seed = 77;
  sc.n_scenes = 12;
  const auto out = generate(sc, 3);
  const fs::path manifest = save_dataset(out.dataset, root / "data");
  const Dataset ds = load_dataset(manifest);

  auto run = [&](std::size_t workers, const std::string& tag) {
    PipelineConfig pc;
    pc.seed = 11;
    pc.workers = workers;
    for (const auto& b : out.banks) pc.banks.emplace(b.featurizer_id, b);
    write_reports(run_pipeline(ds, pc), pc, root / tag, Stage::all);
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(root / tag)) files[e.path().filename().string()] = read_file(e.path());
    return files;
  };
  const auto a = run(1, "w1a");
  const auto b = run(1, "w1b");
  const auto c = run(4, "w4");
  const auto d = run(8, "w8");
  std::error_code ec;
  fs::remove_all(root, ec);
  const bool ok = !a.empty() && a == b && a == c && a == d;
  return {ok, fmt::format("{} report files; workers 1/1/4/8 byte-identical: {}", a.size(), ok ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"oracle-equivalence", oracle_equivalence},
      {"trivial-stability", trivial_stability},
      {"threshold-budget", threshold_budget},
      {"synthetic-recovery", synthetic_recovery},
      {"classifier-sanity", classifier_sanity},
      {"downstream-ordering", downstream_ordering},
      {"agreement-signal", agreement_signal},
      {"solver-suites", solver_suites},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failed),
                           criteria.size())
            << std::endl;
  return failed == 0 ? 0 : 1;
}
