#include "vstab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "vstab/agreement.hpp"

namespace vstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::score: return "score";
    case Stage::label: return "label";
    case Stage::nms: return "nms";
    case Stage::cluster: return "cluster";
    case Stage::pca: return "pca";
    case Stage::classify: return "classify";
    case Stage::agree: return "agree";
    case Stage::zeroshot: return "zeroshot";
    case Stage::probe: return "probe";
    case Stage::all: return "run-all";
  }
  return "?";
}

// Whether running up to `last` requires computing `part`.
bool needs(Stage last, Stage part) {
  if (last == Stage::all || last == part) return true;
  switch (part) {
    case Stage::score:
    case Stage::label:
    case Stage::nms: return true;
    case Stage::cluster:
      return last == Stage::pca || last == Stage::agree || last == Stage::zeroshot ||
             last == Stage::probe;
    default: return false;
  }
}

template <typename Fn>
auto in_stage(Stage stage, const std::string& featurizer, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("[{}] {}: {}", stage_name(stage), featurizer, e.what()));
  } catch (const std::exception& e) {
    throw std::runtime_error(fmt::format("[{}] {}: {}", stage_name(stage), featurizer, e.what()));
  }
}

std::string num(double v) { return fmt::format("{:.12g}", v); }

}  // namespace

ScoringConfig PipelineConfig::scoring(const Dataset& dataset) const {
  ScoringConfig cfg;
  cfg.radius = radius ? *radius : default_radius(dataset, angle_weight);
  cfg.percentile = percentile;
  cfg.nms_radius = nms_radius;
  cfg.angle_weight = angle_weight;
  cfg.validate();
  return cfg;
}

std::string config_hash(const PipelineConfig& cfg, const Dataset& dataset) {
  const ScoringConfig sc = cfg.scoring(dataset);
  json j{{"radius", sc.radius},
         {"percentile", sc.percentile},
         {"nms_radius", sc.effective_nms_radius()},
         {"angle_weight", sc.angle_weight},
         {"seed", cfg.seed},
         {"split_ratio", cfg.split_ratio},
         {"kmeans_restarts", cfg.kmeans_restarts},
         {"pca_components", cfg.pca_components},
         {"svm", {{"c", cfg.svm.c}, {"gamma", cfg.svm.gamma}, {"tol", cfg.svm.tol},
                  {"max_passes", cfg.svm.max_passes},
                  {"balanced", cfg.svm.balanced_class_weights}}},
         {"probe", {{"epochs", cfg.probe.epochs}, {"lr", cfg.probe.learning_rate},
                    {"batch", cfg.probe.batch_size}}},
         {"ks", cfg.ks},
         {"featurizers", cfg.featurizers}};
  json banks = json::array();
  for (const auto& [fid, bank] : cfg.banks) banks.push_back({fid, bank.labels});
  j["banks"] = banks;
  j["reference"] = cfg.reference ? cfg.reference->positive.size() + cfg.reference->negative.size()
                                 : 0;
  return hex64(fnv1a64(j.dump()));
}

ViewLabelSet make_label_set(const InstabilityTable& table, const std::vector<ViewKey>& unstable_keys,
                            const std::optional<RoleSplit>& roles) {
  ViewLabelSet labels;
  labels.featurizer_id = table.featurizer_id;
  labels.stable = table.stable_views();
  for (std::size_t i = 0; i < unstable_keys.size(); ++i) {
    const bool accidental = roles && roles->is_accidental(i);
    (accidental ? labels.accidental : labels.ood).insert(unstable_keys[i]);
  }
  return labels;
}

ReportBundle run_pipeline(const Dataset& dataset, const PipelineConfig& cfg, Stage last) {
  ReportBundle bundle;
  bundle.dataset_id = dataset.dataset_id;
  bundle.seed = cfg.seed;
  bundle.scoring = cfg.scoring(dataset);
  bundle.config_hash = config_hash(cfg, dataset);

  std::vector<std::string> featurizers = cfg.featurizers;
  const auto available = dataset.featurizer_ids();
  if (featurizers.empty()) featurizers = available;
  for (const auto& fid : featurizers) {
    if (std::find(available.begin(), available.end(), fid) == available.end()) {
      throw ValidationError(fmt::format("unknown featurizer '{}'", fid));
    }
  }
  if (featurizers.empty()) throw ValidationError("dataset has no featurizers");

  std::optional<SplitSpec> split;
  if (needs(last, Stage::classify) || needs(last, Stage::probe)) {
    split = in_stage(Stage::classify, "*",
                     [&] { return scene_split(dataset, cfg.split_ratio, cfg.seed); });
  }
  std::set<std::string> categories;
  for (const auto& s : dataset.scenes) categories.insert(s.category_label);

  for (const auto& fid : featurizers) {
    FeaturizerReport rep;
    rep.featurizer_id = fid;
    rep.table = in_stage(Stage::score, fid, [&] {
      return build_instability_table(dataset, fid, bundle.scoring, cfg.workers);
    });

    if (needs(last, Stage::cluster)) {
      in_stage(Stage::cluster, fid, [&] {
        std::vector<Eigen::RowVectorXd> rows;
        for (const auto& r : rep.table.rows) {
          if (!r.unstable) continue;
          rep.unstable_keys.emplace_back(r.scene_id, r.view_id);
          rows.push_back(dataset.scene(r.scene_id).embedding(fid).rows.row(
              static_cast<Eigen::Index>(r.ordinal)));
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                          rows.empty() ? 0 : rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
        try {
          rep.roles = split_accidental_ood(x, cfg.seed, cfg.kmeans_restarts);
        } catch (const ValidationError& e) {
          rep.warnings.push_back(
              fmt::format("role split skipped ({}); all unstable views labeled ood", e.what()));
        }
      });
    }
    rep.labels = make_label_set(rep.table, rep.unstable_keys, rep.roles);

    if (needs(last, Stage::pca)) {
      in_stage(Stage::pca, fid, [&] {
        std::vector<Eigen::RowVectorXd> rows;
        for (const auto& r : rep.table.rows) {
          if (!r.score) continue;
          rep.pca_keys.emplace_back(r.scene_id, r.view_id);
          rows.push_back(dataset.scene(r.scene_id).embedding(fid).rows.row(
              static_cast<Eigen::Index>(r.ordinal)));
        }
        if (rows.size() < 2) {
          rep.warnings.emplace_back("pca skipped: fewer than two scored views");
          return;
        }
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
        const auto q = std::min<std::size_t>(
            {cfg.pca_components, rows.size() - 1, static_cast<std::size_t>(x.cols())});
        rep.pca = pca_project(x, q);
      });
    }

    if (needs(last, Stage::classify)) {
      rep.classifier = in_stage(Stage::classify, fid, [&] {
        SvmParams params = cfg.svm;
        params.seed = cfg.seed;
        return evaluate_stability_classifier(dataset, rep.table, *split, params);
      });
    }

    if (needs(last, Stage::zeroshot)) {
      if (auto it = cfg.banks.find(fid); it != cfg.banks.end()) {
        rep.zero_shot = in_stage(Stage::zeroshot, fid, [&] {
          ZeroShotTask task{&it->second, cfg.ks};
          return evaluate_by_stability(dataset, rep.labels, task);
        });
      } else {
        rep.warnings.push_back("zero-shot skipped: no label bank for this featurizer");
      }
    }

    if (needs(last, Stage::probe)) {
      if (categories.size() >= 2) {
        rep.probe = in_stage(Stage::probe, fid, [&] {
          ProbeConfig pc = cfg.probe;
          pc.seed = cfg.seed;
          return evaluate_by_stability(dataset, rep.labels, ProbeTask{&*split, pc});
        });
      } else {
        rep.warnings.emplace_back("probe skipped: fewer than two category labels");
      }
    }

    if (needs(last, Stage::agree) && cfg.reference) {
      rep.reference_overlap = in_stage(Stage::agree, fid, [&] {
        const ViewSet all_unstable = rep.table.unstable_views();
        return std::pair{
            overlap_with_reference(rep.labels.accidental, cfg.reference->positive,
                                   cfg.reference->negative),
            overlap_with_reference(all_unstable, cfg.reference->positive, cfg.reference->negative)};
      });
    }
    bundle.featurizers.push_back(std::move(rep));
  }

  if (needs(last, Stage::agree)) {
    bundle.agreement = in_stage(Stage::agree, "*", [&] {
      AgreementReport agreement;
      std::vector<ViewLabelSet> sets;
      for (const auto& rep : bundle.featurizers) {
        agreement.featurizers.push_back(rep.featurizer_id);
        sets.push_back(rep.labels);
      }
      for (std::size_t c = 0; c < all_categories.size(); ++c) {
        agreement.pairwise[c] = pairwise_iou_matrix(sets, all_categories[c]);
      }
      if (sets.size() >= 2) agreement.mean = mean_iou_by_category(sets);
      return agreement;
    });
  }
  return bundle;
}

namespace {

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : columns_(header.size()) {
    add(header);
  }
  void add(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::logic_error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::size_t columns_;
  std::string text_;
};

std::vector<std::string> prefix_header() {
  return {"dataset_id", "featurizer_id", "seed", "config_hash"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string category_of(const ViewLabelSet& labels, const ViewKey& key) {
  for (Category c : all_categories) {
    if (labels.of(c).count(key)) return std::string(to_string(c));
  }
  return "unscored";
}

}  // namespace

std::vector<std::string> write_reports(const ReportBundle& bundle, const PipelineConfig& cfg,
                                       const fs::path& out_dir, Stage stage, bool summary) {
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    write_file(out_dir / name, text);
    written.push_back(name);
  };
  auto prefix = [&](const std::string& fid) {
    return std::vector<std::string>{bundle.dataset_id, fid, std::to_string(bundle.seed),
                                    bundle.config_hash};
  };

  const bool score_only = stage == Stage::score;
  CsvTable classifier(concat(prefix_header(),
                             {"accuracy", "recall_stable", "recall_unstable", "majority_rate",
                              "true_positive", "false_positive", "true_negative",
                              "false_negative", "n_train", "n_train_unstable", "n_test",
                              "smo_iterations", "smo_kkt_gap", "smo_converged"}));
  std::vector<std::string> zs_cols{"category", "n"};
  for (std::size_t k : cfg.ks) zs_cols.push_back(fmt::format("acc_at_{}", k));
  CsvTable zero_shot(concat(prefix_header(), zs_cols));
  CsvTable probe(concat(prefix_header(), {"category", "n", "accuracy"}));
  CsvTable reference(concat(prefix_header(), {"accidental_overlap", "unstable_overlap"}));
  bool any_classifier = false, any_zs = false, any_probe = false, any_ref = false;

  for (const auto& rep : bundle.featurizers) {
    const std::string& fid = rep.featurizer_id;
    {
      CsvTable t(concat(prefix_header(),
                        score_only ? std::vector<std::string>{"scene_id", "view_id", "ordinal",
                                                              "score"}
                                   : std::vector<std::string>{"scene_id", "view_id", "ordinal",
                                                              "score", "threshold", "unstable",
                                                              "nms_kept"}));
      for (const auto& r : rep.table.rows) {
        std::vector<std::string> cells = concat(
            prefix(fid), {r.scene_id, r.view_id, std::to_string(r.ordinal),
                          r.score ? num(*r.score) : std::string()});
        if (!score_only) {
          cells.push_back(num(rep.table.tau));
          cells.emplace_back(r.unstable ? "1" : "0");
          cells.emplace_back(r.nms_kept ? "1" : "0");
        }
        t.add(cells);
      }
      emit(fmt::format("instability_{}.csv", fid), t.text());
    }

    if (needs(stage, Stage::cluster)) {
      CsvTable labels(concat(prefix_header(), {"scene_id", "view_id", "category"}));
      for (const auto& r : rep.table.rows) {
        const ViewKey key{r.scene_id, r.view_id};
        labels.add(concat(prefix(fid), {r.scene_id, r.view_id, category_of(rep.labels, key)}));
      }
      emit(fmt::format("labels_{}.csv", fid), labels.text());

      CsvTable clusters(concat(prefix_header(), {"scene_id", "view_id", "cluster", "role",
                                                 "cluster_silhouette"}));
      for (std::size_t i = 0; i < rep.unstable_keys.size(); ++i) {
        const auto& key = rep.unstable_keys[i];
        if (rep.roles) {
          const std::size_t c = rep.roles->clustering.assignment[i];
          clusters.add(concat(prefix(fid),
                              {key.first, key.second, std::to_string(c),
                               rep.roles->is_accidental(i) ? "accidental" : "ood",
                               num(rep.roles->roles.silhouette_per_cluster[c])}));
        } else {
          clusters.add(concat(prefix(fid), {key.first, key.second, "", "ood", ""}));
        }
      }
      emit(fmt::format("clusters_{}.csv", fid), clusters.text());
    }

    if (rep.pca) {
      std::vector<std::string> cols{"scene_id", "view_id", "category"};
      for (Eigen::Index c = 0; c < rep.pca->projected.cols(); ++c) {
        cols.push_back(fmt::format("pc{}", c + 1));
      }
      CsvTable pca(concat(prefix_header(), cols));
      for (std::size_t i = 0; i < rep.pca_keys.size(); ++i) {
        std::vector<std::string> cells = concat(
            prefix(fid), {rep.pca_keys[i].first, rep.pca_keys[i].second,
                          category_of(rep.labels, rep.pca_keys[i])});
        for (Eigen::Index c = 0; c < rep.pca->projected.cols(); ++c) {
          cells.push_back(num(rep.pca->projected(static_cast<Eigen::Index>(i), c)));
        }
        pca.add(cells);
      }
      emit(fmt::format("pca_{}.csv", fid), pca.text());
    }

    if (rep.classifier) {
      any_classifier = true;
      const auto& c = *rep.classifier;
      classifier.add(concat(
          prefix(fid),
          {num(c.accuracy), num(c.recall_stable), num(c.recall_unstable), num(c.majority_rate),
           std::to_string(c.confusion.true_positive), std::to_string(c.confusion.false_positive),
           std::to_string(c.confusion.true_negative), std::to_string(c.confusion.false_negative),
           std::to_string(c.n_train), std::to_string(c.n_train_unstable), std::to_string(c.n_test),
           std::to_string(c.training.iterations), num(c.training.kkt_gap),
           c.training.converged ? "1" : "0"}));
    }
    if (rep.zero_shot) {
      any_zs = true;
      for (const auto& row : *rep.zero_shot) {
        std::vector<std::string> cells =
            concat(prefix(fid), {std::string(to_string(row.category)), std::to_string(row.n)});
        for (const auto& [k, acc] : row.accuracy_at) cells.push_back(num(acc));
        zero_shot.add(cells);
      }
    }
    if (rep.probe) {
      any_probe = true;
      for (const auto& row : *rep.probe) {
        probe.add(concat(prefix(fid), {std::string(to_string(row.category)),
                                       std::to_string(row.n), num(row.accuracy_at.front().second)}));
      }
    }
    if (rep.reference_overlap) {
      any_ref = true;
      reference.add(concat(prefix(fid), {num(rep.reference_overlap->first),
                                         num(rep.reference_overlap->second)}));
    }
  }

  if (any_classifier) emit("classifier.csv", classifier.text());
  if (any_zs) emit("zeroshot.csv", zero_shot.text());
  if (any_probe) emit("probe.csv", probe.text());
  if (any_ref) emit("reference_overlap.csv", reference.text());

  if (bundle.agreement) {
    const auto& ag = *bundle.agreement;
    const auto f = static_cast<Eigen::Index>(ag.featurizers.size());
    for (std::size_t c = 0; c < all_categories.size(); ++c) {
      CsvTable m(concat(prefix_header(), ag.featurizers));
      for (Eigen::Index i = 0; i < f; ++i) {
        std::vector<std::string> cells = prefix(ag.featurizers[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < f; ++j) cells.push_back(num(ag.pairwise[c](i, j)));
        m.add(cells);
      }
      emit(fmt::format("iou_{}.csv", to_string(all_categories[c])), m.text());
    }
    // Per featurizer: mean IoU against every other featurizer; "all" is the
    // mean over all off-diagonal pairs. A lone featurizer reports its 1x1 entry.
    CsvTable mean(concat(prefix_header(), {"stable", "accidental", "ood"}));
    for (Eigen::Index i = 0; i < f; ++i) {
      std::vector<std::string> cells = prefix(ag.featurizers[static_cast<std::size_t>(i)]);
      for (std::size_t c = 0; c < all_categories.size(); ++c) {
        const auto& mat = ag.pairwise[c];
        const double v = f > 1 ? (mat.row(i).sum() - mat(i, i)) / static_cast<double>(f - 1)
                               : mat(i, i);
        cells.push_back(num(v));
      }
      mean.add(cells);
    }
    std::vector<std::string> all = prefix("all");
    for (std::size_t c = 0; c < all_categories.size(); ++c) {
      all.push_back(num(ag.mean ? (*ag.mean)[c] : ag.pairwise[c](0, 0)));
    }
    mean.add(all);
    emit("iou_mean.csv", mean.text());
  }

  if (summary) {
    written.emplace_back("summary.json");
    std::sort(written.begin(), written.end());
    write_file(out_dir / "summary.json", summary_json(bundle, cfg));
  } else {
    std::sort(written.begin(), written.end());
  }
  return written;
}

std::string summary_json(const ReportBundle& bundle, const PipelineConfig& cfg) {
  json j;
  j["dataset_id"] = bundle.dataset_id;
  j["seed"] = bundle.seed;
  j["config_hash"] = bundle.config_hash;
  j["config"] = {{"radius", bundle.scoring.radius},
                 {"percentile", bundle.scoring.percentile},
                 {"nms_radius", bundle.scoring.effective_nms_radius()},
                 {"angle_weight", bundle.scoring.angle_weight},
                 {"split_ratio", cfg.split_ratio},
                 {"ks", cfg.ks}};
  json feats = json::array();
  for (const auto& rep : bundle.featurizers) {
    json f;
    f["featurizer_id"] = rep.featurizer_id;
    f["threshold"] = rep.table.tau;
    f["scored_views"] = rep.table.scored;
    std::size_t unstable = 0, kept = 0;
    for (const auto& r : rep.table.rows) {
      unstable += r.unstable;
      kept += r.nms_kept;
    }
    f["unstable_views"] = unstable;
    f["nms_kept_views"] = kept;
    f["label_counts"] = {{"stable", rep.labels.stable.size()},
                         {"accidental", rep.labels.accidental.size()},
                         {"ood", rep.labels.ood.size()}};
    if (rep.roles) {
      f["roles"] = {{"accidental_cluster", rep.roles->roles.accidental_cluster},
                    {"ood_cluster", rep.roles->roles.ood_cluster},
                    {"silhouette_per_cluster", rep.roles->roles.silhouette_per_cluster},
                    {"kmeans_inertia", rep.roles->clustering.inertia}};
    }
    if (rep.pca) {
      f["pca_explained_variance_ratio"] = std::vector<double>(
          rep.pca->explained_variance_ratio.data(),
          rep.pca->explained_variance_ratio.data() + rep.pca->explained_variance_ratio.size());
    }
    if (rep.classifier) {
      f["classifier"] = {{"accuracy", rep.classifier->accuracy},
                         {"recall_stable", rep.classifier->recall_stable},
                         {"recall_unstable", rep.classifier->recall_unstable},
                         {"n_train", rep.classifier->n_train},
                         {"n_test", rep.classifier->n_test}};
    }
    auto accuracy_json = [](const std::vector<CategoryAccuracy>& rows) {
      json out = json::object();
      for (const auto& row : rows) {
        json r = {{"n", row.n}};
        for (const auto& [k, acc] : row.accuracy_at) r[fmt::format("acc_at_{}", k)] = acc;
        out[std::string(to_string(row.category))] = r;
      }
      return out;
    };
    if (rep.zero_shot) f["zero_shot"] = accuracy_json(*rep.zero_shot);
    if (rep.probe) f["probe"] = accuracy_json(*rep.probe);
    if (rep.reference_overlap) {
      f["reference_overlap"] = {{"accidental", rep.reference_overlap->first},
                                {"unstable", rep.reference_overlap->second}};
    }
    f["warnings"] = rep.warnings;
    feats.push_back(std::move(f));
  }
  j["featurizers"] = std::move(feats);
  if (bundle.agreement && bundle.agreement->mean) {
    const auto& m = *bundle.agreement->mean;
    j["mean_iou"] = {{"stable", m[0]}, {"accidental", m[1]}, {"ood", m[2]}};
  }
  return j.dump(2) + "\n";
}

}  // namespace vstab
