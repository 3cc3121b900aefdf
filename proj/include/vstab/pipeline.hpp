#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vstab/cluster.hpp"
#include "vstab/core.hpp"
#include "vstab/downstream.hpp"
#include "vstab/instability.hpp"
#include "vstab/io.hpp"
#include "vstab/stability_classifier.hpp"
#include "vstab/svm.hpp"

namespace vstab {

struct PipelineConfig {
  /// Unset radius means default_radius(dataset).
  std::optional<double> radius;
  double percentile = 97.0;
  std::optional<double> nms_radius;
  double angle_weight = 1.0;
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  std::size_t kmeans_restarts = 10;
  std::size_t pca_components = 2;
  SvmParams svm;
  ProbeConfig probe;
  std::vector<std::size_t> ks{1, 5, 10};
  /// Empty selects every featurizer in the dataset.
  std::vector<std::string> featurizers;
  std::map<std::string, LabelEmbeddingBank> banks;
  std::optional<ReferenceAnnotation> reference;
  /// Does not affect results.
  std::size_t workers = 1;

  ScoringConfig scoring(const Dataset& dataset) const;
};

/// Hash of every result-affecting setting, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg, const Dataset& dataset);

struct FeaturizerReport {
  std::string featurizer_id;
  InstabilityTable table;
  ViewLabelSet labels;
  /// Keys of the unstable views fed to the role split, in table order.
  std::vector<ViewKey> unstable_keys;
  std::optional<RoleSplit> roles;
  /// Keys of the rows of `pca`, in table order.
  std::vector<ViewKey> pca_keys;
  std::optional<PcaProjection> pca;
  std::optional<ClassifierReport> classifier;
  std::optional<std::vector<CategoryAccuracy>> zero_shot;
  std::optional<std::vector<CategoryAccuracy>> probe;
  /// (accidental only, all unstable) overlap with the reference, percent.
  std::optional<std::pair<double, double>> reference_overlap;
  std::vector<std::string> warnings;
};

struct AgreementReport {
  std::vector<std::string> featurizers;
  std::array<Eigen::MatrixXd, 3> pairwise;  // stable, accidental, ood
  std::optional<std::array<double, 3>> mean;
};

struct ReportBundle {
  std::string dataset_id;
  std::string config_hash;
  std::uint64_t seed = 0;
  ScoringConfig scoring;
  std::vector<FeaturizerReport> featurizers;
  std::optional<AgreementReport> agreement;
};

enum class Stage { score, label, nms, cluster, pca, classify, agree, zeroshot, probe, all };

/// Runs every stage up to and including `last` (agree / zeroshot / probe
/// also need the cluster stage). Errors are rethrown prefixed with the stage.
ReportBundle run_pipeline(const Dataset& dataset, const PipelineConfig& cfg,
                          Stage last = Stage::all);

/// Stable / accidental / ood label sets from an instability table and role split.
ViewLabelSet make_label_set(const InstabilityTable& table, const std::vector<ViewKey>& unstable_keys,
                            const std::optional<RoleSplit>& roles);

/// Writes the CSV tables that the bundle has data for, plus summary.json when
/// `summary` is set. Returns the written file names, sorted.
std::vector<std::string> write_reports(const ReportBundle& bundle, const PipelineConfig& cfg,
                                       const std::filesystem::path& out_dir, Stage stage,
                                       bool summary = true);

std::string summary_json(const ReportBundle& bundle, const PipelineConfig& cfg);

}  // namespace vstab
