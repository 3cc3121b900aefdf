// vstab: viewpoint-stability analytics over precomputed embeddings.
//
// Exit codes: 0 success, 2 validation error, 1 internal error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "vstab/io.hpp"
#include "vstab/pipeline.hpp"
#include "vstab/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct SharedOptions {
  std::string manifest;
  std::string out = "vstab_out";
  std::vector<std::string> featurizers;
  std::optional<double> radius;
  double percentile = 97.0;
  std::uint64_t seed = 0;
  double angle_weight = 1.0;
  std::optional<double> nms_radius;
  std::vector<std::size_t> ks{1, 5, 10};
  std::vector<std::string> label_banks;
  std::string reference;
  std::size_t workers = 1;
  bool raw = false;
};

void add_shared(CLI::App* cmd, SharedOptions& o) {
  cmd->add_option("--manifest", o.manifest, "Dataset manifest (JSON)")->required();
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--featurizer", o.featurizers, "Featurizer id (repeatable; default all)");
  cmd->add_option("--radius", o.radius, "Pose-neighborhood radius (default 1.5x median spacing)");
  cmd->add_option("--percentile", o.percentile, "Instability threshold percentile")
      ->check(CLI::Range(0.0, 100.0));
  cmd->add_option("--seed", o.seed, "Seed for splits, clustering and training");
  cmd->add_option("--angle-weight", o.angle_weight, "Angle weight in full6dof pose distance")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--nms-radius", o.nms_radius, "NMS radius (default: radius)");
  cmd->add_option("--k", o.ks, "Top-k list for zero-shot accuracy")->delimiter(',');
  cmd->add_option("--labels-bank", o.label_banks, "Label-bank JSON (repeatable)");
  cmd->add_option("--reference-annotations", o.reference,
                  "CSV scene_id,view_id,is_accidental");
  cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--raw", o.raw, "Do not L2-normalize embeddings at ingest");
}

vstab::PipelineConfig make_config(const SharedOptions& o) {
  vstab::PipelineConfig cfg;
  cfg.radius = o.radius;
  cfg.percentile = o.percentile;
  cfg.nms_radius = o.nms_radius;
  cfg.angle_weight = o.angle_weight;
  cfg.seed = o.seed;
  cfg.ks = o.ks;
  cfg.featurizers = o.featurizers;
  cfg.workers = o.workers;
  for (const auto& path : o.label_banks) {
    auto bank = vstab::read_label_bank(path);
    const std::string fid = bank.featurizer_id;
    cfg.banks.emplace(fid, std::move(bank));
  }
  if (!o.reference.empty()) cfg.reference = vstab::read_reference_annotations(o.reference);
  return cfg;
}

int run_stage(const SharedOptions& o, vstab::Stage stage) {
  if (stage == vstab::Stage::zeroshot && o.label_banks.empty()) {
    throw vstab::ValidationError("zeroshot needs at least one --labels-bank");
  }
  const vstab::Dataset dataset = vstab::load_dataset(o.manifest, {.normalize = !o.raw});
  const vstab::PipelineConfig cfg = make_config(o);
  const vstab::ReportBundle bundle = vstab::run_pipeline(dataset, cfg, stage);
  for (const auto& rep : bundle.featurizers) {
    for (const auto& w : rep.warnings) std::cerr << "warning: " << rep.featurizer_id << ": " << w << "\n";
  }
  for (const auto& name : vstab::write_reports(bundle, cfg, o.out, stage)) {
    std::cout << (fs::path(o.out) / name).string() << "\n";
  }
  return 0;
}

int run_report(const SharedOptions& o) {
  const vstab::Dataset dataset = vstab::load_dataset(o.manifest, {.normalize = !o.raw});
  const vstab::PipelineConfig cfg = make_config(o);
  const vstab::ReportBundle bundle = vstab::run_pipeline(dataset, cfg, vstab::Stage::all);
  const std::string text = vstab::summary_json(bundle, cfg);
  vstab::write_file(fs::path(o.out) / "summary.json", text);
  std::cout << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viewpoint-stability analytics for image-featurizer embeddings"};
  app.require_subcommand(1);

  vstab::SynthConfig synth_cfg;
  std::string synth_out = "synth_data";
  std::size_t synth_workers = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--seed", synth_cfg.seed, "Generator seed");
  synth->add_option("--scenes", synth_cfg.n_scenes, "Number of scenes");
  synth->add_option("--views", synth_cfg.views_per_scene, "Views per scene");
  synth->add_option("--dims", synth_cfg.dims, "Embedding dimension");
  synth->add_option("--featurizers", synth_cfg.n_featurizers, "Number of synthetic featurizers");
  synth->add_option("--classes", synth_cfg.class_count, "Number of scene classes");
  synth->add_option("--harmonics", synth_cfg.harmonics, "Fourier band limit of background curves");
  synth->add_option("--accidental-rate", synth_cfg.accidental_rate, "Fraction of accidental views");
  synth->add_option("--ood-rate", synth_cfg.ood_rate, "Fraction of OOD views per featurizer");
  synth->add_option("--separation", synth_cfg.separation,
                    "OOD jump over largest background neighbor chord");
  synth->add_option("--workers", synth_workers, "Worker threads")->check(CLI::PositiveNumber);

  struct Sub {
    const char* name;
    const char* help;
    vstab::Stage stage;
  };
  const std::vector<Sub> subs{
      {"score", "Per-view instability scores", vstab::Stage::score},
      {"label", "Scores, percentile threshold and unstable flags", vstab::Stage::label},
      {"nms", "Labels plus non-maximal suppression", vstab::Stage::nms},
      {"cluster", "Accidental / OOD split of unstable views", vstab::Stage::cluster},
      {"pca", "PCA coordinates of labeled views", vstab::Stage::pca},
      {"classify", "Stable/unstable SVM with scene-level split", vstab::Stage::classify},
      {"agree", "Cross-featurizer IoU and reference overlap", vstab::Stage::agree},
      {"zeroshot", "Zero-shot accuracy@k per stability category", vstab::Stage::zeroshot},
      {"probe", "Linear-probe accuracy per stability category", vstab::Stage::probe},
      {"run-all", "Every stage, all reports", vstab::Stage::all},
  };
  SharedOptions shared;
  std::vector<std::pair<CLI::App*, vstab::Stage>> stage_cmds;
  for (const auto& s : subs) {
    auto* cmd = app.add_subcommand(s.name, s.help);
    add_shared(cmd, shared);
    stage_cmds.emplace_back(cmd, s.stage);
  }
  auto* report = app.add_subcommand("report", "Print and save the summary JSON");
  add_shared(report, shared);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      const vstab::SynthOutput out = vstab::generate(synth_cfg, synth_workers);
      const fs::path dir(synth_out);
      std::cout << vstab::save_dataset(out.dataset, dir).string() << "\n";
      vstab::write_ground_truth(out.truth, dir / "ground_truth.csv");
      std::cout << (dir / "ground_truth.csv").string() << "\n";
      for (const auto& bank : out.banks) {
        const fs::path p = dir / "banks" / (bank.featurizer_id + ".json");
        vstab::write_label_bank(bank, p);
        std::cout << p.string() << "\n";
      }
      return 0;
    }
    if (*report) return run_report(shared);
    for (const auto& [cmd, stage] : stage_cmds) {
      if (*cmd) return run_stage(shared, stage);
    }
  } catch (const vstab::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
