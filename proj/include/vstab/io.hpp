#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "vstab/core.hpp"
#include "vstab/downstream.hpp"

namespace vstab {

inline constexpr int kManifestSchemaVersion = 1;
inline constexpr std::uint32_t kBlobVersion = 1;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// Embedding blob ("VSEB"): 4 magic bytes, u32 version, u64 rows, u64 dims,
// then rows*dims float32 values, row-major, everything little-endian.
std::string encode_vseb(const Eigen::MatrixXd& rows);
Eigen::MatrixXd decode_vseb(std::string_view bytes, std::string_view context);
void write_vseb(const std::filesystem::path& path, const Eigen::MatrixXd& rows);
Eigen::MatrixXd read_vseb(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view contents);

struct LoadOptions {
  /// L2-normalize every embedding row at ingest.
  bool normalize = true;
};

/// Reads a manifest and its blobs; throws ValidationError naming the scene
/// and featurizer on any inconsistency.
Dataset load_dataset(const std::filesystem::path& manifest, const LoadOptions& options = {});

/// Writes manifest.json plus one blob per (scene, featurizer) under blobs/.
/// Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Bank files are JSON ({featurizer_id, labels, blob}) next to a VSEB blob.
void write_label_bank(const LabelEmbeddingBank& bank, const std::filesystem::path& json_path);
LabelEmbeddingBank read_label_bank(const std::filesystem::path& json_path);

struct ReferenceAnnotation {
  ViewSet positive;  // annotated accidental
  ViewSet negative;  // annotated not accidental
};

/// CSV with header scene_id,view_id,is_accidental (0/1/true/false).
ReferenceAnnotation read_reference_annotations(const std::filesystem::path& csv);

/// CSV with header featurizer_id,scene_id,view_id,category.
void write_ground_truth(const std::map<std::string, std::map<ViewKey, Category>>& truth,
                        const std::filesystem::path& csv);

}  // namespace vstab
