#include "vstab/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <nlohmann/json.hpp>

namespace vstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "VSEB";
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    out.push_back(static_cast<char>((value >> (8 * b)) & 0xFF));
  }
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    value |= static_cast<T>(static_cast<unsigned char>(bytes[offset + b])) << (8 * b);
  }
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string blob_name(const std::string& scene_id, const std::string& featurizer_id) {
  return fmt::format("blobs/{}__{}.vseb", scene_id, featurizer_id);
}

template <typename T>
T require(const json& j, const char* key, std::string_view context) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{}: missing field '{}'", context, key));
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: bad field '{}': {}", context, key, e.what()));
  }
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

std::string encode_vseb(const Eigen::MatrixXd& rows) {
  std::string out;
  out.reserve(kHeaderBytes + static_cast<std::size_t>(rows.size()) * 4);
  out.append(kMagic);
  put_le<std::uint32_t>(out, kBlobVersion);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(rows.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(rows(i, j))));
    }
  }
  return out;
}

Eigen::MatrixXd decode_vseb(std::string_view bytes, std::string_view context) {
  if (bytes.size() < kHeaderBytes || bytes.substr(0, 4) != kMagic) {
    throw ValidationError(fmt::format("{}: not a VSEB blob", context));
  }
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kBlobVersion) {
    throw ValidationError(fmt::format("{}: unsupported blob version {}", context, version));
  }
  const auto n_rows = get_le<std::uint64_t>(bytes, 8);
  const auto n_dims = get_le<std::uint64_t>(bytes, 16);
  if (n_dims == 0 || n_rows > (bytes.size() / 4) || n_dims > (bytes.size() / 4)) {
    throw ValidationError(fmt::format("{}: implausible blob shape {}x{}", context, n_rows, n_dims));
  }
  const std::uint64_t expected = kHeaderBytes + n_rows * n_dims * 4;
  if (bytes.size() != expected) {
    throw ValidationError(fmt::format("{}: blob holds {} bytes, header {}x{} needs {}", context,
                                      bytes.size(), n_rows, n_dims, expected));
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_dims));
  std::size_t offset = kHeaderBytes;
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      rows(i, j) = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
      offset += 4;
    }
  }
  return rows;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", tmp.string()));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error(fmt::format("short write to '{}'", tmp.string()));
  }
  fs::rename(tmp, path);
}

void write_vseb(const fs::path& path, const Eigen::MatrixXd& rows) {
  write_file(path, encode_vseb(rows));
}

Eigen::MatrixXd read_vseb(const fs::path& path) {
  return decode_vseb(read_file(path), path.string());
}

Dataset load_dataset(const fs::path& manifest, const LoadOptions& options) {
  json doc;
  try {
    doc = json::parse(read_file(manifest));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", manifest.string(), e.what()));
  }
  const std::string ctx = manifest.string();
  const int version = require<int>(doc, "schema_version", ctx);
  if (version != kManifestSchemaVersion) {
    throw ValidationError(fmt::format("{}: unsupported schema_version {}", ctx, version));
  }
  const fs::path root = manifest.parent_path();
  Dataset dataset;
  dataset.dataset_id = require<std::string>(doc, "dataset_id", ctx);
  if (!doc.contains("scenes") || !doc["scenes"].is_array()) {
    throw ValidationError(fmt::format("{}: 'scenes' must be an array", ctx));
  }
  for (const auto& js : doc["scenes"]) {
    SceneCapture scene;
    scene.scene_id = require<std::string>(js, "scene_id", ctx);
    const std::string sctx = fmt::format("scene '{}'", scene.scene_id);
    scene.category_label = require<std::string>(js, "category_label", sctx);
    const PoseMode mode = parse_pose_mode(js.value("pose_mode", std::string("turntable")));
    const auto& views = js.at("views");
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto& jv = views[i];
      const auto az = require<double>(jv, "azimuth", sctx);
      const auto el = require<double>(jv, "elevation", sctx);
      Pose pose = Pose::turntable(az, el);
      if (mode == PoseMode::full6dof) {
        pose = Pose::full6dof(require<std::array<double, 3>>(jv, "position", sctx), az, el);
      }
      scene.views.push_back({require<std::string>(jv, "view_id", sctx), pose, i});
    }
    const auto files = require<std::map<std::string, std::string>>(js, "embedding_files", sctx);
    const auto checksums =
        js.value("embedding_checksums", std::map<std::string, std::string>{});
    for (const auto& [fid, rel] : files) {
      const std::string fctx = fmt::format("scene '{}' featurizer '{}'", scene.scene_id, fid);
      std::string bytes;
      try {
        bytes = read_file(root / rel);
      } catch (const ValidationError&) {
        throw ValidationError(fmt::format("{}: missing blob '{}'", fctx, rel));
      }
      if (auto it = checksums.find(fid); it != checksums.end() && it->second != hex64(fnv1a64(bytes))) {
        throw ValidationError(fmt::format("{}: checksum mismatch for '{}'", fctx, rel));
      }
      EmbeddingMatrix emb;
      emb.featurizer_id = fid;
      emb.rows = decode_vseb(bytes, fctx);
      if (emb.count() != static_cast<Eigen::Index>(scene.views.size())) {
        throw ValidationError(fmt::format("{}: blob has {} rows for {} views", fctx, emb.count(),
                                          scene.views.size()));
      }
      emb.validate(fctx);
      if (options.normalize) emb.normalize_rows();
      scene.embeddings.emplace(fid, std::move(emb));
    }
    dataset.scenes.push_back(std::move(scene));
  }
  dataset.validate();
  return dataset;
}

fs::path save_dataset(const Dataset& dataset, const fs::path& dir) {
  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["dataset_id"] = dataset.dataset_id;
  json scenes = json::array();
  for (const auto& scene : dataset.scenes) {
    json js;
    js["scene_id"] = scene.scene_id;
    js["category_label"] = scene.category_label;
    const PoseMode mode = scene.views.empty() ? PoseMode::turntable : scene.views.front().pose.mode;
    js["pose_mode"] = std::string(to_string(mode));
    json views = json::array();
    for (const auto& v : scene.views) {
      json jv{{"view_id", v.view_id}, {"azimuth", v.pose.azimuth}, {"elevation", v.pose.elevation}};
      if (mode == PoseMode::full6dof) jv["position"] = v.pose.position;
      views.push_back(std::move(jv));
    }
    js["views"] = std::move(views);
    json files = json::object();
    json sums = json::object();
    for (const auto& [fid, emb] : scene.embeddings) {
      const std::string rel = blob_name(scene.scene_id, fid);
      const std::string bytes = encode_vseb(emb.rows);
      write_file(dir / rel, bytes);
      files[fid] = rel;
      sums[fid] = hex64(fnv1a64(bytes));
    }
    js["embedding_files"] = std::move(files);
    js["embedding_checksums"] = std::move(sums);
    scenes.push_back(std::move(js));
  }
  doc["scenes"] = std::move(scenes);
  const fs::path manifest = dir / "manifest.json";
  write_file(manifest, doc.dump(2) + "\n");
  return manifest;
}

void write_label_bank(const LabelEmbeddingBank& bank, const fs::path& json_path) {
  bank.validate();
  const std::string blob = json_path.stem().string() + ".vseb";
  write_vseb(json_path.parent_path() / blob, bank.vectors);
  json doc{{"schema_version", kManifestSchemaVersion},
           {"featurizer_id", bank.featurizer_id},
           {"labels", bank.labels},
           {"blob", blob}};
  write_file(json_path, doc.dump(2) + "\n");
}

LabelEmbeddingBank read_label_bank(const fs::path& json_path) {
  json doc;
  try {
    doc = json::parse(read_file(json_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", json_path.string(), e.what()));
  }
  const std::string ctx = json_path.string();
  LabelEmbeddingBank bank;
  bank.featurizer_id = require<std::string>(doc, "featurizer_id", ctx);
  bank.labels = require<std::vector<std::string>>(doc, "labels", ctx);
  bank.vectors = read_vseb(json_path.parent_path() / require<std::string>(doc, "blob", ctx));
  bank.validate();
  return bank;
}

ReferenceAnnotation read_reference_annotations(const fs::path& csv) {
  std::istringstream in(read_file(csv));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(fmt::format("{}: empty file", csv.string()));
  const auto header = split_csv_line(line);
  if (header != std::vector<std::string>{"scene_id", "view_id", "is_accidental"}) {
    throw ValidationError(
        fmt::format("{}: header must be scene_id,view_id,is_accidental", csv.string()));
  }
  ReferenceAnnotation ref;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3) {
      throw ValidationError(fmt::format("{}:{}: expected 3 columns", csv.string(), line_no));
    }
    const std::string& flag = cells[2];
    ViewKey key{cells[0], cells[1]};
    if (flag == "1" || flag == "true") {
      ref.positive.insert(std::move(key));
    } else if (flag == "0" || flag == "false") {
      ref.negative.insert(std::move(key));
    } else {
      throw ValidationError(fmt::format("{}:{}: bad is_accidental '{}'", csv.string(), line_no, flag));
    }
  }
  for (const auto& k : ref.positive) {
    if (ref.negative.count(k)) {
      throw ValidationError(fmt::format("{}: view {}/{} annotated both ways", csv.string(),
                                        k.first, k.second));
    }
  }
  return ref;
}

void write_ground_truth(const std::map<std::string, std::map<ViewKey, Category>>& truth,
                        const fs::path& csv) {
  std::string out = "featurizer_id,scene_id,view_id,category\n";
  for (const auto& [fid, views] : truth) {
    for (const auto& [key, category] : views) {
      out += fmt::format("{},{},{},{}\n", fid, key.first, key.second, to_string(category));
    }
  }
  write_file(csv, out);
}

}  // namespace vstab
