#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace vstab {

/// Raised for malformed inputs (bad files, violated preconditions). The CLI
/// maps this to exit code 2; anything else is an internal error.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PoseMode { turntable, full6dof };

std::string_view to_string(PoseMode mode);
PoseMode parse_pose_mode(std::string_view text);

/// Camera placement for one view. Angles are in degrees; azimuth is kept in
/// [0, 360) and elevation in [-90, 90]. In turntable mode the position is
/// ignored by pose_distance.
struct Pose {
  std::array<double, 3> position{0.0, 0.0, 0.0};
  double azimuth = 0.0;
  double elevation = 0.0;
  PoseMode mode = PoseMode::turntable;

  static Pose turntable(double azimuth_deg, double elevation_deg = 0.0);
  static Pose full6dof(const std::array<double, 3>& position, double azimuth_deg,
                       double elevation_deg);

  friend bool operator==(const Pose&, const Pose&) = default;
};

double normalize_azimuth(double degrees);

/// Signed-free circular difference in degrees, in [0, 180].
double wrapped_angle_difference(double a_deg, double b_deg);

double pose_distance(const Pose& a, const Pose& b, double angle_weight = 1.0);

/// Cosine distance 1 - cos(x, y), clamped to [0, 2].
double feature_distance(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& y);

struct ViewRecord {
  std::string view_id;
  Pose pose;
  std::size_t ordinal = 0;
};

/// One featurizer's outputs for a scene, row i belonging to view ordinal i.
struct EmbeddingMatrix {
  std::string featurizer_id;
  Eigen::MatrixXd rows;
  bool normalized = false;
  /// Row norms before normalization; empty unless normalize_rows() ran.
  std::vector<double> raw_norms;

  Eigen::Index dims() const { return rows.cols(); }
  Eigen::Index count() const { return rows.rows(); }

  void normalize_rows();
  /// Throws ValidationError on non-finite entries or, when `normalized`,
  /// rows whose norm is not within 1e-6 of one.
  void validate(std::string_view context) const;
};

struct SceneCapture {
  std::string scene_id;
  std::string category_label;
  std::vector<ViewRecord> views;
  std::map<std::string, EmbeddingMatrix> embeddings;

  const EmbeddingMatrix& embedding(const std::string& featurizer_id) const;
  void validate() const;
};

struct Dataset {
  std::string dataset_id;
  std::vector<SceneCapture> scenes;

  /// Featurizer ids present in every scene, sorted.
  std::vector<std::string> featurizer_ids() const;
  std::size_t view_count() const;
  const SceneCapture& scene(const std::string& scene_id) const;
  void validate() const;
};

/// (scene_id, view_id)
using ViewKey = std::pair<std::string, std::string>;
using ViewSet = std::set<ViewKey>;

enum class Category { stable, accidental, ood };

inline constexpr std::array<Category, 3> all_categories{Category::stable, Category::accidental,
                                                        Category::ood};

std::string_view to_string(Category category);
Category parse_category(std::string_view text);

struct ViewLabelSet {
  std::string featurizer_id;
  ViewSet stable;
  ViewSet accidental;
  ViewSet ood;

  const ViewSet& of(Category category) const;
  ViewSet& of(Category category);
  ViewSet labeled() const;
  /// Throws ValidationError if the three sets overlap.
  void validate() const;
};

}  // namespace vstab
