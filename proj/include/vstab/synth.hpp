#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vstab/core.hpp"
#include "vstab/downstream.hpp"

namespace vstab {

/// Synthetic turntable sweeps with planted stable / accidental / ood views.
///
/// Each (scene, featurizer) embedding traces a closed band-limited Fourier
/// curve around the scene's class prototype, projected to the unit sphere.
/// Accidental views are replaced by points of one tight cluster per
/// featurizer, at the same views for every featurizer. OOD views jump off the
/// curve in a random orthogonal direction, at views drawn independently per
/// featurizer. The curve amplitude is calibrated so that the largest chord
/// between adjacent background views is ood_jump_chord / separation.
struct SynthConfig {
  std::size_t n_scenes = 20;
  std::size_t views_per_scene = 72;
  std::size_t dims = 64;
  std::size_t n_featurizers = 3;
  /// Highest Fourier harmonic of the background curves.
  std::size_t harmonics = 8;
  double accidental_rate = 0.03;
  double ood_rate = 0.03;
  double separation = 8.0;
  /// Chord length of an OOD jump on the unit sphere, in (0, 2).
  double ood_jump_chord = 1.3;
  /// Expected norm of the noise added to the accidental cluster center.
  double accidental_spread = 0.2;
  std::size_t class_count = 5;
  std::uint64_t seed = 0;

  void validate() const;
  /// Planted accidental / ood views per scene (rounded rate * views).
  std::size_t accidental_per_scene() const;
  std::size_t ood_per_scene() const;
};

struct SynthOutput {
  Dataset dataset;
  /// featurizer id -> view -> planted category. Every view is present.
  std::map<std::string, std::map<ViewKey, Category>> truth;
  /// One bank per featurizer holding the class prototypes.
  std::vector<LabelEmbeddingBank> banks;

  ViewSet truth_set(const std::string& featurizer_id, Category category) const;
};

SynthOutput generate(const SynthConfig& cfg, std::size_t workers = 1);

std::string synth_featurizer_id(std::size_t f);
std::string synth_class_label(std::size_t c);

}  // namespace vstab
