#include "vstab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

#include "vstab/parallel.hpp"

namespace vstab {

namespace {

// Stream tags for derived seeds.
enum Stream : std::uint64_t {
  kFeaturizer = 0xF0,
  kAccidentalSites = 0xA0,
  kCurve = 0xC0,
  kOod = 0xD0,
  kAccidentalPoints = 0xE0,
};

std::mt19937_64 derived_rng(std::uint64_t seed, Stream stream, std::uint64_t a,
                            std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

Eigen::VectorXd gaussian(std::size_t d, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
  return v;
}

Eigen::VectorXd random_unit(std::size_t d, std::mt19937_64& rng) {
  Eigen::VectorXd v = gaussian(d, 1.0, rng);
  return v / v.norm();
}

std::size_t circular_gap(std::size_t a, std::size_t b, std::size_t n) {
  const std::size_t diff = a > b ? a - b : b - a;
  return std::min(diff, n - diff);
}

// Draws `count` sites at circular distance >= 3 from each other and from
// `taken`, so no two planted views share a ring neighbor.
std::vector<std::size_t> draw_sites(std::size_t count, std::size_t n,
                                    const std::vector<std::size_t>& taken,
                                    std::mt19937_64& rng) {
  std::vector<std::size_t> sites;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t attempts = 0;
  while (sites.size() < count) {
    if (++attempts > 100000) throw ValidationError("infeasible rates: cannot place planted views");
    const std::size_t s = pick(rng);
    auto clear = [&](std::size_t t) { return circular_gap(s, t, n) >= 3; };
    if (std::all_of(taken.begin(), taken.end(), clear) &&
        std::all_of(sites.begin(), sites.end(), clear)) {
      sites.push_back(s);
    }
  }
  std::sort(sites.begin(), sites.end());
  return sites;
}

struct FeaturizerSpace {
  Eigen::MatrixXd prototypes;  // classes x d
  Eigen::VectorXd accidental_center;
};

FeaturizerSpace make_space(const SynthConfig& cfg, std::size_t f) {
  auto rng = derived_rng(cfg.seed, kFeaturizer, f);
  FeaturizerSpace space;
  space.prototypes.resize(static_cast<Eigen::Index>(cfg.class_count),
                          static_cast<Eigen::Index>(cfg.dims));
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    space.prototypes.row(static_cast<Eigen::Index>(c)) = random_unit(cfg.dims, rng).transpose();
  }
  // Center orthogonal to every prototype: accidental points carry no class signal.
  Eigen::VectorXd z = random_unit(cfg.dims, rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(space.prototypes.transpose());
  const Eigen::MatrixXd basis = qr.householderQ() *
                                Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(cfg.dims),
                                                          static_cast<Eigen::Index>(cfg.class_count));
  z -= basis * (basis.transpose() * z);
  space.accidental_center = z / z.norm();
  return space;
}

// Background curve: rows are unit vectors normalize(mu + amplitude * w(theta)).
class Curve {
 public:
  Curve(const Eigen::VectorXd& mu, std::size_t harmonics, std::size_t views,
        std::mt19937_64& rng)
      : mu_(mu), wave_(static_cast<Eigen::Index>(views), mu.size()) {
    const auto d = static_cast<std::size_t>(mu.size());
    const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
    wave_.setZero();
    for (std::size_t h = 1; h <= harmonics; ++h) {
      const Eigen::VectorXd a = gaussian(d, sigma, rng);
      const Eigen::VectorXd b = gaussian(d, sigma, rng);
      for (std::size_t i = 0; i < views; ++i) {
        const double theta = 2.0 * M_PI * static_cast<double>(h * i) / static_cast<double>(views);
        wave_.row(static_cast<Eigen::Index>(i)) +=
            (std::cos(theta) * a + std::sin(theta) * b).transpose();
      }
    }
  }

  Eigen::MatrixXd points(double amplitude) const {
    Eigen::MatrixXd p = (amplitude * wave_).rowwise() + mu_.transpose();
    p.rowwise().normalize();
    return p;
  }

  static double max_adjacent_chord(const Eigen::MatrixXd& p) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      worst = std::max(worst, (p.row(i) - p.row((i + 1) % p.rows())).norm());
    }
    return worst;
  }

  // Amplitude whose largest adjacent chord equals `target`, by bisection.
  double calibrate(double target) const {
    double lo = 0.0;
    double hi = 0.25;
    while (max_adjacent_chord(points(hi)) < target) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e4) throw ValidationError("separation too small for the curve band limit");
    }
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (max_adjacent_chord(points(mid)) < target ? lo : hi) = mid;
    }
    return lo;
  }

 private:
  Eigen::VectorXd mu_;
  Eigen::MatrixXd wave_;
};

}  // namespace

std::string synth_featurizer_id(std::size_t f) { return fmt::format("synth_f{}", f); }
std::string synth_class_label(std::size_t c) { return fmt::format("class_{:02d}", c); }

void SynthConfig::validate() const {
  if (n_scenes < 1 || views_per_scene < 3 || dims < 2 || n_featurizers < 1) {
    throw ValidationError("synth: scenes, views (>= 3), dims (>= 2) and featurizers must be set");
  }
  if (class_count < 1 || class_count >= dims) {
    throw ValidationError("synth: class_count must be in [1, dims)");
  }
  if (harmonics < 1) throw ValidationError("synth: harmonics must be positive");
  if (accidental_rate < 0.0 || ood_rate < 0.0 || accidental_rate + ood_rate >= 0.5) {
    throw ValidationError("infeasible rates: need rates >= 0 and accidental + ood < 0.5");
  }
  if ((accidental_per_scene() + ood_per_scene()) * 3 > views_per_scene) {
    throw ValidationError("infeasible rates: planted views cannot be kept three apart");
  }
  if (!(separation > 1.0)) throw ValidationError("synth: separation must exceed 1");
  if (!(ood_jump_chord > 0.0 && ood_jump_chord < 2.0)) {
    throw ValidationError("synth: ood_jump_chord must be in (0, 2)");
  }
  if (accidental_spread < 0.0) throw ValidationError("synth: accidental_spread must be >= 0");
}

std::size_t SynthConfig::accidental_per_scene() const {
  return static_cast<std::size_t>(std::lround(accidental_rate * static_cast<double>(views_per_scene)));
}

std::size_t SynthConfig::ood_per_scene() const {
  return static_cast<std::size_t>(std::lround(ood_rate * static_cast<double>(views_per_scene)));
}

ViewSet SynthOutput::truth_set(const std::string& featurizer_id, Category category) const {
  ViewSet out;
  for (const auto& [key, c] : truth.at(featurizer_id)) {
    if (c == category) out.insert(key);
  }
  return out;
}

SynthOutput generate(const SynthConfig& cfg, std::size_t workers) {
  cfg.validate();
  const std::size_t n_views = cfg.views_per_scene;
  std::vector<FeaturizerSpace> spaces;
  for (std::size_t f = 0; f < cfg.n_featurizers; ++f) spaces.push_back(make_space(cfg, f));

  const double angle = 2.0 * std::asin(cfg.ood_jump_chord / 2.0);
  const double jump = std::tan(angle);
  const double background_chord = cfg.ood_jump_chord / cfg.separation;

  SynthOutput out;
  out.dataset.dataset_id = fmt::format("synth-{}", cfg.seed);
  out.dataset.scenes.resize(cfg.n_scenes);
  // Per-scene planted categories, [scene][featurizer][view].
  std::vector<std::vector<std::vector<Category>>> planted(cfg.n_scenes);

  parallel_for(cfg.n_scenes, workers, [&](std::size_t s) {
    SceneCapture& scene = out.dataset.scenes[s];
    scene.scene_id = fmt::format("scene_{:04d}", s);
    const std::size_t cls = s % cfg.class_count;
    scene.category_label = synth_class_label(cls);
    for (std::size_t i = 0; i < n_views; ++i) {
      const double az = 360.0 * static_cast<double>(i) / static_cast<double>(n_views);
      scene.views.push_back({fmt::format("v{:03d}", i), Pose::turntable(az, 0.0), i});
    }

    auto site_rng = derived_rng(cfg.seed, kAccidentalSites, s);
    const auto accidental = draw_sites(cfg.accidental_per_scene(), n_views, {}, site_rng);

    planted[s].assign(cfg.n_featurizers, std::vector<Category>(n_views, Category::stable));
    for (std::size_t f = 0; f < cfg.n_featurizers; ++f) {
      const FeaturizerSpace& space = spaces[f];
      auto curve_rng = derived_rng(cfg.seed, kCurve, s, f);
      const Curve curve(space.prototypes.row(static_cast<Eigen::Index>(cls)).transpose(),
                        cfg.harmonics, n_views, curve_rng);
      Eigen::MatrixXd rows = curve.points(curve.calibrate(background_chord));

      auto ood_rng = derived_rng(cfg.seed, kOod, s, f);
      const auto ood = draw_sites(cfg.ood_per_scene(), n_views, accidental, ood_rng);
      for (std::size_t i : ood) {
        const auto r = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd p = rows.row(r).transpose();
        Eigen::VectorXd u = gaussian(cfg.dims, 1.0, ood_rng);
        u -= p * p.dot(u);
        u.normalize();
        rows.row(r) = (p + jump * u).normalized().transpose();
        planted[s][f][i] = Category::ood;
      }

      auto acc_rng = derived_rng(cfg.seed, kAccidentalPoints, s, f);
      const double sigma = cfg.accidental_spread / std::sqrt(static_cast<double>(cfg.dims));
      for (std::size_t i : accidental) {
        const Eigen::VectorXd x = space.accidental_center + gaussian(cfg.dims, sigma, acc_rng);
        rows.row(static_cast<Eigen::Index>(i)) = x.normalized().transpose();
        planted[s][f][i] = Category::accidental;
      }

      EmbeddingMatrix emb;
      emb.featurizer_id = synth_featurizer_id(f);
      emb.rows = std::move(rows);
      emb.normalized = true;
      scene.embeddings.emplace(emb.featurizer_id, std::move(emb));
    }
  });

  for (std::size_t f = 0; f < cfg.n_featurizers; ++f) {
    const std::string fid = synth_featurizer_id(f);
    auto& truth = out.truth[fid];
    for (std::size_t s = 0; s < cfg.n_scenes; ++s) {
      const auto& scene = out.dataset.scenes[s];
      for (std::size_t i = 0; i < n_views; ++i) {
        truth[{scene.scene_id, scene.views[i].view_id}] = planted[s][f][i];
      }
    }
    LabelEmbeddingBank bank;
    bank.featurizer_id = fid;
    for (std::size_t c = 0; c < cfg.class_count; ++c) bank.labels.push_back(synth_class_label(c));
    bank.vectors = spaces[f].prototypes;
    out.banks.push_back(std::move(bank));
  }
  return out;
}

}  // namespace vstab
