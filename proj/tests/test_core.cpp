#include <doctest.h>

#include <random>

#include "vstab/core.hpp"

using namespace vstab;

TEST_SUITE("core") {
  TEST_CASE("pose_distance examples") {
    const Pose a = Pose::turntable(355.0, 10.0);
    CHECK(pose_distance(a, a) == 0.0);
    CHECK(pose_distance(a, Pose::turntable(0.0, 10.0)) == doctest::Approx(5.0).epsilon(1e-12));

    const Pose p = Pose::full6dof({0, 0, 0}, 30.0, 5.0);
    const Pose q = Pose::full6dof({3, 4, 0}, 30.0, 5.0);
    for (double w : {0.0, 1.0, 7.5}) CHECK(pose_distance(p, q, w) == doctest::Approx(5.0));
  }

  TEST_CASE("pose_distance rejects mixed modes") {
    CHECK_THROWS_WITH_AS(pose_distance(Pose::turntable(0), Pose::full6dof({0, 0, 0}, 0, 0)),
                         "incomparable poses", ValidationError);
  }

  TEST_CASE("pose construction normalizes and bounds angles") {
    CHECK(Pose::turntable(-5.0).azimuth == doctest::Approx(355.0));
    CHECK(Pose::turntable(725.0).azimuth == doctest::Approx(5.0));
    CHECK(Pose::turntable(360.0).azimuth == 0.0);
    CHECK_THROWS_AS(Pose::turntable(0.0, 91.0), ValidationError);
    CHECK_THROWS_AS(Pose::turntable(std::nan(""), 0.0), ValidationError);
  }

  TEST_CASE("azimuth wrap is invisible to pose_distance") {
    for (int k = -3; k <= 3; ++k) {
      for (double theta : {0.0, 17.5, 359.9}) {
        CHECK(pose_distance(Pose::turntable(theta, 3.0), Pose::turntable(theta + 360.0 * k, 3.0)) ==
              doctest::Approx(0.0).epsilon(1e-9));
      }
    }
  }

  TEST_CASE("feature_distance examples") {
    Eigen::VectorXd x(2), y(2), z(2);
    x << 1, 0;
    y << 0, 1;
    z << -1, 0;
    CHECK(feature_distance(x, x) == 0.0);
    CHECK(feature_distance(x, y) == doctest::Approx(1.0));
    CHECK(feature_distance(x, z) == doctest::Approx(2.0));
    CHECK_THROWS_WITH_AS(feature_distance(x, Eigen::VectorXd::Zero(2)), "degenerate embedding",
                         ValidationError);
  }

  TEST_CASE("distances are symmetric, nonnegative and scale invariant") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ang(0.0, 720.0), el(-90.0, 90.0), pos(-5, 5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 500; ++trial) {
      const Pose a = Pose::full6dof({pos(rng), pos(rng), pos(rng)}, ang(rng), el(rng));
      const Pose b = Pose::full6dof({pos(rng), pos(rng), pos(rng)}, ang(rng), el(rng));
      const double w = std::abs(g(rng));
      CHECK(pose_distance(a, b, w) >= 0.0);
      CHECK(pose_distance(a, b, w) == doctest::Approx(pose_distance(b, a, w)));

      Eigen::VectorXd x(8), y(8);
      for (int i = 0; i < 8; ++i) {
        x(i) = g(rng);
        y(i) = g(rng);
      }
      const double d = feature_distance(x, y);
      CHECK(d >= 0.0);
      CHECK(d <= 2.0);
      CHECK(d == doctest::Approx(feature_distance(y, x)).epsilon(1e-12));
      const double alpha = 0.01 + std::abs(g(rng)) * 10, beta = 0.01 + std::abs(g(rng)) * 10;
      CHECK(std::abs(feature_distance(alpha * x, beta * y) - d) < 1e-9);
    }
  }

  TEST_CASE("embedding validation") {
    EmbeddingMatrix emb;
    emb.featurizer_id = "f";
    emb.rows = Eigen::MatrixXd::Ones(3, 2);
    emb.normalize_rows();
    CHECK(emb.normalized);
    CHECK(emb.raw_norms[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK_NOTHROW(emb.validate("t"));
    emb.rows(1, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(emb.validate("t"), ValidationError);
  }

  TEST_CASE("scene and label-set validation") {
    SceneCapture s;
    s.scene_id = "s";
    s.views.push_back({"a", Pose::turntable(0), 0});
    s.views.push_back({"a", Pose::turntable(5), 1});
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.views[1].view_id = "b";
    s.views[1].ordinal = 2;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s.views[1].ordinal = 1;
    CHECK_NOTHROW(s.validate());

    ViewLabelSet ls;
    ls.stable = {{"s", "a"}};
    ls.ood = {{"s", "a"}};
    CHECK_THROWS_AS(ls.validate(), ValidationError);
  }
}
