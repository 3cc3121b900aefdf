#include <doctest.h>

#include <random>

#include "vstab/agreement.hpp"

using namespace vstab;

namespace {

ViewKey key(int i) { return {"s", "v" + std::to_string(i)}; }

ViewSet set_of(std::initializer_list<int> ids) {
  ViewSet out;
  for (int i : ids) out.insert(key(i));
  return out;
}

ViewLabelSet labels(const std::string& fid, std::initializer_list<int> stable,
                    std::initializer_list<int> accidental, std::initializer_list<int> ood) {
  return {fid, set_of(stable), set_of(accidental), set_of(ood)};
}

}  // namespace

TEST_SUITE("agreement") {
  TEST_CASE("iou examples") {
    CHECK(iou(set_of({1, 2}), set_of({1, 2})) == 1.0);
    CHECK(iou(set_of({1}), set_of({2})) == 0.0);
    CHECK(iou(set_of({1, 2}), set_of({2, 3})) == doctest::Approx(1.0 / 3.0));
    CHECK(iou({}, {}) == 1.0);
    CHECK(iou(set_of({1}), {}) == 0.0);
  }

  TEST_CASE("iou is symmetric, bounded and monotone under shared additions") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.4);
    for (int trial = 0; trial < 200; ++trial) {
      ViewSet a, b;
      for (int i = 0; i < 15; ++i) {
        if (coin(rng)) a.insert(key(i));
        if (coin(rng)) b.insert(key(i));
      }
      const double base = iou(a, b);
      CHECK(base >= 0.0);
      CHECK(base <= 1.0);
      CHECK(base == iou(b, a));
      if (!a.empty()) CHECK(iou(a, a) == 1.0);

      ViewSet a2 = a, b2 = b;
      a2.insert(key(100));
      b2.insert(key(100));
      CHECK(iou(a2, b2) >= base);
      ViewSet a3 = a;
      a3.insert(key(101));
      CHECK(iou(a3, b) <= base);
    }
  }

  TEST_CASE("pairwise matrices") {
    const auto one = labels("f", {1, 2}, {3}, {});
    const Eigen::MatrixXd m1 = pairwise_iou_matrix({one}, Category::accidental);
    CHECK(m1.rows() == 1);
    CHECK(m1(0, 0) == 1.0);

    const auto m2 = pairwise_iou_matrix({one, one}, Category::stable);
    CHECK(m2 == Eigen::MatrixXd::Ones(2, 2));

    const auto other = labels("g", {1, 3}, {2}, {});
    const auto m3 = pairwise_iou_matrix({one, other, one}, Category::stable);
    CHECK(m3 == m3.transpose());
    CHECK(m3.diagonal() == Eigen::Vector3d::Ones());
    CHECK(m3(0, 1) == doctest::Approx(1.0 / 3.0));

    const auto mismatched = labels("h", {1}, {3}, {});
    CHECK_THROWS_AS(pairwise_iou_matrix({one, mismatched}, Category::stable), ValidationError);
  }

  TEST_CASE("mean iou by category") {
    const auto a = labels("a", {1, 2}, {3}, {4});
    auto same = mean_iou_by_category({a, a, a});
    CHECK(same == std::array<double, 3>{1.0, 1.0, 1.0});

    const auto b = labels("b", {3, 4}, {2}, {1});
    const auto c = labels("c", {1}, {4}, {2, 3});
    auto disjoint = mean_iou_by_category({labels("x", {1}, {2}, {3}), labels("y", {2}, {3}, {1})});
    CHECK(disjoint == std::array<double, 3>{0.0, 0.0, 0.0});

    const auto mixed = mean_iou_by_category({a, b, c});
    const Eigen::MatrixXd ood = pairwise_iou_matrix({a, b, c}, Category::ood);
    CHECK(mixed[2] == doctest::Approx((ood(0, 1) + ood(0, 2) + ood(1, 2)) / 3.0));
    CHECK_THROWS_AS(mean_iou_by_category({a}), ValidationError);
  }

  TEST_CASE("reference overlap examples") {
    const ViewSet pos = set_of({1, 2, 3});
    const ViewSet neg = set_of({4, 5});
    CHECK(overlap_with_reference(pos, pos, neg) == 100.0);
    CHECK(overlap_with_reference(neg, pos, neg) == 0.0);
    CHECK(overlap_with_reference(set_of({1, 2, 3, 4, 5}), pos, neg) == doctest::Approx(60.0));
    CHECK_THROWS_AS(overlap_with_reference(pos, pos, pos), ValidationError);
    CHECK_THROWS_AS(overlap_with_reference(pos, {}, {}), ValidationError);
  }
}
