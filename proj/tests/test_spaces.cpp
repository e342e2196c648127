#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geonet/spaces.hpp"

using namespace geonet;

namespace {

void expect_metric_axioms(const Space& s) {
  const auto n = s.size();
  for (ElementId a = 0; a < n; ++a) {
    EXPECT_EQ(s.distance(a, a), 0.0) << s.name();
    for (ElementId b = 0; b < n; ++b) {
      EXPECT_GE(s.distance(a, b), 0.0);
      EXPECT_EQ(s.distance(a, b), s.distance(b, a)) << s.name() << " " << a << "," << b;
      for (ElementId c = 0; c < n; ++c)
        EXPECT_LE(s.distance(a, c), s.distance(a, b) + s.distance(b, c) + 1e-12) << s.name();
    }
  }
}

}  // namespace

TEST(Grid, SizeAndLabels) {
  const auto g = make_grid(28, 28);
  EXPECT_EQ(g.size(), 784u);
  const auto one = make_grid(1, 1);
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one.distance(0, 0), 0.0);
  const auto g3 = make_grid(3, 3);
  EXPECT_EQ(g3.distance(g3.at(0, 0), g3.at(2, 1)), 2.0);
  EXPECT_EQ(g3.coords(g3.at(2, 1)), (std::pair<long, long>{2, 1}));
  EXPECT_THROW(make_grid(0, 3), ValidationError);
  EXPECT_THROW(make_grid(3, -1), ValidationError);
}

TEST(Grid, BallSizes) {
  const auto g = make_grid(5, 5);
  auto ball = [&](ElementId c) {
    int k = 0;
    for (ElementId v = 0; v < g.size(); ++v) k += g.distance(c, v) <= 1.0;
    return k;
  };
  EXPECT_EQ(ball(g.at(2, 2)), 9);
  EXPECT_EQ(ball(g.at(0, 0)), 4);
  EXPECT_EQ(ball(g.at(4, 0)), 4);
  EXPECT_EQ(ball(g.at(2, 0)), 6);
  EXPECT_EQ(ball(g.at(0, 3)), 6);
}

TEST(Circle, ChordalValues) {
  const auto c4 = make_circle(4, false);
  EXPECT_NEAR(c4.distance(0, 1), 1.41421356237, 1e-10);
  EXPECT_NEAR(c4.distance(0, 2), 2.0, 1e-12);
  EXPECT_NEAR(adjacent_root_distance(16), 0.390181, 1e-6);
  const auto c16 = make_circle(16, false);
  EXPECT_NEAR(c16.distance(3, 4), 0.390181, 1e-6);
  const auto c3 = make_circle(3, true);
  EXPECT_EQ(c3.size(), 4u);
  EXPECT_NEAR(c3.distance(c3.base_point(), 1), std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(c3.distance(0, 1), std::sqrt(3.0), 1e-12);
  EXPECT_THROW(make_circle(1, false), ValidationError);
}

TEST(Circle, PointedBaseDistance) {
  for (int n : {3, 5, 8, 16}) {
    const auto c = make_circle(n, true);
    for (ElementId r = 0; r < static_cast<ElementId>(n); ++r)
      EXPECT_NEAR(c.distance(c.base_point(), r), adjacent_root_distance(n), 1e-12);
  }
}

TEST(Circle, XiBallHasThreeElements) {
  for (int n = 7; n <= 24; ++n) {
    const auto c = make_circle(n, false);
    const double xi = adjacent_root_distance(n);
    for (ElementId r = 0; r < static_cast<ElementId>(n); ++r) {
      int k = 0;
      for (ElementId v = 0; v < c.size(); ++v) k += c.distance(r, v) <= xi + 1e-12;
      EXPECT_EQ(k, 3) << "n=" << n;
    }
  }
}

TEST(Metric, AxiomsExhaustive) {
  expect_metric_axioms(make_grid(6, 5));
  expect_metric_axioms(Space::torus(5, 4));
  expect_metric_axioms(Space::interval(-3, 7));
  for (int n : {2, 3, 4, 5, 8, 13, 16}) {
    expect_metric_axioms(make_circle(n, false));
    expect_metric_axioms(make_circle(n, true));
  }
  expect_metric_axioms(product_space(make_grid(3, 2), make_circle(5, true)));
}

TEST(Metric, AxiomsRandomTriplesOnLargeProduct) {
  const auto s = product_space(make_grid(10, 10), make_circle(16, true));
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<ElementId> pick(0, static_cast<ElementId>(s.size() - 1));
  for (int t = 0; t < 20000; ++t) {
    const auto a = pick(rng), b = pick(rng), c = pick(rng);
    ASSERT_LE(s.distance(a, c), s.distance(a, b) + s.distance(b, c) + 1e-12);
    ASSERT_EQ(s.distance(a, b), s.distance(b, a));
  }
}

TEST(Product, CardinalityAndSliceMetric) {
  const auto g = make_grid(3, 3);
  const auto c = make_circle(4, false);
  const auto p = product_space(g, c);
  EXPECT_EQ(p.size(), 36u);
  for (ElementId z = 0; z < 4; ++z)
    for (ElementId w = 0; w < 4; ++w) EXPECT_EQ(p.distance(p.join(4, z), p.join(4, w)), c.distance(z, w));
  EXPECT_EQ(p.distance(p.join(0, 1), p.join(8, 1)), 2.0);
  const auto one = product_space(make_grid(1, 1), make_grid(1, 1));
  EXPECT_EQ(one.size(), 1u);
  EXPECT_EQ(one.distance(0, 0), 0.0);
}

TEST(Set, HasNoMetric) {
  const auto x = Space::set(3);
  EXPECT_FALSE(x.has_metric());
  EXPECT_THROW(x.distance(0, 1), ValidationError);
  EXPECT_THROW(Space::set(0), ValidationError);
}
