#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "sphconv/octree.hpp"
#include "sphconv/rng.hpp"

using namespace sphconv;

namespace {

PointCloud uniform_points(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed, 99);
  std::uniform_real_distribution<double> u(-1, 1);
  PointCloud pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

}  // namespace

TEST(Octree, SinglePointChain) {
  const PointCloud pts{{0.3, -0.4, 0.5}};
  const auto tree = build_octree(pts, 3);
  ASSERT_EQ(tree.levels.size(), 3u);
  for (const auto& level : tree.levels) {
    ASSERT_EQ(level.size(), 1u);
    EXPECT_EQ(level.child_count(0), 1u);
    EXPECT_EQ(level.locations[0], pts[0]);
  }
  const auto plan = to_network_plan(tree);
  ASSERT_EQ(plan.layers.size(), 4u);
  for (int l = 1; l <= 3; ++l) {
    EXPECT_EQ(plan.neuron_count(l), 1u);
    EXPECT_EQ(plan.layer(l).children_of(0).size(), 1u);
    // Chain edges coincide, so only the self-convolution bin is used.
    const BinAssigner assign(preset_uniform(8, 2, 3, plan.layer(l).radius));
    EXPECT_EQ(assign(plan.layer(l).locations[0], plan.layer(l - 1).locations[0]).kappa, 0u);
  }
}

TEST(Octree, OctantCentersDepthOne) {
  PointCloud pts;
  for (int o = 0; o < 8; ++o)
    pts.push_back({o & 1 ? 0.5 : -0.5, o & 2 ? 0.5 : -0.5, o & 4 ? 0.5 : -0.5});
  const auto tree = build_octree(pts, 1);
  ASSERT_EQ(tree.levels.size(), 1u);
  EXPECT_EQ(tree.levels[0].child_count(0), 8u);
  EXPECT_EQ(tree.levels[0].locations[0], (Point3{0, 0, 0}));

  const auto tree2 = build_octree(pts, 2);
  EXPECT_EQ(tree2.levels[1].size(), 8u);
  EXPECT_EQ(tree2.levels[0].child_count(0), 8u);
  EXPECT_EQ(tree2.levels[0].locations[0], (Point3{0, 0, 0}));
}

TEST(Octree, LeafMeanAndParentMean) {
  const auto tree = build_octree(PointCloud{{0, 0, 0}, {0.2, 0, 0}}, 1);
  EXPECT_NEAR(tree.levels[0].locations[0].x, 0.1, 1e-15);
  const auto t2 = build_octree(PointCloud{{-1, 0, 0}, {1, 0, 0}}, 2);
  EXPECT_EQ(t2.levels[0].locations[0], (Point3{0, 0, 0}));
}

TEST(Octree, SplitPlaneGoesUp) {
  const auto tree = build_octree(PointCloud{{0, 0, 0}, {-0.5, -0.5, -0.5}}, 2);
  ASSERT_EQ(tree.levels[1].size(), 2u);
  EXPECT_EQ(tree.levels[1].cubes[1].min_corner, (Point3{0, 0, 0}));
  EXPECT_EQ(tree.levels[1].locations[1], (Point3{0, 0, 0}));
}

TEST(Octree, DuplicatesShareLeaf) {
  const PointCloud pts{{0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, {-0.5, 0.2, 0.3}};
  const auto tree = build_octree(pts, 4);
  const auto& leaves = tree.deepest();
  ASSERT_EQ(leaves.size(), 2u);
  std::multiset<std::uint32_t> counts{leaves.child_count(0), leaves.child_count(1)};
  EXPECT_EQ(counts, (std::multiset<std::uint32_t>{1, 3}));
}

TEST(Octree, Errors) {
  EXPECT_THROW(build_octree(PointCloud{}, 3), DataError);
  EXPECT_THROW(build_octree(PointCloud{{0, 0, 0}}, 0), ConfigError);
  EXPECT_THROW(build_octree(PointCloud{{0, NAN, 0}}, 2), DataError);
}

TEST(Octree, PartitionAt10K) {
  const auto pts = uniform_points(10000, 1);
  const auto tree = build_octree(pts, 8);
  const auto& leaves = tree.deepest();
  EXPECT_EQ(leaves.child_begin.back(), 10000u);
  std::vector<int> seen(pts.size(), 0);
  for (auto i : tree.point_indices) ++seen[i];
  for (int s : seen) ASSERT_EQ(s, 1);
  // Every point lies in the cube of the leaf that holds it.
  for (std::size_t i = 0; i < leaves.size(); ++i)
    for (auto k = leaves.child_begin[i]; k < leaves.child_begin[i + 1]; ++k)
      ASSERT_TRUE(leaves.cubes[i].contains(pts[tree.point_indices[k]]));
}

TEST(Octree, MeansMatchRecursiveRecompute) {
  for (std::uint64_t seed : {2, 3, 4}) {
    auto pts = uniform_points(3000, seed);
    // Clustered points exercise deep single-child chains.
    for (int i = 0; i < 200; ++i) pts.push_back(Point3{0.3, 0.3, 0.3} + pts[i] * 0.01);
    const int depth = 6;
    const auto tree = build_octree(pts, depth);
    const oracle::RecursiveOctree ref(pts, depth);
    for (int d = 0; d < depth; ++d) {
      const auto& level = tree.levels[d];
      ASSERT_EQ(level.size(), ref.count_at(d));
      for (std::size_t i = 0; i < level.size(); ++i) {
        const auto& c = level.cubes[i].min_corner;
        const auto it = ref.locations().find({d, c.x, c.y, c.z});
        ASSERT_NE(it, ref.locations().end());
        ASSERT_LT(norm(it->second - level.locations[i]), 1e-12);
      }
    }
  }
}

TEST(Octree, SymmetricRootAtCentroid) {
  PointCloud pts;
  for (int o = 0; o < 8; ++o)
    for (double s : {0.2, 0.7})
      pts.push_back({o & 1 ? s : -s, o & 2 ? s : -s, o & 4 ? s : -s});
  const auto tree = build_octree(pts, 4);
  EXPECT_LT(norm(tree.levels[0].locations[0]), 1e-15);
}

TEST(LayerRadius, Formula) {
  const double diag = 2 * std::sqrt(3.0);
  EXPECT_EQ(layer_radius(diag, 8, 8), std::sqrt(3.0));
  EXPECT_EQ(layer_radius(diag, 8, 7), std::sqrt(3.0) / 2);
  for (int l = 1; l < 8; ++l) {
    EXPECT_EQ(layer_radius(diag, 8, l + 1) / layer_radius(diag, 8, l), 2.0);
    EXPECT_EQ(layer_radius(diag, 8, l), std::pow(2.0, l - 8 - 1) * diag);
  }
  EXPECT_THROW(layer_radius(diag, 8, 0), ConfigError);
  EXPECT_THROW(layer_radius(diag, 8, 9), ConfigError);
}

TEST(Plan, ShapeAndTreeProperty) {
  const auto pts = uniform_points(2000, 5);
  const auto plan = build_plan(pts, 5);
  ASSERT_EQ(plan.layers.size(), 6u);
  EXPECT_EQ(plan.neuron_count(0), 2000u);
  EXPECT_EQ(plan.neuron_count(5), 1u);
  for (int l = 1; l <= 5; ++l) {
    const auto& layer = plan.layer(l);
    EXPECT_LT(layer.size(), plan.neuron_count(l - 1));
    EXPECT_EQ(layer.radius, layer_radius(2 * std::sqrt(3.0), 5, l));
    std::vector<int> parent_count(plan.neuron_count(l - 1), 0);
    for (std::size_t i = 0; i < layer.size(); ++i) {
      ASSERT_GE(layer.children_of(i).size(), 1u);
      for (auto j : layer.children_of(i)) ++parent_count[j];
    }
    for (int c : parent_count) ASSERT_EQ(c, 1);
  }
}

TEST(Plan, ChildrenInsideParentCube) {
  const auto pts = uniform_points(5000, 6);
  const auto tree = build_octree(pts, 6);
  const auto plan = to_network_plan(tree);
  for (int l = 1; l <= 6; ++l) {
    const auto& level = tree.levels[6 - l];
    const auto& layer = plan.layer(l);
    for (std::size_t i = 0; i < layer.size(); ++i)
      for (auto j : layer.children_of(i))
        ASSERT_TRUE(level.cubes[i].contains(plan.layer(l - 1).locations[j]));
  }
}

TEST(Plan, MonotoneCoarseningDegenerate) {
  const auto plan = build_plan(PointCloud{{0.1, 0.2, 0.3}, {0.1, 0.2, 0.31}}, 6);
  for (int l = 1; l <= 6; ++l) EXPECT_LE(plan.neuron_count(l), plan.neuron_count(l - 1));
  EXPECT_EQ(plan.neuron_count(6), 1u);
}

TEST(Plan, OutliersRareAndBinned) {
  const auto plan = build_plan(uniform_points(10000, 7), 8);
  const auto oc = count_outliers(plan);
  EXPECT_GT(oc.edges, 10000u);
  EXPECT_LT(oc.fraction(), 0.05);
  for (int l = 1; l <= 8; ++l) {
    const auto& layer = plan.layer(l);
    const BinAssigner assign(preset_uniform(8, 2, 3, layer.radius));
    for (std::size_t i = 0; i < layer.size(); ++i) {
      for (auto j : layer.children_of(i)) {
        const auto& c = plan.layer(l - 1).locations[j];
        const auto k = assign(layer.locations[i], c);
        ASSERT_LT(k.kappa, 49u);
        if (assign.is_outlier(layer.locations[i], c)) {
          ASSERT_EQ(unpack_bin(k, 8, 2).k_r, 3);
        }
      }
    }
  }
}

TEST(Plan, DumpFormat) {
  const auto plan = build_plan(PointCloud{{0.5, 0.5, 0.5}, {-0.5, -0.5, -0.5}}, 2);
  std::ostringstream os;
  dump_plan(plan, os);
  std::istringstream is(os.str());
  std::string line;
  int lines = 0;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#') ++lines;
  EXPECT_EQ(lines, 2 + 2 + 1);
  EXPECT_NE(os.str().find("2 0 "), std::string::npos);
}

TEST(Plan, HashTracksGeometry) {
  const auto pts = uniform_points(500, 8);
  auto moved = pts;
  moved[0].x += 1e-6;
  EXPECT_EQ(plan_hash(build_plan(pts, 5)), plan_hash(build_plan(pts, 5)));
  EXPECT_NE(plan_hash(build_plan(pts, 5)), plan_hash(build_plan(moved, 5)));
}
