#ifndef SPHCONV_OCTREE_HPP_
#define SPHCONV_OCTREE_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "sphconv/error.hpp"
#include "sphconv/geometry.hpp"

namespace sphconv {

/// One depth of the tree, stored as flat arrays. The children of node i are the
/// nodes [child_begin[i], child_begin[i+1]) of the next level; on the deepest
/// level the same range indexes Octree::point_indices instead.
struct OctreeLevel {
  std::vector<BoundingCube> cubes;
  std::vector<Point3> locations;
  std::vector<std::uint32_t> child_begin{0};

  std::size_t size() const { return cubes.size(); }
  std::uint32_t child_count(std::size_t i) const { return child_begin[i + 1] - child_begin[i]; }
};

/// Octree with capacity-one splitting. levels[0] is the root, levels[depth-1] the
/// deepest level; leaves that stop splitting early are replicated down as
/// single-child chains, and empty octants are never created.
struct Octree {
  int depth = 0;
  BoundingCube root;
  std::vector<OctreeLevel> levels;
  std::vector<std::uint32_t> point_indices;  // grouped by deepest-level node
  PointCloud points;

  const OctreeLevel& deepest() const { return levels.back(); }
};

/// Recomputes every node location bottom-up: deepest nodes take the mean of their
/// points, every other node the mean of its children's locations.
inline void compute_node_locations(Octree& tree) {
  auto& leaves = tree.levels.back();
  leaves.locations.assign(leaves.size(), Point3{});
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Point3 sum;
    for (auto k = leaves.child_begin[i]; k < leaves.child_begin[i + 1]; ++k)
      sum += tree.points[tree.point_indices[k]];
    leaves.locations[i] = sum * (1.0 / leaves.child_count(i));
  }
  for (int d = tree.depth - 2; d >= 0; --d) {
    auto& level = tree.levels[d];
    const auto& below = tree.levels[d + 1];
    level.locations.assign(level.size(), Point3{});
    for (std::size_t i = 0; i < level.size(); ++i) {
      Point3 sum;
      for (auto k = level.child_begin[i]; k < level.child_begin[i + 1]; ++k) sum += below.locations[k];
      level.locations[i] = sum * (1.0 / level.child_count(i));
    }
  }
}

/// Builds a depth-level octree over `cloud` inside the root cube [-1, 1]^3.
/// Points on a splitting plane go to the upper octant. Points outside the root
/// cube (e.g. after augmentation) descend into the nearest boundary octants.
inline Octree build_octree(std::span<const Point3> cloud, int depth,
                           BoundingCube root = BoundingCube{}) {
  if (cloud.empty()) throw DataError("build_octree: empty point cloud");
  if (depth < 1) throw ConfigError("build_octree: depth must be >= 1");
  for (const auto& p : cloud)
    if (!is_finite(p)) throw DataError("build_octree: non-finite coordinate");

  Octree tree;
  tree.depth = depth;
  tree.root = root;
  tree.points.assign(cloud.begin(), cloud.end());
  tree.levels.resize(depth);

  const auto m = static_cast<std::uint32_t>(cloud.size());
  // Point ranges of the nodes on the current level, within `order`.
  std::vector<std::uint32_t> order(m);
  std::iota(order.begin(), order.end(), 0u);
  std::vector<std::uint32_t> scratch(m);
  std::vector<std::uint32_t> range_begin{0, m};

  tree.levels[0].cubes.push_back(root);

  for (int d = 0; d + 1 < depth; ++d) {
    auto& level = tree.levels[d];
    auto& next = tree.levels[d + 1];
    std::vector<std::uint32_t> next_range{0};
    for (std::size_t i = 0; i < level.size(); ++i) {
      const std::uint32_t b = range_begin[i];
      const std::uint32_t e = range_begin[i + 1];
      if (e - b <= 1) {
        next.cubes.push_back(level.cubes[i]);  // replicate the leaf one level down
        next_range.push_back(e);
      } else {
        const Point3 c = level.cubes[i].center();
        std::array<std::uint32_t, 9> count{};
        auto octant = [&](std::uint32_t idx) {
          const Point3& p = tree.points[idx];
          return (p.x >= c.x ? 1 : 0) | (p.y >= c.y ? 2 : 0) | (p.z >= c.z ? 4 : 0);
        };
        for (auto k = b; k < e; ++k) ++count[octant(order[k]) + 1];
        for (int o = 0; o < 8; ++o) count[o + 1] += count[o];
        std::array<std::uint32_t, 8> fill{};
        for (int o = 0; o < 8; ++o) fill[o] = b + count[o];
        for (auto k = b; k < e; ++k) scratch[fill[octant(order[k])]++] = order[k];
        std::copy(scratch.begin() + b, scratch.begin() + e, order.begin() + b);
        for (int o = 0; o < 8; ++o) {
          if (count[o + 1] == count[o]) continue;
          next.cubes.push_back(level.cubes[i].octant(o));
          next_range.push_back(b + count[o + 1]);
        }
      }
      level.child_begin.push_back(static_cast<std::uint32_t>(next.size()));
    }
    range_begin = std::move(next_range);
  }
  tree.levels.back().child_begin = range_begin;
  tree.point_indices = std::move(order);
  compute_node_locations(tree);
  return tree;
}

/// Per-level node locations, root first.
inline std::vector<std::vector<Point3>> node_locations(const Octree& tree) {
  std::vector<std::vector<Point3>> out;
  out.reserve(tree.levels.size());
  for (const auto& level : tree.levels) out.push_back(level.locations);
  return out;
}

/// Kernel radius of network layer l (1 = deepest level, depth = root):
/// 2^(l - depth - 1) times the diagonal of the root cube.
inline double layer_radius(double root_diagonal, int depth, int l) {
  if (l < 1 || l > depth) throw ConfigError("layer_radius: layer out of range");
  return std::ldexp(root_diagonal, l - depth - 1);
}

inline double layer_radius(const Octree& tree, int l) {
  return layer_radius(tree.root.diagonal(), tree.depth, l);
}

// ---------------------------------------------------------------------------

/// Neurons of one network layer: locations, and for each neuron the indices of
/// its children in the layer below.
struct PlanLayer {
  std::vector<Point3> locations;
  std::vector<std::uint32_t> child_begin{0};
  std::vector<std::uint32_t> children;
  double radius = 0.0;

  std::size_t size() const { return locations.size(); }
  std::span<const std::uint32_t> children_of(std::size_t i) const {
    return {children.data() + child_begin[i], child_begin[i + 1] - child_begin[i]};
  }
};

/// Layer 0 holds the raw points; layer l in 1..depth holds the tree level
/// depth - l, so the last layer is the single root neuron.
struct OctreeNetworkPlan {
  int depth = 0;
  std::vector<PlanLayer> layers;

  const PlanLayer& layer(int l) const { return layers.at(static_cast<std::size_t>(l)); }
  std::size_t neuron_count(int l) const { return layer(l).size(); }
};

inline OctreeNetworkPlan to_network_plan(const Octree& tree) {
  OctreeNetworkPlan plan;
  plan.depth = tree.depth;
  plan.layers.resize(tree.depth + 1);
  plan.layers[0].locations = tree.points;
  plan.layers[0].child_begin.assign(tree.points.size() + 1, 0);

  for (int l = 1; l <= tree.depth; ++l) {
    const auto& level = tree.levels[tree.depth - l];
    auto& layer = plan.layers[l];
    layer.locations = level.locations;
    layer.radius = layer_radius(tree, l);
    layer.child_begin = level.child_begin;
    if (l == 1) {
      layer.children = tree.point_indices;
    } else {
      layer.children.resize(level.child_begin.back());
      std::iota(layer.children.begin(), layer.children.end(), 0u);
    }
  }
  return plan;
}

inline OctreeNetworkPlan build_plan(std::span<const Point3> cloud, int depth) {
  return to_network_plan(build_octree(cloud, depth));
}

struct OutlierCount {
  std::size_t outliers = 0;
  std::size_t edges = 0;

  double fraction() const { return edges == 0 ? 0.0 : static_cast<double>(outliers) / edges; }
};

/// Children lying farther than the layer radius from their parent's location.
inline OutlierCount count_outliers(const OctreeNetworkPlan& plan) {
  OutlierCount c;
  for (int l = 1; l <= plan.depth; ++l) {
    const auto& layer = plan.layers[l];
    const auto& below = plan.layers[l - 1];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      for (auto j : layer.children_of(i)) {
        ++c.edges;
        if (distance(layer.locations[i], below.locations[j]) > layer.radius) ++c.outliers;
      }
    }
  }
  return c;
}

/// One line per neuron: "layer index x y z child_count children...".
inline void dump_plan(const OctreeNetworkPlan& plan, std::ostream& os) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17);
  for (int l = 0; l <= plan.depth; ++l) {
    const auto& layer = plan.layers[l];
    for (std::size_t i = 0; i < layer.size(); ++i) {
      const auto& p = layer.locations[i];
      const auto kids = layer.children_of(i);
      os << l << ' ' << i << ' ' << p.x << ' ' << p.y << ' ' << p.z << ' ' << kids.size();
      for (auto k : kids) os << ' ' << k;
      os << '\n';
    }
  }
  os.flags(flags);
  os.precision(prec);
}

/// FNV-1a over the plan's structure and location bits.
inline std::uint64_t plan_hash(const OctreeNetworkPlan& plan) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& layer : plan.layers) {
    mix(layer.locations.data(), layer.locations.size() * sizeof(Point3));
    mix(layer.child_begin.data(), layer.child_begin.size() * sizeof(std::uint32_t));
    mix(layer.children.data(), layer.children.size() * sizeof(std::uint32_t));
  }
  return h;
}

}  // namespace sphconv

#endif  // SPHCONV_OCTREE_HPP_
