#ifndef SPHCONV_TESTS_ORACLES_HPP_
#define SPHCONV_TESTS_ORACLES_HPP_

// Slow, independently written reference computations. Nothing here calls the
// fast paths it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <tuple>
#include <vector>

#include "sphconv/geometry.hpp"
#include "sphconv/kernel.hpp"
#include "sphconv/network.hpp"
#include "sphconv/octree.hpp"

namespace oracle {

using sphconv::Point3;

/// 1-based index of the interval of `edges` holding v: [e_k, e_{k+1}) with the
/// last interval closed. 0 if v is outside every interval.
inline int scan_interval(const std::vector<double>& edges, double v) {
  const int count = static_cast<int>(edges.size()) - 1;
  for (int k = 1; k <= count; ++k) {
    const bool last = k == count;
    if (v >= edges[k - 1] && (v < edges[k] || (last && v <= edges[k]))) return k;
  }
  return 0;
}

/// Bin of neighbor relative to target, by linear scans over every edge list.
inline int bin(const Point3& target, const Point3& neighbor, const sphconv::KernelConfig& cfg) {
  const double dx = neighbor.x - target.x, dy = neighbor.y - target.y, dz = neighbor.z - target.z;
  if (dx == 0 && dy == 0 && dz == 0) return 0;
  const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
  double theta = std::atan2(dy, dx);
  if (theta == -std::numbers::pi) theta = std::numbers::pi;
  const double phi = std::asin(std::clamp(dz / r, -1.0, 1.0));
  const int n = static_cast<int>(cfg.theta_edges.size()) - 1;
  const int p = static_cast<int>(cfg.phi_edges.size()) - 1;
  const int q = static_cast<int>(cfg.r_edges.size()) - 1;
  const int kt = scan_interval(cfg.theta_edges, theta);
  const int kp = scan_interval(cfg.phi_edges, phi);
  int kr = r > cfg.rho ? q : scan_interval(cfg.r_edges, r);
  if (kr == 0) kr = 1;  // (0, eps) joins the innermost shell
  return kt + (kp - 1) * n + (kr - 1) * n * p;
}

// ---------------------------------------------------------------------------
// Octree

using CubeKey = std::tuple<int, double, double, double>;  // level, min corner

/// Node locations of every (level, cube) pair, rebuilt by direct recursion over
/// point subsets.
class RecursiveOctree {
 public:
  RecursiveOctree(const std::vector<Point3>& pts, int depth) : pts_(pts), depth_(depth) {
    std::vector<std::size_t> all(pts.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    visit(all, {-1, -1, -1}, 2.0, 0);
  }

  const std::map<CubeKey, Point3>& locations() const { return loc_; }
  std::size_t count_at(int level) const {
    std::size_t c = 0;
    for (const auto& [k, v] : loc_)
      if (std::get<0>(k) == level) ++c;
    return c;
  }

 private:
  Point3 visit(const std::vector<std::size_t>& idx, Point3 lo, double edge, int level) {
    Point3 result;
    if (level == depth_ - 1) {
      for (auto i : idx) result += pts_[i];
      result = result * (1.0 / static_cast<double>(idx.size()));
    } else if (idx.size() <= 1) {
      result = visit(idx, lo, edge, level + 1);
    } else {
      const double h = edge / 2;
      std::array<std::vector<std::size_t>, 8> parts;
      for (auto i : idx) {
        const auto& p = pts_[i];
        const int o = (p.x >= lo.x + h) + 2 * (p.y >= lo.y + h) + 4 * (p.z >= lo.z + h);
        parts[o].push_back(i);
      }
      int used = 0;
      for (int o = 0; o < 8; ++o) {
        if (parts[o].empty()) continue;
        const Point3 clo{lo.x + (o & 1 ? h : 0), lo.y + (o & 2 ? h : 0), lo.z + (o & 4 ? h : 0)};
        result += visit(parts[o], clo, h, level + 1);
        ++used;
      }
      result = result * (1.0 / used);
    }
    loc_[{level, lo.x, lo.y, lo.z}] = result;
    return result;
  }

  const std::vector<Point3>& pts_;
  int depth_;
  std::map<CubeKey, Point3> loc_;
};

// ---------------------------------------------------------------------------
// Network

/// Dense forward pass: for every layer, materializes the full parent x child
/// bin table (-1 where there is no edge) and evaluates the averaged convolution,
/// batch norm with two-pass statistics, ReLU, and the classifier.
inline std::vector<std::vector<double>> dense_forward(
    const std::vector<const sphconv::OctreeNetworkPlan*>& plans,
    const sphconv::ModelParams<double>& m, bool train_mode) {
  const int L = static_cast<int>(m.layers.size());
  const std::size_t B = plans.size();
  std::vector<std::vector<std::vector<double>>> act(B);  // [sample][neuron*channels]
  for (std::size_t s = 0; s < B; ++s) {
    act[s].resize(1);
    for (const auto& p : plans[s]->layers[0].locations) {
      act[s][0].push_back(p.x);
      act[s][0].push_back(p.y);
      act[s][0].push_back(p.z);
    }
  }
  for (int l = 1; l <= L; ++l) {
    const auto& lp = m.layers[l - 1];
    const int I = lp.kernel.in_channels, O = lp.kernel.out_channels;
    const auto msize = static_cast<std::size_t>(I) * O;
    std::vector<std::vector<double>> z(B);
    for (std::size_t s = 0; s < B; ++s) {
      const auto& layer = plans[s]->layers[l];
      const auto& below = plans[s]->layers[l - 1];
      const std::size_t np = layer.locations.size(), nc = below.locations.size();
      std::vector<int> table(np * nc, -1);
      for (std::size_t i = 0; i < np; ++i)
        for (auto k = layer.child_begin[i]; k < layer.child_begin[i + 1]; ++k) {
          const auto j = layer.children[k];
          table[i * nc + j] = bin(layer.locations[i], below.locations[j], lp.kernel.config);
        }
      z[s].assign(np * O, 0.0);
      for (std::size_t i = 0; i < np; ++i) {
        int count = 0;
        for (std::size_t j = 0; j < nc; ++j) count += table[i * nc + j] >= 0;
        for (int o = 0; o < O; ++o) {
          double sum = 0.0;
          for (std::size_t j = 0; j < nc; ++j) {
            const int kappa = table[i * nc + j];
            if (kappa < 0) continue;
            for (int c = 0; c < I; ++c)
              sum += lp.kernel.weights[kappa * msize + o * I + c] * act[s][l - 1][j * I + c];
          }
          z[s][i * O + o] = sum / count + lp.kernel.bias[o];
        }
      }
    }
    if (lp.has_batchnorm) {
      for (int o = 0; o < O; ++o) {
        double mean, var;
        if (train_mode) {
          double sum = 0.0;
          std::size_t n = 0;
          for (std::size_t s = 0; s < B; ++s)
            for (std::size_t i = o; i < z[s].size(); i += O) sum += z[s][i], ++n;
          mean = sum / n;
          double ss = 0.0;
          for (std::size_t s = 0; s < B; ++s)
            for (std::size_t i = o; i < z[s].size(); i += O) ss += (z[s][i] - mean) * (z[s][i] - mean);
          var = ss / n;
        } else {
          mean = lp.bn.running_mean[o];
          var = lp.bn.running_var[o];
        }
        for (std::size_t s = 0; s < B; ++s)
          for (std::size_t i = o; i < z[s].size(); i += O)
            z[s][i] = lp.bn.gamma[o] * (z[s][i] - mean) / std::sqrt(var + 1e-5) + lp.bn.beta[o];
      }
    }
    for (std::size_t s = 0; s < B; ++s) {
      for (auto& v : z[s]) v = v > 0 ? v : 0.0;
      act[s].push_back(std::move(z[s]));
    }
  }
  std::vector<std::vector<double>> logits(B);
  const int F = m.channels.back();
  for (std::size_t s = 0; s < B; ++s)
    for (int c = 0; c < m.num_classes; ++c) {
      double v = m.fc_bias[c];
      for (int f = 0; f < F; ++f) v += m.fc_weight[c * F + f] * act[s][L][f];
      logits[s].push_back(v);
    }
  return logits;
}

/// Mean cross-entropy by direct softmax in long double.
inline double mean_ce(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
  long double total = 0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    long double mx = logits[s][0];
    for (double v : logits[s]) mx = std::max<long double>(mx, v);
    long double z = 0;
    for (double v : logits[s]) z += std::exp(static_cast<long double>(v) - mx);
    total += std::log(z) + mx - logits[s][labels[s]];
  }
  return static_cast<double>(total / logits.size());
}

}  // namespace oracle

#endif  // SPHCONV_TESTS_ORACLES_HPP_
