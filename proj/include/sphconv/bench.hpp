#ifndef SPHCONV_BENCH_HPP_
#define SPHCONV_BENCH_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sphconv/error.hpp"
#include "sphconv/geometry.hpp"
#include "sphconv/network.hpp"
#include "sphconv/octree.hpp"
#include "sphconv/rng.hpp"

namespace sphconv::bench {

/// Structure-of-arrays float copy of a cloud, used by the brute-force scans.
struct SoaCloud {
  std::vector<float> x, y, z;

  explicit SoaCloud(std::span<const Point3> pts) {
    x.reserve(pts.size());
    y.reserve(pts.size());
    z.reserve(pts.size());
    for (const auto& p : pts) {
      x.push_back(static_cast<float>(p.x));
      y.push_back(static_cast<float>(p.y));
      z.push_back(static_cast<float>(p.z));
    }
  }
  std::size_t size() const { return x.size(); }
};

namespace detail {

/// Bounded max-heap of (squared distance, index) keeping the k smallest.
class KBest {
 public:
  explicit KBest(std::size_t k) : k_(k) { heap_.reserve(k + 1); }

  float bound() const {
    return heap_.size() < k_ ? std::numeric_limits<float>::infinity() : heap_.front().first;
  }
  void push(float d, std::uint32_t i) {
    if (heap_.size() == k_ && !(d < heap_.front().first)) return;
    heap_.emplace_back(d, i);
    std::push_heap(heap_.begin(), heap_.end());
    if (heap_.size() > k_) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.pop_back();
    }
  }
  void clear() { heap_.clear(); }
  const std::vector<std::pair<float, std::uint32_t>>& items() const { return heap_; }

 private:
  std::size_t k_;
  std::vector<std::pair<float, std::uint32_t>> heap_;
};

}  // namespace detail

/// K nearest neighbours (the query itself included) of every point by exhaustive
/// scan. Result is n*k indices, unordered within each row. Distances are
/// evaluated in blocks so the inner loop vectorizes; a block is only scanned
/// for insertion when one of its distances beats the current k-th best.
inline std::vector<std::uint32_t> knn_bruteforce(const SoaCloud& c, std::size_t k) {
  const std::size_t n = c.size();
  k = std::min(k, n);
  constexpr std::size_t kBlock = 256;
  std::vector<std::uint32_t> out(n * k);
  float d[kBlock];
  detail::KBest best(k);
  for (std::size_t i = 0; i < n; ++i) {
    const float qx = c.x[i], qy = c.y[i], qz = c.z[i];
    best.clear();
    for (std::size_t b = 0; b < n; b += kBlock) {
      const std::size_t m = std::min(kBlock, n - b);
      const float bound = best.bound();
      int hit = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const float dx = c.x[b + j] - qx, dy = c.y[b + j] - qy, dz = c.z[b + j] - qz;
        d[j] = dx * dx + dy * dy + dz * dz;
        hit |= d[j] < bound;
      }
      if (!hit) continue;
      for (std::size_t j = 0; j < m; ++j)
        if (d[j] < best.bound()) best.push(d[j], static_cast<std::uint32_t>(b + j));
    }
    std::size_t w = i * k;
    for (const auto& [dist, idx] : best.items()) out[w++] = idx;
  }
  return out;
}

/// Indices within `radius` of `query` (inclusive), ascending.
inline std::vector<std::uint32_t> range_bruteforce(const SoaCloud& c, const Point3& query,
                                                   float radius) {
  std::vector<std::uint32_t> out;
  const float r2 = radius * radius;
  const float qx = static_cast<float>(query.x), qy = static_cast<float>(query.y),
              qz = static_cast<float>(query.z);
  for (std::size_t j = 0; j < c.size(); ++j) {
    const float dx = c.x[j] - qx, dy = c.y[j] - qy, dz = c.z[j] - qz;
    if (dx * dx + dy * dy + dz * dz <= r2) out.push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

/// Median-split kd-tree over float coordinates with small leaf buckets.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> pts, std::size_t leaf_size = 12)
      : leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    coords_.reserve(pts.size() * 3);
    for (const auto& p : pts) {
      coords_.push_back(static_cast<float>(p.x));
      coords_.push_back(static_cast<float>(p.y));
      coords_.push_back(static_cast<float>(p.z));
    }
    index_.resize(pts.size());
    std::iota(index_.begin(), index_.end(), 0u);
    nodes_.reserve(2 * pts.size() / leaf_size_ + 1);
    if (!pts.empty()) build(0, static_cast<std::uint32_t>(pts.size()));
  }

  std::size_t size() const { return index_.size(); }

  void knn(const Point3& q, std::size_t k, std::vector<std::uint32_t>& out) const {
    detail::KBest best(std::min(k, size()));
    const float qp[3] = {static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z)};
    if (!nodes_.empty()) knn_visit(0, qp, best);
    out.clear();
    for (const auto& [d, i] : best.items()) out.push_back(i);
  }

  void radius(const Point3& q, float r, std::vector<std::uint32_t>& out) const {
    out.clear();
    const float qp[3] = {static_cast<float>(q.x), static_cast<float>(q.y), static_cast<float>(q.z)};
    if (!nodes_.empty()) radius_visit(0, qp, r * r, out);
  }

 private:
  struct Node {
    float split = 0.0f;
    std::int32_t axis = -1;  // -1 marks a leaf
    std::uint32_t begin = 0, end = 0;
    std::uint32_t left = 0, right = 0;
  };

  float coord(std::uint32_t i, int axis) const { return coords_[3 * i + axis]; }

  std::uint32_t build(std::uint32_t b, std::uint32_t e) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (e - b <= leaf_size_) {
      nodes_[id].begin = b;
      nodes_[id].end = e;
      return id;
    }
    float lo[3] = {std::numeric_limits<float>::max(), std::numeric_limits<float>::max(),
                   std::numeric_limits<float>::max()};
    float hi[3] = {std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest(),
                   std::numeric_limits<float>::lowest()};
    for (auto k = b; k < e; ++k)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], coord(index_[k], a));
        hi[a] = std::max(hi[a], coord(index_[k], a));
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    const std::uint32_t mid = b + (e - b) / 2;
    std::nth_element(index_.begin() + b, index_.begin() + mid, index_.begin() + e,
                     [&](std::uint32_t i, std::uint32_t j) { return coord(i, axis) < coord(j, axis); });
    const float split = coord(index_[mid], axis);
    const auto l = build(b, mid);
    const auto r = build(mid, e);
    nodes_[id] = {split, axis, b, e, l, r};
    return id;
  }

  float dist2(std::uint32_t i, const float* q) const {
    const float dx = coords_[3 * i] - q[0], dy = coords_[3 * i + 1] - q[1], dz = coords_[3 * i + 2] - q[2];
    return dx * dx + dy * dy + dz * dz;
  }

  void knn_visit(std::uint32_t id, const float* q, detail::KBest& best) const {
    const Node& nd = nodes_[id];
    if (nd.axis < 0) {
      for (auto k = nd.begin; k < nd.end; ++k) best.push(dist2(index_[k], q), index_[k]);
      return;
    }
    const float diff = q[nd.axis] - nd.split;
    const auto near = diff < 0 ? nd.left : nd.right;
    const auto far = diff < 0 ? nd.right : nd.left;
    knn_visit(near, q, best);
    if (diff * diff <= best.bound()) knn_visit(far, q, best);
  }

  void radius_visit(std::uint32_t id, const float* q, float r2, std::vector<std::uint32_t>& out) const {
    const Node& nd = nodes_[id];
    if (nd.axis < 0) {
      for (auto k = nd.begin; k < nd.end; ++k)
        if (dist2(index_[k], q) <= r2) out.push_back(index_[k]);
      return;
    }
    const float diff = q[nd.axis] - nd.split;
    // Points equal to the split value can sit on either side of the median.
    if (diff <= 0 || diff * diff <= r2) radius_visit(nd.left, q, r2, out);
    if (diff >= 0 || diff * diff <= r2) radius_visit(nd.right, q, r2, out);
  }

  std::size_t leaf_size_;
  std::vector<float> coords_;
  std::vector<std::uint32_t> index_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Harness

enum class Strategy { kOctree, kKdTree, kKnnBruteforce, kRangeSearch };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kOctree: return "octree";
    case Strategy::kKdTree: return "kdtree";
    case Strategy::kKnnBruteforce: return "knn_bruteforce";
    case Strategy::kRangeSearch: return "range_search";
  }
  return "?";
}

inline constexpr Strategy kAllStrategies[] = {Strategy::kOctree, Strategy::kKdTree,
                                              Strategy::kKnnBruteforce, Strategy::kRangeSearch};

struct BenchRow {
  Strategy strategy = Strategy::kOctree;
  std::size_t point_count = 0;
  double median_ms = 0.0;
  int repeats = 0;
  std::string note;  // non-empty for skipped rows

  bool skipped() const { return !note.empty(); }
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::uint64_t checksum = 0;  // sum of result sizes, so the work is observable

  const BenchRow* find(Strategy s, std::size_t n) const {
    for (const auto& r : rows)
      if (r.strategy == s && r.point_count == n && !r.skipped()) return &r;
    return nullptr;
  }
};

struct BenchConfig {
  std::vector<std::size_t> sizes{1000};
  std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
  int repeats = 5;
  int octree_depth = 8;
  std::size_t k = 32;
  double mean_neighbors = 32.0;  // target for the range-search radius
  std::size_t max_points = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Radius whose ball holds `mean_neighbors` points on average for n uniform
/// points in [-1, 1]^3 (boundary effects ignored).
inline double range_radius(std::size_t n, double mean_neighbors) {
  return std::cbrt(mean_neighbors * 8.0 * 3.0 / (4.0 * std::numbers::pi * static_cast<double>(n)));
}

inline PointCloud uniform_cloud(std::size_t n, std::uint64_t seed) {
  auto rng = make_rng(seed, streams::kBench, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

template <typename F>
double median_ms(int repeats, F&& f) {
  std::vector<double> t;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    t.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(t.begin(), t.end());
  const std::size_t m = t.size() / 2;
  return t.size() % 2 ? t[m] : 0.5 * (t[m - 1] + t[m]);
}

namespace detail {

/// Calls f(i, scratch) for every query, split across threads; returns the sum of
/// the sizes f reports.
template <typename F>
std::uint64_t query_all(std::size_t n, unsigned threads, F&& f) {
  threads = std::max(1u, threads);
  std::vector<std::uint64_t> acc(threads, 0);
  const std::size_t chunk = (n + threads - 1) / threads;
  auto work = [&](unsigned t) {
    std::vector<std::uint32_t> buf;
    const std::size_t b = t * chunk, e = std::min(n, b + chunk);
    for (std::size_t i = b; i < e; ++i) acc[t] += f(i, buf);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  return std::accumulate(acc.begin(), acc.end(), std::uint64_t{0});
}

}  // namespace detail

/// Checks the indexed searches against brute-force scans on a sample of queries.
/// Throws NumericError on the first disagreement.
inline void cross_check(std::span<const Point3> pts, const BenchConfig& cfg, std::size_t queries = 32) {
  const KdTree tree(pts);
  const SoaCloud soa(pts);
  const float r = static_cast<float>(range_radius(pts.size(), cfg.mean_neighbors));
  const std::size_t k = std::min(cfg.k, pts.size());
  const std::size_t stride = std::max<std::size_t>(1, pts.size() / queries);
  std::vector<std::uint32_t> got;
  for (std::size_t i = 0; i < pts.size(); i += stride) {
    tree.radius(pts[i], r, got);
    std::sort(got.begin(), got.end());
    if (got != range_bruteforce(soa, pts[i], r))
      throw NumericError("kd-tree range search disagrees with brute-force scan at query " +
                         std::to_string(i));
    // K-NN: the k-th smallest distance must match (ties make index sets ambiguous).
    std::vector<float> d(soa.size());
    for (std::size_t j = 0; j < soa.size(); ++j) {
      const float dx = soa.x[j] - soa.x[i], dy = soa.y[j] - soa.y[i], dz = soa.z[j] - soa.z[i];
      d[j] = dx * dx + dy * dy + dz * dz;
    }
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    tree.knn(pts[i], k, got);
    float worst = 0.0f;
    for (auto j : got) {
      const float dx = soa.x[j] - soa.x[i], dy = soa.y[j] - soa.y[i], dz = soa.z[j] - soa.z[i];
      worst = std::max(worst, dx * dx + dy * dy + dz * dz);
    }
    if (got.size() != k || worst != d[k - 1])
      throw NumericError("kd-tree K-NN disagrees with brute force at query " + std::to_string(i));
  }
}

/// Runs one timed workload; the result sink keeps the optimizer from eliding it.
inline double run_strategy(Strategy s, std::span<const Point3> pts, const BenchConfig& cfg,
                           std::uint64_t& sink) {
  switch (s) {
    case Strategy::kOctree:
      return median_ms(cfg.repeats, [&] {
        const auto tree = build_octree(pts, cfg.octree_depth);
        sink += tree.levels.back().locations.size();
      });
    case Strategy::kKdTree:
      return median_ms(cfg.repeats, [&] {
        const KdTree tree(pts);
        sink += detail::query_all(pts.size(), cfg.threads, [&](std::size_t i, std::vector<std::uint32_t>& buf) {
          tree.knn(pts[i], cfg.k, buf);
          return buf.size();
        });
      });
    case Strategy::kKnnBruteforce:
      return median_ms(cfg.repeats, [&] {
        const SoaCloud soa(pts);
        sink += knn_bruteforce(soa, cfg.k).size();
      });
    case Strategy::kRangeSearch: {
      const float r = static_cast<float>(range_radius(pts.size(), cfg.mean_neighbors));
      return median_ms(cfg.repeats, [&] {
        const KdTree tree(pts);
        sink += detail::query_all(pts.size(), cfg.threads, [&](std::size_t i, std::vector<std::uint32_t>& buf) {
          tree.radius(pts[i], r, buf);
          return buf.size();
        });
      });
    }
  }
  return 0.0;
}

/// Appends rows to a CSV file, flushing after each so a crash keeps finished rows.
class CsvSink {
 public:
  explicit CsvSink(const std::string& path) {
    const bool fresh = !std::ifstream(path).good() || std::ifstream(path).peek() == EOF;
    os_.open(path, std::ios::app);
    if (!os_) throw DataError("cannot write " + path);
    if (fresh) os_ << "strategy,size,median_ms,repeats,note\n" << std::flush;
  }
  void operator()(const BenchRow& r) {
    os_ << strategy_name(r.strategy) << ',' << r.point_count << ',' << r.median_ms << ','
        << r.repeats << ',' << r.note << '\n'
        << std::flush;
  }

 private:
  std::ofstream os_;
};

inline constexpr int kMinRepeats = 5;

/// Times every (size, strategy) pair after cross-checking the indexed searches.
/// `on_row` sees each row as soon as it is measured.
inline BenchReport bench_neighbors(const BenchConfig& cfg,
                                   const std::function<void(const BenchRow&)>& on_row = {}) {
  if (cfg.repeats < kMinRepeats) throw ConfigError("repeats must be >= 5");
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (!std::is_sorted(cfg.sizes.begin(), cfg.sizes.end()))
    throw ConfigError("sizes must be sorted ascending");
  BenchReport report;
  std::uint64_t sink = 0;
  for (const std::size_t n : cfg.sizes) {
    if (n == 0) throw ConfigError("point count must be positive");
    const auto pts = uniform_cloud(n, cfg.seed);
    if (n <= cfg.max_points) cross_check(pts, cfg);
    for (const auto s : cfg.strategies) {
      BenchRow row{s, n, 0.0, cfg.repeats, {}};
      if (n > cfg.max_points)
        row.note = "skipped: exceeds point budget " + std::to_string(cfg.max_points);
      else
        row.median_ms = run_strategy(s, pts, cfg, sink);
      report.rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  report.checksum = sink;
  return report;
}

/// Whitespace table with one line per size and one column per strategy; skipped
/// cells are written as NaN so gnuplot leaves gaps.
inline void write_gnuplot(std::ostream& os, const BenchReport& report) {
  std::vector<std::size_t> sizes;
  for (const auto& r : report.rows)
    if (std::find(sizes.begin(), sizes.end(), r.point_count) == sizes.end()) sizes.push_back(r.point_count);
  os << "# points";
  for (const auto s : kAllStrategies) os << ' ' << strategy_name(s);
  os << '\n';
  for (const auto n : sizes) {
    os << n;
    for (const auto s : kAllStrategies) {
      const auto* r = report.find(s, n);
      os << ' ';
      if (r) os << r->median_ms;
      else os << "NaN";
    }
    os << '\n';
  }
}

struct InferenceTiming {
  std::size_t point_count = 0;
  double octree_ms = 0.0;
  double forward_ms = 0.0;
  double total_ms = 0.0;
};

/// Times plan construction and one evaluation-mode forward pass on a uniform
/// cloud of each size. Figures come from the repeat with the median total, so
/// total_ms == octree_ms + forward_ms.
template <typename T>
std::vector<InferenceTiming> time_inference(const ModelParams<T>& params,
                                            const std::vector<std::size_t>& sizes, int repeats,
                                            std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  const int depth = static_cast<int>(params.layers.size());
  std::vector<InferenceTiming> out;
  for (const auto n : sizes) {
    const auto pts = uniform_cloud(n, seed);
    std::vector<InferenceTiming> runs;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto plan = build_plan(pts, depth);
      const auto t1 = std::chrono::steady_clock::now();
      const auto tape = forward(plan, params, Mode::kEval);
      const auto t2 = std::chrono::steady_clock::now();
      if (tape.samples.front().logits.empty()) throw NumericError("empty logits");
      InferenceTiming t;
      t.point_count = n;
      t.octree_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      t.forward_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
      t.total_ms = t.octree_ms + t.forward_ms;
      runs.push_back(t);
    }
    std::sort(runs.begin(), runs.end(),
              [](const auto& a, const auto& b) { return a.total_ms < b.total_ms; });
    out.push_back(runs[runs.size() / 2]);
  }
  return out;
}

}  // namespace sphconv::bench

#endif  // SPHCONV_BENCH_HPP_
