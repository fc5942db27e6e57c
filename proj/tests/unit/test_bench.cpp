#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sphconv/bench.hpp"

using namespace sphconv;
using namespace sphconv::bench;
namespace fs = std::filesystem;

namespace {

float dist2(const Point3& a, const Point3& b) {
  const float dx = float(a.x) - float(b.x), dy = float(a.y) - float(b.y), dz = float(a.z) - float(b.z);
  return dx * dx + dy * dy + dz * dz;
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Bench, OneThousandGivesFourRows) {
  BenchConfig cfg;
  const auto report = bench_neighbors(cfg);
  ASSERT_EQ(report.rows.size(), 4u);
  for (const auto s : kAllStrategies) {
    const auto* r = report.find(s, 1000);
    ASSERT_NE(r, nullptr) << strategy_name(s);
    EXPECT_GT(r->median_ms, 0.0);
    EXPECT_EQ(r->repeats, 5);
  }
  EXPECT_GT(report.checksum, 0u);
}

TEST(Bench, RejectsBadConfig) {
  BenchConfig cfg;
  cfg.repeats = 4;
  EXPECT_THROW(bench_neighbors(cfg), ConfigError);
  cfg.repeats = 5;
  cfg.sizes = {2000, 1000};
  EXPECT_THROW(bench_neighbors(cfg), ConfigError);
}

TEST(Bench, OverBudgetRowsSkipped) {
  BenchConfig cfg;
  cfg.sizes = {500, 3000};
  cfg.max_points = 1000;
  cfg.strategies = {Strategy::kOctree, Strategy::kKnnBruteforce};
  std::vector<BenchRow> seen;
  const auto report = bench_neighbors(cfg, [&](const BenchRow& r) { seen.push_back(r); });
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_FALSE(report.rows[0].skipped());
  EXPECT_TRUE(report.rows[2].skipped());
  EXPECT_EQ(report.find(Strategy::kOctree, 3000), nullptr);
  std::ostringstream os;
  write_gnuplot(os, report);
  EXPECT_NE(os.str().find("3000 NaN NaN NaN NaN"), std::string::npos);
}

TEST(KdTree, KnnMatchesBruteForceSets) {
  const auto pts = uniform_cloud(3000, 1);
  const KdTree tree(pts);
  const SoaCloud soa(pts);
  const auto brute = knn_bruteforce(soa, 32);
  std::vector<std::uint32_t> got;
  for (std::size_t i = 0; i < pts.size(); i += 7) {
    tree.knn(pts[i], 32, got);
    ASSERT_EQ(got.size(), 32u);
    std::set<std::uint32_t> a(got.begin(), got.end());
    std::set<std::uint32_t> b(brute.begin() + i * 32, brute.begin() + (i + 1) * 32);
    if (a != b) {
      // Only an exact distance tie at the boundary may differ.
      float ka = 0, kb = 0;
      for (auto j : a) ka = std::max(ka, dist2(pts[i], pts[j]));
      for (auto j : b) kb = std::max(kb, dist2(pts[i], pts[j]));
      ASSERT_EQ(ka, kb) << "query " << i;
    }
    EXPECT_TRUE(a.count(static_cast<std::uint32_t>(i)));
  }
}

TEST(KdTree, RangeMatchesBruteForceScan) {
  const auto pts = uniform_cloud(5000, 2);
  const KdTree tree(pts, 5);
  const SoaCloud soa(pts);
  const float r = static_cast<float>(range_radius(pts.size(), 32));
  std::vector<std::uint32_t> got;
  double total = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    tree.radius(pts[i], r, got);
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got, range_bruteforce(soa, pts[i], r)) << "query " << i;
    total += got.size();
  }
  // Boundary losses pull the mean below the target but not far.
  EXPECT_GT(total / pts.size(), 20.0);
  EXPECT_LT(total / pts.size(), 34.0);
}

TEST(KdTree, DuplicatesAndTinyInputs) {
  PointCloud pts(50, Point3{0.25, 0.25, 0.25});
  pts.push_back({0.9, 0.9, 0.9});
  const KdTree tree(pts, 3);
  std::vector<std::uint32_t> got;
  tree.radius({0.25, 0.25, 0.25}, 0.0f, got);
  EXPECT_EQ(got.size(), 50u);
  tree.knn({1, 1, 1}, 1, got);
  EXPECT_EQ(got, (std::vector<std::uint32_t>{50}));
  tree.knn({0, 0, 0}, 100, got);
  EXPECT_EQ(got.size(), 51u);
  const KdTree empty(PointCloud{});
  empty.knn({0, 0, 0}, 4, got);
  EXPECT_TRUE(got.empty());
}

TEST(CrossCheck, PassesOnUniformCloud) {
  BenchConfig cfg;
  EXPECT_NO_THROW(cross_check(uniform_cloud(4000, 3), cfg, 64));
}

TEST(Csv, AppendOnlyAndFlushedPerRow) {
  const auto path = fs::temp_directory_path() / "sphconv_bench_test.csv";
  fs::remove(path);
  {
    CsvSink sink(path.string());
    sink({Strategy::kOctree, 10, 1.5, 5, {}});
    // Visible before the sink is destroyed.
    EXPECT_EQ(lines_of(path).size(), 2u);
  }
  {
    CsvSink sink(path.string());
    sink({Strategy::kRangeSearch, 20, 2.5, 5, "skipped: x"});
  }
  const auto lines = lines_of(path);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "strategy,size,median_ms,repeats,note");
  EXPECT_EQ(lines[1], "octree,10,1.5,5,");
  EXPECT_EQ(lines[2], "range_search,20,2.5,5,skipped: x");
}

TEST(Median, OddAndEven) {
  int calls = 0;
  EXPECT_GE(median_ms(5, [&] { ++calls; }), 0.0);
  EXPECT_EQ(calls, 5);
}

TEST(RangeRadius, BallVolume) {
  const double r = range_radius(10000, 32);
  EXPECT_NEAR(4.0 / 3.0 * std::numbers::pi * r * r * r / 8.0 * 10000, 32.0, 1e-9);
}

TEST(TimeInference, BreakdownAndTrend) {
  ModelSpec spec;
  spec.channels = {8, 8, 8, 16, 16, 16, 32, 32};
  spec.num_classes = 10;
  const auto params = make_model<float>(spec, 1);
  const auto t = time_inference(params, {30000, 50000}, 5, 1);
  ASSERT_EQ(t.size(), 2u);
  for (const auto& r : t) {
    EXPECT_GT(r.octree_ms, 0.0);
    EXPECT_GT(r.forward_ms, 0.0);
    EXPECT_DOUBLE_EQ(r.total_ms, r.octree_ms + r.forward_ms);
  }
  EXPECT_GT(t[1].octree_ms, t[0].octree_ms);
  EXPECT_THROW(time_inference(params, {100}, 0, 1), ConfigError);
}
