#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "../support/off_corpus.hpp"
#include "sphconv/data_io.hpp"
#include "sphconv/rng.hpp"

using namespace sphconv;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sphconv_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kTetra =
    "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

}  // namespace

class OffCorpus : public ::testing::TestWithParam<offcorpus::Case> {};

TEST_P(OffCorpus, Case) {
  const auto r = offcorpus::run(GetParam());
  EXPECT_TRUE(r.passed) << r.detail;
}

INSTANTIATE_TEST_SUITE_P(Parse, OffCorpus, ::testing::ValuesIn(offcorpus::cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Off, CorpusSize) { EXPECT_GE(offcorpus::cases().size(), 15u); }

TEST(Off, RandomRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10, 10);
  TriangleMesh mesh;
  for (int i = 0; i < 200; ++i) mesh.vertices.push_back({u(rng), u(rng), u(rng)});
  for (int i = 0; i < 300; ++i)
    mesh.faces.push_back({std::uint32_t(rng() % 200), std::uint32_t(rng() % 200), std::uint32_t(rng() % 200)});
  const auto back = parse_off(serialize_off(mesh));
  EXPECT_EQ(back.vertices, mesh.vertices);
  EXPECT_EQ(back.faces, mesh.faces);
}

TEST(Sampling, SingleTriangleBarycentric) {
  const auto mesh = parse_off(offcorpus::cases()[0].text);
  auto rng = make_rng(1, streams::kSample);
  const auto pts = sample_surface(mesh, 5000, rng);
  ASSERT_EQ(pts.size(), 5000u);
  for (const auto& p : pts) {
    // Triangle (0,0,0) (1,0,0) (0,1,0): barycentric coordinates are (1-x-y, x, y).
    EXPECT_GE(p.x, 0.0);
    EXPECT_GE(p.y, 0.0);
    EXPECT_LE(p.x + p.y, 1.0 + 1e-15);
    EXPECT_EQ(p.z, 0.0);
  }
}

TEST(Sampling, AreaWeighted) {
  // Triangles of area 1 (z = 0) and 3 (z = 1).
  TriangleMesh mesh;
  mesh.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 1, 0}, {0, 0, 1}, {6, 0, 1}, {0, 1, 1}};
  mesh.faces = {{0, 1, 2}, {3, 4, 5}};
  auto rng = make_rng(2, streams::kSample);
  const auto pts = sample_surface(mesh, 100000, rng);
  std::size_t upper = 0;
  for (const auto& p : pts) upper += p.z > 0.5;
  EXPECT_NEAR(upper / 100000.0, 0.75, 0.02);
}

TEST(Sampling, SizeDeterminismAndErrors) {
  const auto mesh = parse_off(kTetra);
  auto a = make_rng(3, streams::kSample);
  auto b = make_rng(3, streams::kSample);
  const auto pa = sample_surface(mesh, 30000, a);
  EXPECT_EQ(pa.size(), 30000u);
  EXPECT_EQ(pa, sample_surface(mesh, 30000, b));
  TriangleMesh flat;
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  flat.faces = {{0, 1, 2}};
  EXPECT_THROW(sample_surface(flat, 10, a), DataError);
}

TEST(Synth, SphereRadius) {
  auto rng = make_rng(4, streams::kSynth);
  const double noise = 0.01;
  const auto pts = sample_shape(ShapeKind::kSphere, 20000, noise, rng);
  std::size_t inside = 0;
  for (const auto& p : pts) inside += std::abs(norm(p) - 1.0) <= 3 * noise;
  EXPECT_GE(inside, 0.99 * pts.size());
}

TEST(Synth, ShapesOnTheirSurfaces) {
  auto rng = make_rng(5, streams::kSynth);
  for (const auto& p : sample_shape(ShapeKind::kCube, 2000, 0.0, rng))
    EXPECT_NEAR(std::max({std::abs(p.x), std::abs(p.y), std::abs(p.z)}), 1.0, 1e-15);
  for (const auto& p : sample_shape(ShapeKind::kCylinder, 2000, 0.0, rng)) {
    const double r = std::hypot(p.x, p.y);
    EXPECT_TRUE(std::abs(r - 1.0) < 1e-12 || (std::abs(std::abs(p.z) - 1.0) < 1e-15 && r <= 1.0));
  }
  for (const auto& p : sample_shape(ShapeKind::kTorus, 2000, 0.0, rng)) {
    const double ring = std::hypot(p.x, p.y) - kTorusMajor;
    EXPECT_NEAR(std::hypot(ring, p.z), kTorusMinor, 1e-12);
  }
}

TEST(Synth, BalancedDeterministicNormalized) {
  SynthConfig cfg;
  cfg.per_class = 10;
  cfg.points = 128;
  cfg.seed = 9;
  const auto a = synth_dataset(cfg);
  ASSERT_EQ(a.num_classes(), 4);
  EXPECT_EQ(a.train.size(), 32u);
  EXPECT_EQ(a.test.size(), 8u);
  std::vector<int> tr(4), te(4);
  for (const auto& s : a.train) ++tr[s.label];
  for (const auto& s : a.test) ++te[s.label];
  EXPECT_EQ(tr, (std::vector<int>{8, 8, 8, 8}));
  EXPECT_EQ(te, (std::vector<int>{2, 2, 2, 2}));
  for (const auto& s : a.train) {
    ASSERT_EQ(s.cloud.size(), 128u);
    for (const auto& p : s.cloud)
      for (int k = 0; k < 3; ++k) ASSERT_LE(std::abs(p[k]), 1.0);
  }
  const auto b = synth_dataset(cfg);
  EXPECT_EQ(a.train[3].cloud, b.train[3].cloud);
  cfg.seed = 10;
  const auto c = synth_dataset(cfg);
  EXPECT_NE(a.train[3].cloud, c.train[3].cloud);
  cfg.points = 63;
  EXPECT_THROW(synth_dataset(cfg), ConfigError);
}

TEST(Cache, RoundTripAndMagic) {
  PointCloud pts{{0.5, -0.25, 1.0}, {0.125, 0.75, -1.0}};
  std::stringstream ss;
  write_cloud_cache(ss, pts);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 8u + 8u + 2 * 12u);
  EXPECT_EQ(bytes.substr(0, 8), "SPHCPTS1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 2u);  // little-endian count
  EXPECT_EQ(read_cloud_cache(ss), pts);
  std::stringstream bad("NOTMAGIC");
  EXPECT_THROW(read_cloud_cache(bad), DataError);
  std::stringstream truncated(bytes.substr(0, 20));
  EXPECT_THROW(read_cloud_cache(truncated), DataError);
}

TEST(Ingest, LayoutDeterminismAndFailures) {
  const auto root = scratch_dir("ingest_src");
  for (const char* cls : {"alpha", "beta"}) {
    fs::create_directories(root / cls / "train");
    fs::create_directories(root / cls / "test");
    std::ofstream(root / cls / "train" / "m1.off") << kTetra;
    std::ofstream(root / cls / "test" / "m2.off") << kTetra;
  }
  fs::create_directories(root / "empty" / "train");
  std::ofstream(root / "beta" / "train" / "broken.off") << "OFF\n3 1 0\n0 0 0\n";

  const auto out1 = scratch_dir("ingest_out1");
  const auto out2 = scratch_dir("ingest_out2");
  const auto r1 = ingest_directory(root, out1, 300, 7);
  const auto r2 = ingest_directory(root, out2, 300, 7);
  EXPECT_EQ(r1.written, 4u);
  ASSERT_EQ(r1.failures.size(), 1u);
  EXPECT_NE(r1.failures[0].find("broken.off"), std::string::npos);
  ASSERT_EQ(r1.warnings.size(), 1u);
  EXPECT_NE(r1.warnings[0].find("empty"), std::string::npos);
  EXPECT_EQ(slurp(out1 / "alpha" / "train" / "m1.pts"), slurp(out2 / "alpha" / "train" / "m1.pts"));
  EXPECT_EQ(slurp(out1 / "index.csv"), slurp(out2 / "index.csv"));
  EXPECT_EQ(read_cloud_cache(out1 / "beta" / "test" / "m2.pts").size(), 300u);
  // Same mesh at a different path draws a different sample.
  EXPECT_NE(slurp(out1 / "alpha" / "train" / "m1.pts"), slurp(out1 / "beta" / "train" / "m1.pts"));

  const auto ds = load_ingested(out1);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"alpha", "beta"}));
  EXPECT_EQ(ds.train.size(), 2u);
  EXPECT_EQ(ds.test.size(), 2u);
  for (const auto& s : ds.train)
    for (const auto& p : s.cloud)
      for (int k = 0; k < 3; ++k) ASSERT_LE(std::abs(p[k]), 1.0);
  EXPECT_THROW(ingest_directory(root / "nope", out1, 10, 1), DataError);
}
