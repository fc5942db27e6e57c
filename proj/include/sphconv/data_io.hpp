#ifndef SPHCONV_DATA_IO_HPP_
#define SPHCONV_DATA_IO_HPP_

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sphconv/error.hpp"
#include "sphconv/geometry.hpp"
#include "sphconv/rng.hpp"

namespace sphconv {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<std::uint32_t, 3>> faces;
  std::size_t polygon_count = 0;  // face count declared in the header
};

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;
  std::string source;
};

struct Dataset {
  std::vector<std::string> class_names;
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

// ---------------------------------------------------------------------------
// OFF

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  /// Next line with content, comments stripped; false at end of input.
  bool next(std::string_view& line) {
    while (pos_ < text_.size()) {
      const auto nl = text_.find('\n', pos_);
      const auto end = nl == std::string_view::npos ? text_.size() : nl;
      line = text_.substr(pos_, end - pos_);
      pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
      ++line_no_;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      const auto first = line.find_first_not_of(" \t\r\f\v");
      if (first == std::string_view::npos) continue;
      line = line.substr(first);
      return true;
    }
    return false;
  }

  std::size_t line() const { return line_no_; }
  /// Line number reported for a premature end of input.
  std::size_t eof_line() const { return line_no_ + 1; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

inline bool parse_count(std::string_view s, long long& v) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

inline bool parse_real(std::string_view s, double& v) {
  // std::from_chars for double is available in libstdc++ >= 11.
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  return r.ec == std::errc{} && r.ptr == s.data() + s.size();
}

}  // namespace detail

/// Parses OFF text. The header counts may follow "OFF" on the same line; polygons
/// with more than three vertices are fan-triangulated.
inline TriangleMesh parse_off(std::string_view text) {
  detail::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ParseError(reader.eof_line(), "empty input, expected OFF header");
  if (line.substr(0, 3) != "OFF") throw ParseError(reader.line(), "missing OFF header");

  auto counts = detail::tokens(line.substr(3));
  std::size_t counts_line = reader.line();
  if (counts.empty()) {
    if (!reader.next(line)) throw ParseError(reader.eof_line(), "missing vertex/face counts");
    counts = detail::tokens(line);
    counts_line = reader.line();
  }
  long long nv = 0, nf = 0, ne = 0;
  if (counts.size() < 2 || counts.size() > 3 || !detail::parse_count(counts[0], nv) ||
      !detail::parse_count(counts[1], nf) || (counts.size() == 3 && !detail::parse_count(counts[2], ne)))
    throw ParseError(counts_line, "malformed counts line, expected 'vertices faces [edges]'");
  if (nv < 0 || nf < 0) throw ParseError(counts_line, "negative element count");

  TriangleMesh mesh;
  mesh.polygon_count = static_cast<std::size_t>(nf);
  mesh.vertices.reserve(static_cast<std::size_t>(nv));
  for (long long v = 0; v < nv; ++v) {
    if (!reader.next(line))
      throw ParseError(reader.eof_line(), "truncated file: expected " + std::to_string(nv) +
                                              " vertices, found " + std::to_string(v));
    const auto t = detail::tokens(line);
    Point3 p;
    if (t.size() < 3 || !detail::parse_real(t[0], p.x) || !detail::parse_real(t[1], p.y) ||
        !detail::parse_real(t[2], p.z))
      throw ParseError(reader.line(), "malformed vertex");
    if (!is_finite(p)) throw ParseError(reader.line(), "non-finite vertex coordinate");
    mesh.vertices.push_back(p);
  }
  for (long long f = 0; f < nf; ++f) {
    if (!reader.next(line))
      throw ParseError(reader.eof_line(), "truncated file: expected " + std::to_string(nf) +
                                              " faces, found " + std::to_string(f));
    const auto t = detail::tokens(line);
    long long k = 0;
    if (t.empty() || !detail::parse_count(t[0], k)) throw ParseError(reader.line(), "malformed face");
    if (k < 3) throw ParseError(reader.line(), "face needs at least 3 vertices");
    if (static_cast<long long>(t.size()) < k + 1)
      throw ParseError(reader.line(), "face lists fewer indices than declared");
    std::vector<std::uint32_t> idx(static_cast<std::size_t>(k));
    for (long long i = 0; i < k; ++i) {
      long long v = 0;
      if (!detail::parse_count(t[i + 1], v)) throw ParseError(reader.line(), "malformed face index");
      if (v < 0 || v >= nv)
        throw ParseError(reader.line(), "face index " + std::to_string(v) + " out of range");
      idx[i] = static_cast<std::uint32_t>(v);
    }
    for (std::size_t i = 1; i + 1 < idx.size(); ++i) mesh.faces.push_back({idx[0], idx[i], idx[i + 1]});
  }
  return mesh;
}

/// Minimal OFF writer: triangles only, full double precision.
inline std::string serialize_off(const TriangleMesh& mesh) {
  std::ostringstream os;
  os << std::setprecision(17) << "OFF\n"
     << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  for (const auto& v : mesh.vertices) os << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : mesh.faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  return os.str();
}

inline TriangleMesh read_off_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_off(ss.str());
}

// ---------------------------------------------------------------------------
// Surface sampling

inline double triangle_area(const Point3& a, const Point3& b, const Point3& c) {
  const Point3 u = b - a, v = c - a;
  const Point3 cr{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
  return 0.5 * norm(cr);
}

/// m points, triangle chosen with probability proportional to its area and the
/// position uniform inside it.
template <typename Rng>
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t m, Rng& rng) {
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw DataError("sample_surface: mesh has zero total area");

  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double pick = u(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double s = std::sqrt(u(rng));
    const double t = u(rng);
    const double wa = 1.0 - s, wb = s * (1.0 - t), wc = s * t;
    out.push_back(mesh.vertices[f[0]] * wa + mesh.vertices[f[1]] * wb + mesh.vertices[f[2]] * wc);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes

enum class ShapeKind { kSphere = 0, kCube = 1, kCylinder = 2, kTorus = 3 };

inline const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::kSphere: return "sphere";
    case ShapeKind::kCube: return "cube";
    case ShapeKind::kCylinder: return "cylinder";
    case ShapeKind::kTorus: return "torus";
  }
  return "?";
}

inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.35;

/// Uniform surface samples of a canonical shape: unit sphere, cube [-1,1]^3,
/// cylinder of radius 1 and height 2 along z (with caps), torus around z.
/// Each point gets isotropic Gaussian jitter of standard deviation `noise`.
template <typename Rng>
PointCloud sample_shape(ShapeKind kind, std::size_t m, double noise, Rng& rng) {
  constexpr double kPi = std::numbers::pi;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    Point3 p;
    switch (kind) {
      case ShapeKind::kSphere: {
        const double z = 2.0 * u(rng) - 1.0;
        const double a = 2.0 * kPi * u(rng);
        const double s = std::sqrt(1.0 - z * z);
        p = {s * std::cos(a), s * std::sin(a), z};
        break;
      }
      case ShapeKind::kCube: {
        const int face = static_cast<int>(u(rng) * 6.0) % 6;
        const double a = 2.0 * u(rng) - 1.0, b = 2.0 * u(rng) - 1.0;
        const double side = (face & 1) ? 1.0 : -1.0;
        switch (face / 2) {
          case 0: p = {side, a, b}; break;
          case 1: p = {a, side, b}; break;
          default: p = {a, b, side}; break;
        }
        break;
      }
      case ShapeKind::kCylinder: {
        // Lateral area 4*pi, caps 2*pi in total.
        const double a = 2.0 * kPi * u(rng);
        if (u(rng) < 2.0 / 3.0) {
          p = {std::cos(a), std::sin(a), 2.0 * u(rng) - 1.0};
        } else {
          const double r = std::sqrt(u(rng));
          p = {r * std::cos(a), r * std::sin(a), u(rng) < 0.5 ? -1.0 : 1.0};
        }
        break;
      }
      case ShapeKind::kTorus: {
        // Tube angle accepted with density proportional to (R + r cos v).
        double v;
        do {
          v = 2.0 * kPi * u(rng);
        } while (u(rng) * (kTorusMajor + kTorusMinor) > kTorusMajor + kTorusMinor * std::cos(v));
        const double a = 2.0 * kPi * u(rng);
        const double ring = kTorusMajor + kTorusMinor * std::cos(v);
        p = {ring * std::cos(a), ring * std::sin(a), kTorusMinor * std::sin(v)};
        break;
      }
    }
    if (noise > 0.0) p += Point3{g(rng), g(rng), g(rng)} * noise;
    out.push_back(p);
  }
  return out;
}

struct SynthConfig {
  int per_class = 125;
  std::size_t points = 1024;
  double noise = 0.01;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

/// Four-class labeled dataset (sphere, cube, cylinder, torus). Every sample gets
/// a random scale and a random rotation about z, then is normalized. Splits are
/// class balanced: the first round(train_fraction * per_class) samples of each
/// class go to train.
inline Dataset synth_dataset(const SynthConfig& cfg) {
  if (cfg.points < 64) throw ConfigError("synth_dataset: at least 64 points per sample");
  if (cfg.per_class < 1) throw ConfigError("synth_dataset: per_class must be positive");
  constexpr ShapeKind kinds[] = {ShapeKind::kSphere, ShapeKind::kCube, ShapeKind::kCylinder,
                                 ShapeKind::kTorus};
  Dataset ds;
  for (auto k : kinds) ds.class_names.emplace_back(shape_name(k));
  const int n_train = static_cast<int>(std::lround(cfg.train_fraction * cfg.per_class));
  for (int label = 0; label < 4; ++label) {
    for (int i = 0; i < cfg.per_class; ++i) {
      auto rng = make_rng(cfg.seed, streams::kSynth,
                          static_cast<std::uint64_t>(label) * 1000003ULL + static_cast<std::uint64_t>(i));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const double scale = 0.5 + u(rng);
      const double angle = 2.0 * std::numbers::pi * u(rng);
      PointCloud pts = sample_shape(kinds[label], cfg.points, cfg.noise, rng);
      for (auto& p : pts) p = rotate_z(p, angle) * scale;
      LabeledCloud lc{normalize_cloud(pts), label,
                      std::string(shape_name(kinds[label])) + "_" + std::to_string(i)};
      (i < n_train ? ds.train : ds.test).push_back(std::move(lc));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Point caches: 8-byte magic, little-endian u64 count, then float32 x y z triples.

inline constexpr char kCloudMagic[8] = {'S', 'P', 'H', 'C', 'P', 'T', 'S', '1'};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  static_assert(std::is_unsigned_v<U>);
  for (std::size_t i = 0; i < sizeof(U); ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::istream& is) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const int c = is.get();
    if (c == EOF) throw DataError("unexpected end of binary data");
    v |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_cloud_cache(std::ostream& os, const PointCloud& cloud) {
  os.write(kCloudMagic, sizeof(kCloudMagic));
  detail::put_le<std::uint64_t>(os, cloud.size());
  for (const auto& p : cloud)
    for (double v : {p.x, p.y, p.z}) detail::put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline PointCloud read_cloud_cache(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCloudMagic, sizeof(magic)) != 0)
    throw DataError("point cache: bad magic");
  const auto count = detail::get_le<std::uint64_t>(is);
  PointCloud cloud;
  cloud.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 24)));
  for (std::uint64_t i = 0; i < count; ++i) {
    float xyz[3];
    for (auto& v : xyz) v = std::bit_cast<float>(detail::get_le<std::uint32_t>(is));
    cloud.push_back({xyz[0], xyz[1], xyz[2]});
  }
  return cloud;
}

inline void write_cloud_cache(const std::filesystem::path& path, const PointCloud& cloud) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  write_cloud_cache(os, cloud);
}

inline PointCloud read_cloud_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_cloud_cache(is);
}

// ---------------------------------------------------------------------------
// Directory ingestion: <root>/<class>/<split>/<name>.off

struct IngestReport {
  std::size_t written = 0;
  std::vector<std::string> failures;
  std::vector<std::string> warnings;
};

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Samples every mesh into a point cache under out_dir (same layout, ".pts") and
/// writes out_dir/index.csv. Each file draws from its own stream keyed by its
/// relative path, so results do not depend on traversal order.
inline IngestReport ingest_directory(const std::filesystem::path& root,
                                     const std::filesystem::path& out_dir, std::size_t points,
                                     std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  IngestReport report;
  std::vector<fs::path> classes;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) classes.push_back(e.path());
  std::sort(classes.begin(), classes.end());

  fs::create_directories(out_dir);
  std::ofstream index(out_dir / "index.csv", std::ios::trunc);
  index << "label,class,split,name,path,points\n";
  int label = 0;
  for (const auto& cls : classes) {
    std::vector<fs::path> files;
    for (const char* split : {"train", "test"}) {
      const fs::path dir = cls / split;
      if (!fs::is_directory(dir)) continue;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".off") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      report.warnings.push_back("class '" + cls.filename().string() + "' has no OFF files, skipped");
      continue;
    }
    const std::string cname = cls.filename().string();
    for (const auto& f : files) {
      const std::string split = f.parent_path().filename().string();
      const std::string rel = cname + "/" + split + "/" + f.filename().string();
      try {
        const auto mesh = read_off_file(f);
        auto rng = make_rng(seed, streams::kSample, fnv1a(rel));
        const auto cloud = sample_surface(mesh, points, rng);
        const fs::path out = out_dir / cname / split / (f.stem().string() + ".pts");
        write_cloud_cache(out, cloud);
        index << label << ',' << cname << ',' << split << ',' << f.stem().string() << ','
              << fs::relative(out, out_dir).generic_string() << ',' << cloud.size() << '\n';
        ++report.written;
      } catch (const Error& e) {
        report.failures.push_back(rel + ": " + e.what());
      }
    }
    ++label;
  }
  return report;
}

/// Loads a dataset written by ingest_directory; every cloud is normalized.
inline Dataset load_ingested(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.csv");
  if (!in) throw DataError("missing index.csv in " + dir.string());
  Dataset ds;
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParseError(line_no, "index.csv: expected 6 fields");
    const int label = std::stoi(f[0]);
    if (label < 0) throw ParseError(line_no, "index.csv: negative label");
    if (static_cast<int>(ds.class_names.size()) <= label) ds.class_names.resize(label + 1);
    ds.class_names[label] = f[1];
    LabeledCloud lc{normalize_cloud(read_cloud_cache(dir / f[4])), label, f[1] + "/" + f[3]};
    (f[2] == "test" ? ds.test : ds.train).push_back(std::move(lc));
  }
  return ds;
}

}  // namespace sphconv

#endif  // SPHCONV_DATA_IO_HPP_
