#ifndef SPHCONV_KERNEL_HPP_
#define SPHCONV_KERNEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sphconv/error.hpp"
#include "sphconv/geometry.hpp"

namespace sphconv {

inline constexpr double kDefaultRadialEpsilon = 1e-9;

/// Bin edges of a spherical kernel. Azimuth edges span [-pi, pi], elevation edges
/// span [-pi/2, pi/2] and radial edges run from a small positive epsilon up to rho.
struct KernelConfig {
  std::vector<double> theta_edges;
  std::vector<double> phi_edges;
  std::vector<double> r_edges;
  double rho = 1.0;

  int n() const { return static_cast<int>(theta_edges.size()) - 1; }
  int p() const { return static_cast<int>(phi_edges.size()) - 1; }
  int q() const { return static_cast<int>(r_edges.size()) - 1; }

  /// n*p*q angular/radial bins plus the self-convolution bin.
  int bin_count() const { return n() * p() * q() + 1; }

  bool operator==(const KernelConfig&) const = default;
};

/// Packed bin id: 0 is self-convolution, otherwise
/// kappa = k_theta + (k_phi - 1) * n + (k_r - 1) * n * p with 1-based sub-indices.
struct BinIndex {
  std::uint32_t kappa = 0;

  bool is_self() const { return kappa == 0; }
  friend bool operator==(BinIndex, BinIndex) = default;
};

inline BinIndex pack_bin(int k_theta, int k_phi, int k_r, int n, int p) {
  return {static_cast<std::uint32_t>(k_theta + (k_phi - 1) * n + (k_r - 1) * n * p)};
}

struct UnpackedBin {
  int k_theta = 0;
  int k_phi = 0;
  int k_r = 0;
};

inline UnpackedBin unpack_bin(BinIndex b, int n, int p) {
  if (b.is_self()) return {};
  const int v = static_cast<int>(b.kappa) - 1;
  return {v % n + 1, (v / n) % p + 1, v / (n * p) + 1};
}

// ---------------------------------------------------------------------------
// Validation

struct KernelViolation {
  enum class Kind {
    kMalformed,          // edge arrays unsorted, out of range, or too short
    kThetaStraddlesZero, // Theta_k * Theta_{k+1} < 0
    kPhiStraddlesZero,   // Phi_k * Phi_{k+1} < 0
    kTooFewAzimuthBins,  // n <= 2
    kAzimuthBinTooWide,  // an azimuth bin of width >= pi holds both 0 and pi
  };
  Kind kind = Kind::kMalformed;
  int first_edge = 0;  // 1-based index of the left edge of the offending pair
  std::string message;
};

struct ValidationReport {
  std::vector<KernelViolation> violations;

  bool ok() const { return violations.empty(); }
  bool has(KernelViolation::Kind kind) const {
    return std::any_of(violations.begin(), violations.end(),
                       [kind](const KernelViolation& v) { return v.kind == kind; });
  }
  std::string summary() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "; ";
      s += v.message;
    }
    return s;
  }
};

namespace detail {

inline void check_edges(std::span<const double> edges, double lo, double hi, const char* name,
                        ValidationReport& report) {
  using Kind = KernelViolation::Kind;
  if (edges.size() < 2) {
    report.violations.push_back({Kind::kMalformed, 0, std::string(name) + ": need at least 2 edges"});
    return;
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (!std::isfinite(edges[k]) || edges[k] < lo || edges[k] > hi) {
      report.violations.push_back({Kind::kMalformed, static_cast<int>(k + 1),
                                   std::string(name) + " edge " + std::to_string(k + 1) +
                                       " out of range"});
    }
    if (k + 1 < edges.size() && !(edges[k] < edges[k + 1])) {
      report.violations.push_back({Kind::kMalformed, static_cast<int>(k + 1),
                                   std::string(name) + " edges " + std::to_string(k + 1) + " and " +
                                       std::to_string(k + 2) + " not strictly increasing"});
    }
  }
}

}  // namespace detail

/// Checks coverage and ordering of the edges and the asymmetry conditions:
/// no azimuth or elevation bin straddles zero, more than two azimuth bins, and no
/// azimuth bin wide enough to hold both directions of the x axis.
inline ValidationReport validate(const KernelConfig& cfg) {
  using Kind = KernelViolation::Kind;
  constexpr double kPi = std::numbers::pi;
  ValidationReport report;

  detail::check_edges(cfg.theta_edges, -kPi, kPi, "theta", report);
  detail::check_edges(cfg.phi_edges, -kPi / 2, kPi / 2, "phi", report);
  if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) {
    report.violations.push_back({Kind::kMalformed, 0, "rho must be positive"});
  }
  detail::check_edges(cfg.r_edges, std::numeric_limits<double>::min(),
                      std::max(cfg.rho, std::numeric_limits<double>::min()), "r", report);
  if (!report.ok()) return report;

  if (cfg.theta_edges.front() != -kPi || cfg.theta_edges.back() != kPi)
    report.violations.push_back({Kind::kMalformed, 0, "theta edges must run from -pi to pi"});
  if (cfg.phi_edges.front() != -kPi / 2 || cfg.phi_edges.back() != kPi / 2)
    report.violations.push_back({Kind::kMalformed, 0, "phi edges must run from -pi/2 to pi/2"});
  if (cfg.r_edges.back() != cfg.rho)
    report.violations.push_back({Kind::kMalformed, 0, "last radial edge must equal rho"});

  for (int k = 0; k < cfg.n(); ++k) {
    if (cfg.theta_edges[k] * cfg.theta_edges[k + 1] < 0.0) {
      report.violations.push_back({Kind::kThetaStraddlesZero, k + 1,
                                   "theta edges (" + std::to_string(k + 1) + ", " +
                                       std::to_string(k + 2) + ") straddle zero"});
    }
    if (cfg.theta_edges[k + 1] - cfg.theta_edges[k] >= kPi && cfg.theta_edges[k] <= 0.0 &&
        cfg.theta_edges[k + 1] >= kPi) {
      report.violations.push_back({Kind::kAzimuthBinTooWide, k + 1,
                                   "theta bin (" + std::to_string(k + 1) + ", " +
                                       std::to_string(k + 2) + ") contains both 0 and pi"});
    }
  }
  for (int k = 0; k < cfg.p(); ++k) {
    if (cfg.phi_edges[k] * cfg.phi_edges[k + 1] < 0.0) {
      report.violations.push_back({Kind::kPhiStraddlesZero, k + 1,
                                   "phi edges (" + std::to_string(k + 1) + ", " +
                                       std::to_string(k + 2) + ") straddle zero"});
    }
  }
  if (cfg.n() <= 2) report.violations.push_back({Kind::kTooFewAzimuthBins, 0, "n > 2 required"});
  return report;
}

inline void require_valid(const KernelConfig& cfg) {
  const auto report = validate(cfg);
  if (!report.ok()) throw ConfigError("invalid kernel configuration: " + report.summary());
}

// ---------------------------------------------------------------------------
// Presets

/// Uniform azimuth/elevation split and uniform radial split of [epsilon, rho].
inline KernelConfig preset_uniform(int n, int p, int q, double rho,
                                   double epsilon = kDefaultRadialEpsilon) {
  constexpr double kPi = std::numbers::pi;
  if (n < 1 || p < 1 || q < 1) throw ConfigError("preset_uniform: n, p and q must be positive");
  if (!(rho > 0.0)) throw ConfigError("preset_uniform: rho must be positive");
  if (!(epsilon > 0.0) || !(epsilon < rho / q))
    throw ConfigError("preset_uniform: epsilon must lie in (0, rho/q)");

  KernelConfig cfg;
  cfg.rho = rho;
  // (2k - n) * pi / n keeps the middle edge at exactly zero for even n.
  cfg.theta_edges.resize(n + 1);
  for (int k = 0; k <= n; ++k) cfg.theta_edges[k] = (2.0 * k - n) * kPi / n;
  cfg.theta_edges.front() = -kPi;
  cfg.theta_edges.back() = kPi;

  cfg.phi_edges.resize(p + 1);
  for (int k = 0; k <= p; ++k) cfg.phi_edges[k] = (2.0 * k - p) * (kPi / 2) / p;
  cfg.phi_edges.front() = -kPi / 2;
  cfg.phi_edges.back() = kPi / 2;

  cfg.r_edges.resize(q + 1);
  cfg.r_edges[0] = epsilon;
  for (int k = 1; k < q; ++k) cfg.r_edges[k] = rho * k / q;
  cfg.r_edges[q] = rho;

  require_valid(cfg);
  return cfg;
}

/// The 4x4x3+1 = 49 bin kernel covering the same region as a 3x3x3 voxel kernel.
inline KernelConfig preset_3dcnn_analog(double epsilon = kDefaultRadialEpsilon) {
  constexpr double kPi = std::numbers::pi;
  KernelConfig cfg;
  cfg.rho = std::numbers::sqrt3;
  cfg.theta_edges = {-kPi, -kPi / 2, 0.0, kPi / 2, kPi};
  cfg.phi_edges = {-kPi / 2, -kPi / 4, 0.0, kPi / 4, kPi / 2};
  cfg.r_edges = {epsilon, 1.0, std::numbers::sqrt2, std::numbers::sqrt3};
  return cfg;
}

/// Same shape with every radial edge (except epsilon) scaled to a new rho.
inline KernelConfig with_radius(const KernelConfig& cfg, double rho) {
  KernelConfig out = cfg;
  const double s = rho / cfg.rho;
  for (std::size_t k = 1; k < out.r_edges.size(); ++k) out.r_edges[k] *= s;
  out.r_edges.back() = rho;
  out.rho = rho;
  return out;
}

// ---------------------------------------------------------------------------
// Bin assignment

/// Validated, reusable point-to-bin quantizer for one kernel configuration.
class BinAssigner {
 public:
  explicit BinAssigner(KernelConfig cfg) : cfg_(std::move(cfg)) { require_valid(cfg_); }

  const KernelConfig& config() const { return cfg_; }

  BinIndex operator()(const Point3& target, const Point3& neighbor) const {
    if (neighbor == target) return {0};
    return of_delta(neighbor - target);
  }

  BinIndex of_delta(const Point3& delta) const {
    const SphericalCoord s = to_spherical(delta);
    if (s.r == 0.0) return {0};
    const int kt = interval(cfg_.theta_edges, s.theta);
    const int kp = interval(cfg_.phi_edges, s.phi);
    // Radii past rho fall through to the outermost shell.
    const int kr = interval(cfg_.r_edges, s.r);
    return pack_bin(kt, kp, kr, cfg_.n(), cfg_.p());
  }

  bool is_outlier(const Point3& target, const Point3& neighbor) const {
    return distance(target, neighbor) > cfg_.rho;
  }

 private:
  // 1-based bin of v: the number of interior edges <= v, plus one. Intervals are
  // [left, right) except the last one, which also takes everything beyond.
  static int interval(const std::vector<double>& edges, double v) {
    const auto first = edges.begin() + 1;
    const auto last = edges.end() - 1;
    return static_cast<int>(std::upper_bound(first, last, v) - first) + 1;
  }

  KernelConfig cfg_;
};

inline BinIndex assign_bin(const Point3& target, const Point3& neighbor, const KernelConfig& cfg) {
  return BinAssigner(cfg)(target, neighbor);
}

// ---------------------------------------------------------------------------
// Text form: "key = value" lines, edges space separated.

inline std::string to_text(const KernelConfig& cfg) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto list = [&os](const char* key, const std::vector<double>& v) {
    os << key << " =";
    for (double e : v) os << ' ' << e;
    os << '\n';
  };
  os << "n = " << cfg.n() << "\np = " << cfg.p() << "\nq = " << cfg.q() << "\nrho = " << cfg.rho
     << '\n';
  list("theta_edges", cfg.theta_edges);
  list("phi_edges", cfg.phi_edges);
  list("r_edges", cfg.r_edges);
  return os.str();
}

inline KernelConfig kernel_config_from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto numbers = [&kv](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("kernel config: missing key '" + key + "'");
    std::vector<double> v;
    std::istringstream s(it->second);
    double d;
    while (s >> d) v.push_back(d);
    if (!s.eof()) throw ConfigError("kernel config: bad number in '" + key + "'");
    return v;
  };
  KernelConfig cfg;
  cfg.theta_edges = numbers("theta_edges");
  cfg.phi_edges = numbers("phi_edges");
  cfg.r_edges = numbers("r_edges");
  const auto rho = numbers("rho");
  if (rho.size() != 1) throw ConfigError("kernel config: rho must be a single number");
  cfg.rho = rho[0];
  for (const char* key : {"n", "p", "q"}) {
    if (!kv.count(key)) continue;
    const auto v = numbers(key);
    const int expect = key[0] == 'n' ? cfg.n() : (key[0] == 'p' ? cfg.p() : cfg.q());
    if (v.size() != 1 || static_cast<int>(v[0]) != expect)
      throw ConfigError(std::string("kernel config: '") + key + "' disagrees with edge count");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Weight bank

/// One learnable kernel: a (out x in) matrix per bin plus an output bias.
/// Matrices are stored row-major and back to back, bin 0 (self-convolution) first.
template <typename T>
struct SphericalKernel {
  KernelConfig config;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<T> weights;
  std::vector<T> bias;

  SphericalKernel() = default;
  SphericalKernel(KernelConfig cfg, int in, int out)
      : config(std::move(cfg)),
        in_channels(in),
        out_channels(out),
        weights(static_cast<std::size_t>(config.bin_count()) * in * out, T(0)),
        bias(static_cast<std::size_t>(out), T(0)) {
    if (in <= 0 || out <= 0) throw ConfigError("SphericalKernel: channel counts must be positive");
  }

  int bin_count() const { return config.bin_count(); }
  std::size_t matrix_size() const { return static_cast<std::size_t>(in_channels) * out_channels; }

  std::span<T> matrix(std::uint32_t kappa) {
    return {weights.data() + kappa * matrix_size(), matrix_size()};
  }
  std::span<const T> matrix(std::uint32_t kappa) const {
    return {weights.data() + kappa * matrix_size(), matrix_size()};
  }

  /// Zero-mean uniform init with limit sqrt(6 / (fan_in + fan_out)) per matrix.
  template <typename Rng>
  void init_uniform(Rng& rng) {
    const double limit = std::sqrt(6.0 / (in_channels + out_channels));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& w : weights) w = static_cast<T>(u(rng));
    std::fill(bias.begin(), bias.end(), T(0));
  }
};

}  // namespace sphconv

#endif  // SPHCONV_KERNEL_HPP_
