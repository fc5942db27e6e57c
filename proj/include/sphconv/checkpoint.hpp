#ifndef SPHCONV_CHECKPOINT_HPP_
#define SPHCONV_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sphconv/data_io.hpp"
#include "sphconv/error.hpp"
#include "sphconv/kernel.hpp"
#include "sphconv/network.hpp"

namespace sphconv {

// Layout (all integers little-endian):
//   8 bytes  magic "SPHCNNCK"
//   u32      format version
//   u32      bytes per scalar (4 or 8)
//   u64      header length, then a JSON header describing the architecture
//   tensors  u64 element count followed by raw scalars, in for_each_tensor order,
//            then running mean/variance of every batch-norm layer.
inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'H', 'C', 'N', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_tensor(std::ostream& os, std::span<const T> v) {
  put_le<std::uint64_t>(os, v.size());
  for (T x : v) {
    if constexpr (sizeof(T) == 8)
      put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
    else
      put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(x));
  }
}

template <typename Stored, typename T>
void get_tensor(std::istream& is, std::span<T> out, const std::string& name) {
  const auto n = get_le<std::uint64_t>(is);
  if (n != out.size())
    throw DataError("checkpoint: tensor '" + name + "' has " + std::to_string(n) +
                    " values, expected " + std::to_string(out.size()));
  for (auto& x : out) {
    if constexpr (sizeof(Stored) == 8)
      x = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(is)));
    else
      x = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
  }
}

}  // namespace detail

template <typename T>
void save_checkpoint(std::ostream& os, const ModelParams<T>& params,
                     const std::vector<std::string>& class_names = {}) {
  nlohmann::json h;
  h["channels"] = params.channels;
  h["num_classes"] = params.num_classes;
  h["class_names"] = class_names;
  h["generation"] = params.generation;
  for (const auto& lp : params.layers) {
    nlohmann::json l;
    l["kernel"] = to_text(lp.kernel.config);
    l["in_channels"] = lp.kernel.in_channels;
    l["out_channels"] = lp.kernel.out_channels;
    l["batchnorm"] = lp.has_batchnorm;
    h["layers"].push_back(l);
  }
  const std::string header = h.dump();

  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint32_t>(os, sizeof(T));
  detail::put_le<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));

  for_each_tensor(params, [&os](TensorRef<const T> t) { detail::put_tensor<T>(os, t.values); });
  for (const auto& lp : params.layers) {
    if (!lp.has_batchnorm) continue;
    detail::put_tensor<T>(os, lp.bn.running_mean);
    detail::put_tensor<T>(os, lp.bn.running_var);
  }
  if (!os) throw DataError("checkpoint: write failed");
}

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::uint32_t scalar_bytes = 0;
  std::vector<std::string> class_names;
};

template <typename T>
ModelParams<T> load_checkpoint(std::istream& is, CheckpointInfo* info = nullptr) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw DataError("checkpoint: bad magic");
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto scalar = detail::get_le<std::uint32_t>(is);
  if (scalar != 4 && scalar != 8) throw DataError("checkpoint: bad scalar size");
  const auto hlen = detail::get_le<std::uint64_t>(is);
  if (hlen > (1u << 26)) throw DataError("checkpoint: header too large");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen)))
    throw DataError("checkpoint: truncated header");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }

  ModelParams<T> m;
  try {
    m.channels = h.at("channels").get<std::vector<int>>();
    m.num_classes = h.at("num_classes").get<int>();
    m.generation = h.value("generation", std::uint64_t{0});
    for (const auto& l : h.at("layers")) {
      LayerParams<T> lp;
      auto cfg = kernel_config_from_text(l.at("kernel").get<std::string>());
      require_valid(cfg);
      lp.kernel = SphericalKernel<T>(std::move(cfg), l.at("in_channels").get<int>(),
                                     l.at("out_channels").get<int>());
      lp.has_batchnorm = l.at("batchnorm").get<bool>();
      if (lp.has_batchnorm) lp.bn = BatchNormState<T>(lp.kernel.out_channels);
      m.layers.push_back(std::move(lp));
    }
    if (info) {
      info->version = version;
      info->scalar_bytes = scalar;
      info->class_names = h.value("class_names", std::vector<std::string>{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (m.layers.size() != m.channels.size() || m.channels.empty())
    throw DataError("checkpoint: layer count does not match channel list");
  m.fc_weight.assign(static_cast<std::size_t>(m.num_classes) * m.channels.back(), T(0));
  m.fc_bias.assign(m.num_classes, T(0));

  auto read = [&](std::span<T> out, const std::string& name) {
    if (scalar == 8)
      detail::get_tensor<double, T>(is, out, name);
    else
      detail::get_tensor<float, T>(is, out, name);
  };
  for_each_tensor(m, [&](TensorRef<T> t) { read(t.values, t.name); });
  for (auto& lp : m.layers) {
    if (!lp.has_batchnorm) continue;
    read(lp.bn.running_mean, "running_mean");
    read(lp.bn.running_var, "running_var");
  }
  return m;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelParams<T>& params,
                     const std::vector<std::string>& class_names = {}) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  save_checkpoint(os, params, class_names);
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return load_checkpoint<T>(is, info);
}

}  // namespace sphconv

#endif  // SPHCONV_CHECKPOINT_HPP_
