#ifndef SPHCONV_BATCHNORM_HPP_
#define SPHCONV_BATCHNORM_HPP_

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sphconv/error.hpp"

namespace sphconv {

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// Per-channel affine parameters and running statistics.
template <typename T>
struct BatchNormState {
  std::vector<T> gamma;
  std::vector<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;

  BatchNormState() = default;
  explicit BatchNormState(int channels)
      : gamma(channels, T(1)), beta(channels, T(0)), running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  int channels() const { return static_cast<int>(gamma.size()); }
};

/// Mean and 1/sqrt(var + eps) per channel, pooled over every row of every segment.
struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> var;
  std::vector<double> inv_std;
  std::size_t count = 0;
};

/// Normalizes rows of `channels` values. The input is a list of row-major
/// segments (one per sample) that are pooled together in train mode; eval mode
/// uses the running statistics. Writes xhat (pre-affine) and y = gamma*xhat + beta.
template <typename T>
BatchNormStats batchnorm_forward(std::span<const std::span<const T>> x, int channels,
                                 const BatchNormState<T>& state, Mode mode,
                                 std::span<const std::span<T>> xhat,
                                 std::span<const std::span<T>> y,
                                 double eps = kBatchNormEpsilon) {
  if (state.channels() != channels) throw ConfigError("batchnorm: channel count mismatch");
  const auto C = static_cast<std::size_t>(channels);
  BatchNormStats st;
  st.mean.assign(C, 0.0);
  st.var.assign(C, 0.0);
  st.inv_std.assign(C, 0.0);
  for (const auto& seg : x) st.count += seg.size() / C;

  if (mode == Mode::kTrain) {
    if (st.count == 0) throw DataError("batchnorm: empty batch");
    for (const auto& seg : x)
      for (std::size_t k = 0; k < seg.size(); ++k) st.mean[k % C] += seg[k];
    for (auto& m : st.mean) m /= static_cast<double>(st.count);
    for (const auto& seg : x)
      for (std::size_t k = 0; k < seg.size(); ++k) {
        const double d = seg[k] - st.mean[k % C];
        st.var[k % C] += d * d;
      }
    for (auto& v : st.var) v /= static_cast<double>(st.count);
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      st.mean[c] = state.running_mean[c];
      st.var[c] = state.running_var[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c) st.inv_std[c] = 1.0 / std::sqrt(st.var[c] + eps);

  for (std::size_t s = 0; s < x.size(); ++s) {
    const auto& in = x[s];
    for (std::size_t k = 0; k < in.size(); ++k) {
      const std::size_t c = k % C;
      const double xh = (in[k] - st.mean[c]) * st.inv_std[c];
      xhat[s][k] = static_cast<T>(xh);
      y[s][k] = static_cast<T>(state.gamma[c] * xh + state.beta[c]);
    }
  }
  return st;
}

/// Train-mode backward. Accumulates into dgamma/dbeta and writes dx.
template <typename T>
void batchnorm_backward(std::span<const std::span<const T>> dy,
                        std::span<const std::span<const T>> xhat, const BatchNormState<T>& state,
                        const BatchNormStats& st, std::span<const std::span<T>> dx,
                        std::span<T> dgamma, std::span<T> dbeta) {
  const std::size_t C = state.gamma.size();
  std::vector<double> sum_dxhat(C, 0.0), sum_dxhat_xhat(C, 0.0), sum_dy(C, 0.0),
      sum_dy_xhat(C, 0.0);
  for (std::size_t s = 0; s < dy.size(); ++s) {
    for (std::size_t k = 0; k < dy[s].size(); ++k) {
      const std::size_t c = k % C;
      sum_dy[c] += dy[s][k];
      sum_dy_xhat[c] += dy[s][k] * xhat[s][k];
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    dgamma[c] += static_cast<T>(sum_dy_xhat[c]);
    dbeta[c] += static_cast<T>(sum_dy[c]);
    sum_dxhat[c] = sum_dy[c] * state.gamma[c];
    sum_dxhat_xhat[c] = sum_dy_xhat[c] * state.gamma[c];
  }
  const double n = static_cast<double>(st.count);
  for (std::size_t s = 0; s < dy.size(); ++s) {
    for (std::size_t k = 0; k < dy[s].size(); ++k) {
      const std::size_t c = k % C;
      const double dxh = dy[s][k] * state.gamma[c];
      dx[s][k] = static_cast<T>(st.inv_std[c] / n *
                                (n * dxh - sum_dxhat[c] - xhat[s][k] * sum_dxhat_xhat[c]));
    }
  }
}

/// running <- momentum * running + (1 - momentum) * batch.
template <typename T>
void update_running_stats(BatchNormState<T>& state, const BatchNormStats& st,
                          double momentum = kBatchNormMomentum) {
  for (std::size_t c = 0; c < state.gamma.size(); ++c) {
    state.running_mean[c] =
        static_cast<T>(momentum * state.running_mean[c] + (1.0 - momentum) * st.mean[c]);
    state.running_var[c] =
        static_cast<T>(momentum * state.running_var[c] + (1.0 - momentum) * st.var[c]);
  }
}

}  // namespace sphconv

#endif  // SPHCONV_BATCHNORM_HPP_
