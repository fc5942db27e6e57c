#ifndef SPHCONV_NETWORK_HPP_
#define SPHCONV_NETWORK_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "sphconv/batchnorm.hpp"
#include "sphconv/error.hpp"
#include "sphconv/kernel.hpp"
#include "sphconv/octree.hpp"
#include "sphconv/rng.hpp"

namespace sphconv {

inline constexpr int kInputChannels = 3;

/// Architecture description. One hidden layer per entry of `channels`, so the
/// octree depth equals channels.size().
struct ModelSpec {
  std::vector<int> channels{32, 32, 64, 64, 128, 128, 256, 512};
  int n = 8;
  int p = 2;
  int q = 3;
  int num_classes = 10;
  bool batchnorm = true;
  double radial_epsilon = kDefaultRadialEpsilon;
  /// Diagonal of the octree root cube; [-1, 1]^3 by default.
  double root_diagonal = 2.0 * std::numbers::sqrt3;

  int depth() const { return static_cast<int>(channels.size()); }
};

template <typename T>
struct LayerParams {
  SphericalKernel<T> kernel;
  bool has_batchnorm = false;
  BatchNormState<T> bn;
};

template <typename T>
struct ModelParams {
  std::vector<int> channels;
  int num_classes = 0;
  std::vector<LayerParams<T>> layers;  // layers[l-1] drives network layer l
  std::vector<T> fc_weight;            // num_classes x channels.back(), row-major
  std::vector<T> fc_bias;
  /// Bumped by every optimizer step; tapes recorded under an older value are stale.
  std::uint64_t generation = 0;

  int depth() const { return static_cast<int>(layers.size()); }
  int in_channels(int l) const { return l == 1 ? kInputChannels : channels[l - 2]; }
  int out_channels(int l) const { return channels[l - 1]; }
  int feature_width() const { return channels.back(); }
};

template <typename T>
ModelParams<T> make_model(const ModelSpec& spec, std::uint64_t seed) {
  if (spec.channels.empty()) throw ConfigError("make_model: at least one layer required");
  if (spec.num_classes < 1) throw ConfigError("make_model: num_classes must be positive");
  for (int c : spec.channels)
    if (c < 1) throw ConfigError("make_model: channel widths must be positive");

  ModelParams<T> m;
  m.channels = spec.channels;
  m.num_classes = spec.num_classes;
  const int L = spec.depth();
  auto rng = make_rng(seed, streams::kInit);
  for (int l = 1; l <= L; ++l) {
    const double rho = layer_radius(spec.root_diagonal, L, l);
    LayerParams<T> layer;
    layer.kernel = SphericalKernel<T>(preset_uniform(spec.n, spec.p, spec.q, rho, spec.radial_epsilon),
                                      m.in_channels(l), m.out_channels(l));
    layer.kernel.init_uniform(rng);
    // The last hidden layer is followed by ReLU only.
    layer.has_batchnorm = spec.batchnorm && l < L;
    if (layer.has_batchnorm) layer.bn = BatchNormState<T>(m.out_channels(l));
    m.layers.push_back(std::move(layer));
  }
  const int F = m.feature_width();
  const double limit = std::sqrt(6.0 / (F + spec.num_classes));
  std::uniform_real_distribution<double> u(-limit, limit);
  m.fc_weight.resize(static_cast<std::size_t>(spec.num_classes) * F);
  for (auto& w : m.fc_weight) w = static_cast<T>(u(rng));
  m.fc_bias.assign(spec.num_classes, T(0));
  return m;
}

/// Gradients mirroring the trainable tensors of ModelParams.
template <typename T>
struct ParamGrads {
  struct Layer {
    std::vector<T> weights;
    std::vector<T> bias;
    std::vector<T> gamma;
    std::vector<T> beta;
  };
  std::vector<Layer> layers;
  std::vector<T> fc_weight;
  std::vector<T> fc_bias;

  ParamGrads() = default;
  explicit ParamGrads(const ModelParams<T>& m) {
    for (const auto& lp : m.layers) {
      Layer g;
      g.weights.assign(lp.kernel.weights.size(), T(0));
      g.bias.assign(lp.kernel.bias.size(), T(0));
      g.gamma.assign(lp.bn.gamma.size(), T(0));
      g.beta.assign(lp.bn.beta.size(), T(0));
      layers.push_back(std::move(g));
    }
    fc_weight.assign(m.fc_weight.size(), T(0));
    fc_bias.assign(m.fc_bias.size(), T(0));
  }

  ParamGrads& operator+=(const ParamGrads& o) {
    auto add = [](std::vector<T>& a, const std::vector<T>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
      add(layers[l].weights, o.layers[l].weights);
      add(layers[l].bias, o.layers[l].bias);
      add(layers[l].gamma, o.layers[l].gamma);
      add(layers[l].beta, o.layers[l].beta);
    }
    add(fc_weight, o.fc_weight);
    add(fc_bias, o.fc_bias);
    return *this;
  }
};

/// A named view of one trainable tensor. `decay` marks weight matrices that
/// take weight decay (biases and batch-norm affine parameters do not).
template <typename T>
struct TensorRef {
  std::string name;
  std::span<T> values;
  bool decay = false;
};

namespace detail {

// f(name, vector, decay) over every trainable tensor of a model or gradient set.
template <typename M, typename F>
void visit_model(M& m, F&& f) {
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    auto& lp = m.layers[l];
    f(p + "weights", lp.kernel.weights, true);
    f(p + "bias", lp.kernel.bias, false);
    if (!lp.bn.gamma.empty()) {
      f(p + "gamma", lp.bn.gamma, false);
      f(p + "beta", lp.bn.beta, false);
    }
  }
  f(std::string("fc.weight"), m.fc_weight, true);
  f(std::string("fc.bias"), m.fc_bias, false);
}

template <typename G, typename F>
void visit_grads(G& g, F&& f) {
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    auto& lg = g.layers[l];
    f(p + "weights", lg.weights, true);
    f(p + "bias", lg.bias, false);
    if (!lg.gamma.empty()) {
      f(p + "gamma", lg.gamma, false);
      f(p + "beta", lg.beta, false);
    }
  }
  f(std::string("fc.weight"), g.fc_weight, true);
  f(std::string("fc.bias"), g.fc_bias, false);
}

}  // namespace detail

/// Visits trainable tensors in a fixed order; identical for params and grads.
template <typename T, typename F>
void for_each_tensor(ModelParams<T>& m, F&& f) {
  detail::visit_model(m, [&f](std::string name, std::vector<T>& v, bool decay) {
    f(TensorRef<T>{std::move(name), v, decay});
  });
}

template <typename T, typename F>
void for_each_tensor(const ModelParams<T>& m, F&& f) {
  detail::visit_model(m, [&f](std::string name, const std::vector<T>& v, bool decay) {
    f(TensorRef<const T>{std::move(name), v, decay});
  });
}

template <typename T, typename F>
void for_each_tensor(ParamGrads<T>& g, F&& f) {
  detail::visit_grads(g, [&f](std::string name, std::vector<T>& v, bool decay) {
    f(TensorRef<T>{std::move(name), v, decay});
  });
}

template <typename T>
std::vector<TensorRef<T>> tensors(ModelParams<T>& m) {
  std::vector<TensorRef<T>> out;
  for_each_tensor(m, [&out](TensorRef<T> t) { out.push_back(std::move(t)); });
  return out;
}

template <typename T>
std::vector<TensorRef<T>> tensors(ParamGrads<T>& g) {
  std::vector<TensorRef<T>> out;
  for_each_tensor(g, [&out](TensorRef<T> t) { out.push_back(std::move(t)); });
  return out;
}

// ---------------------------------------------------------------------------
// Forward

/// Everything the backward pass needs for one sample. Index l of each vector is
/// network layer l; activation rows are neurons, row-major by channel.
template <typename T>
struct SampleTape {
  std::vector<std::vector<T>> act;   // 0..L; act[0] = xyz
  std::vector<std::vector<T>> z;     // 1..L; averaged convolution + bias
  std::vector<std::vector<T>> xhat;  // 1..L; normalized z (layers with batch norm)
  std::vector<std::vector<std::uint32_t>> bins;  // 1..L; one kappa per plan edge
  std::vector<T> logits;
};

template <typename T>
struct BatchTape {
  Mode mode = Mode::kEval;
  std::uint64_t generation = 0;
  std::vector<const OctreeNetworkPlan*> plans;
  std::vector<SampleTape<T>> samples;
  std::vector<BatchNormStats> bn_stats;  // 1..L; empty for layers without batch norm
};

namespace detail {

/// Runs f(i) for i in [0, count) on up to `threads` threads with static chunking.
template <typename F>
void parallel_for(std::size_t count, unsigned threads, F&& f) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(count, b + chunk);
    if (b >= e) break;
    pool.emplace_back([b, e, &f] {
      for (std::size_t i = b; i < e; ++i) f(i);
    });
  }
}

template <typename T>
void check_compatible(const OctreeNetworkPlan& plan, const ModelParams<T>& params) {
  if (plan.depth != params.depth())
    throw ConfigError("plan depth " + std::to_string(plan.depth) + " does not match model depth " +
                      std::to_string(params.depth()));
  if (plan.layers.back().size() != 1) throw DataError("plan must end in a single root neuron");
  for (int l = 1; l <= params.depth(); ++l) {
    const auto& k = params.layers[l - 1].kernel;
    if (k.in_channels != params.in_channels(l) || k.out_channels != params.out_channels(l))
      throw ConfigError("layer " + std::to_string(l) + ": kernel channel mismatch");
  }
  if (params.fc_weight.size() !=
      static_cast<std::size_t>(params.num_classes) * params.feature_width())
    throw ConfigError("classifier shape mismatch");
}

/// Averaged spherical convolution of one layer for one sample.
template <typename T>
void conv_forward(const PlanLayer& layer, const SphericalKernel<T>& kernel,
                  std::span<const std::uint32_t> bins, std::span<const T> in, std::span<T> out) {
  const int I = kernel.in_channels;
  const int O = kernel.out_channels;
  std::vector<T> acc(O);
  for (std::size_t i = 0; i < layer.size(); ++i) {
    std::fill(acc.begin(), acc.end(), T(0));
    const auto b = layer.child_begin[i];
    const auto e = layer.child_begin[i + 1];
    for (auto k = b; k < e; ++k) {
      const T* a = in.data() + static_cast<std::size_t>(layer.children[k]) * I;
      const T* w = kernel.matrix(bins[k]).data();
      for (int o = 0; o < O; ++o, w += I) {
        T s = T(0);
        for (int c = 0; c < I; ++c) s += w[c] * a[c];
        acc[o] += s;
      }
    }
    const T inv = T(1) / static_cast<T>(e - b);
    T* zi = out.data() + i * O;
    for (int o = 0; o < O; ++o) zi[o] = acc[o] * inv + kernel.bias[o];
  }
}

}  // namespace detail

/// Kernel bin of every parent-child edge of every layer.
template <typename T>
std::vector<std::vector<std::uint32_t>> compute_bins(const OctreeNetworkPlan& plan,
                                                     const ModelParams<T>& params) {
  std::vector<std::vector<std::uint32_t>> bins(plan.depth + 1);
  for (int l = 1; l <= plan.depth; ++l) {
    const BinAssigner assign(params.layers[l - 1].kernel.config);
    const auto& layer = plan.layers[l];
    const auto& below = plan.layers[l - 1];
    auto& out = bins[l];
    out.resize(layer.children.size());
    for (std::size_t i = 0; i < layer.size(); ++i)
      for (auto k = layer.child_begin[i]; k < layer.child_begin[i + 1]; ++k)
        out[k] = assign(layer.locations[i], below.locations[layer.children[k]]).kappa;
  }
  return bins;
}

struct ForwardOptions {
  unsigned threads = 1;
};

/// Forward pass over a minibatch of plans. Convolutions run per sample; batch
/// norm statistics are pooled across all neurons of all samples in train mode.
/// Running statistics are not touched (see update_running_stats).
template <typename T>
BatchTape<T> forward_batch(std::span<const OctreeNetworkPlan* const> plans,
                           const ModelParams<T>& params, Mode mode, ForwardOptions opt = {}) {
  if (plans.empty()) throw DataError("forward: empty batch");
  for (const auto* plan : plans) detail::check_compatible(*plan, params);

  const int L = params.depth();
  BatchTape<T> tape;
  tape.mode = mode;
  tape.generation = params.generation;
  tape.plans.assign(plans.begin(), plans.end());
  tape.samples.resize(plans.size());
  tape.bn_stats.resize(L + 1);

  detail::parallel_for(plans.size(), opt.threads, [&](std::size_t s) {
    const auto& plan = *plans[s];
    auto& st = tape.samples[s];
    st.bins = compute_bins(plan, params);
    st.act.resize(L + 1);
    st.z.resize(L + 1);
    st.xhat.resize(L + 1);
    const auto& pts = plan.layers[0].locations;
    st.act[0].resize(pts.size() * kInputChannels);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      st.act[0][3 * i] = static_cast<T>(pts[i].x);
      st.act[0][3 * i + 1] = static_cast<T>(pts[i].y);
      st.act[0][3 * i + 2] = static_cast<T>(pts[i].z);
    }
  });

  for (int l = 1; l <= L; ++l) {
    const auto& lp = params.layers[l - 1];
    const int O = lp.kernel.out_channels;
    detail::parallel_for(plans.size(), opt.threads, [&](std::size_t s) {
      auto& st = tape.samples[s];
      const auto& layer = plans[s]->layers[l];
      st.z[l].resize(layer.size() * O);
      detail::conv_forward<T>(layer, lp.kernel, st.bins[l], st.act[l - 1], st.z[l]);
    });

    if (lp.has_batchnorm) {
      std::vector<std::span<const T>> in;
      std::vector<std::span<T>> xh, y;
      for (auto& st : tape.samples) {
        st.xhat[l].resize(st.z[l].size());
        st.act[l].resize(st.z[l].size());
        in.emplace_back(st.z[l]);
        xh.emplace_back(st.xhat[l]);
        y.emplace_back(st.act[l]);
      }
      tape.bn_stats[l] = batchnorm_forward<T>(in, O, lp.bn, mode, xh, y);
      for (auto& st : tape.samples)
        for (auto& v : st.act[l]) v = std::max(v, T(0));
    } else {
      for (auto& st : tape.samples) {
        st.act[l].resize(st.z[l].size());
        for (std::size_t k = 0; k < st.z[l].size(); ++k) st.act[l][k] = std::max(st.z[l][k], T(0));
      }
    }
  }

  const int F = params.feature_width();
  const int C = params.num_classes;
  for (auto& st : tape.samples) {
    const auto& feat = st.act[L];
    st.logits.assign(C, T(0));
    for (int c = 0; c < C; ++c) {
      T s = params.fc_bias[c];
      const T* w = params.fc_weight.data() + static_cast<std::size_t>(c) * F;
      for (int f = 0; f < F; ++f) s += w[f] * feat[f];
      st.logits[c] = s;
    }
  }
  return tape;
}

template <typename T>
BatchTape<T> forward(const OctreeNetworkPlan& plan, const ModelParams<T>& params, Mode mode) {
  const OctreeNetworkPlan* p = &plan;
  return forward_batch<T>(std::span<const OctreeNetworkPlan* const>(&p, 1), params, mode);
}

/// Folds the batch statistics of a train-mode tape into the running averages.
template <typename T>
void update_running_stats(ModelParams<T>& params, const BatchTape<T>& tape,
                          double momentum = kBatchNormMomentum) {
  if (tape.mode != Mode::kTrain) return;
  for (int l = 1; l <= params.depth(); ++l) {
    auto& lp = params.layers[l - 1];
    if (lp.has_batchnorm) update_running_stats(lp.bn, tape.bn_stats[l], momentum);
  }
}

template <typename T>
int argmax(std::span<const T> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename T>
int predict(const OctreeNetworkPlan& plan, const ModelParams<T>& params) {
  const auto tape = forward(plan, params, Mode::kEval);
  return argmax<T>(tape.samples[0].logits);
}

// ---------------------------------------------------------------------------
// Loss

template <typename T>
struct LossResult {
  double loss = 0.0;
  std::vector<T> grad;
};

/// Softmax cross-entropy with a log-sum-exp shift; grad = softmax - one_hot.
template <typename T>
LossResult<T> loss_softmax_ce(std::span<const T> logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw DataError("loss: label " + std::to_string(label) + " out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (T v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  LossResult<T> r;
  r.loss = lse - static_cast<double>(logits[label]);
  r.grad.resize(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c)
    r.grad[c] = static_cast<T>(std::exp(static_cast<double>(logits[c]) - lse));
  r.grad[label] -= T(1);
  return r;
}

// ---------------------------------------------------------------------------
// Backward

/// Gradients of sum_s <logit_grads[s], logits_s> with respect to every trainable
/// tensor, given a train-mode tape recorded with the current parameters.
template <typename T>
ParamGrads<T> backward(const BatchTape<T>& tape, std::span<const OctreeNetworkPlan* const> plans,
                       const ModelParams<T>& params, std::span<const std::vector<T>> logit_grads) {
  if (tape.mode != Mode::kTrain) throw ConfigError("backward: tape was not recorded in train mode");
  if (tape.generation != params.generation)
    throw ConfigError("backward: stale tape (parameters changed since forward)");
  if (plans.size() != tape.samples.size() || logit_grads.size() != tape.samples.size())
    throw ConfigError("backward: batch size mismatch with tape");
  for (std::size_t s = 0; s < plans.size(); ++s)
    if (plans[s] != tape.plans[s]) throw ConfigError("backward: plan does not match tape");

  const int L = params.depth();
  const int F = params.feature_width();
  const int C = params.num_classes;
  ParamGrads<T> g(params);

  // d loss / d a^l for every sample; starts at the root feature.
  std::vector<std::vector<T>> delta(tape.samples.size());
  for (std::size_t s = 0; s < tape.samples.size(); ++s) {
    const auto& st = tape.samples[s];
    const auto& dl = logit_grads[s];
    if (static_cast<int>(dl.size()) != C) throw ConfigError("backward: logit grad size mismatch");
    delta[s].assign(F, T(0));
    for (int c = 0; c < C; ++c) {
      g.fc_bias[c] += dl[c];
      T* gw = g.fc_weight.data() + static_cast<std::size_t>(c) * F;
      const T* w = params.fc_weight.data() + static_cast<std::size_t>(c) * F;
      for (int f = 0; f < F; ++f) {
        gw[f] += dl[c] * st.act[L][f];
        delta[s][f] += w[f] * dl[c];
      }
    }
  }

  for (int l = L; l >= 1; --l) {
    const auto& lp = params.layers[l - 1];
    auto& lg = g.layers[l - 1];
    const int I = lp.kernel.in_channels;
    const int O = lp.kernel.out_channels;

    // Through ReLU (a > 0 exactly where the pre-ReLU value is positive).
    std::vector<std::vector<T>> dz(tape.samples.size());
    for (std::size_t s = 0; s < tape.samples.size(); ++s) {
      const auto& a = tape.samples[s].act[l];
      dz[s].resize(a.size());
      for (std::size_t k = 0; k < a.size(); ++k) dz[s][k] = a[k] > T(0) ? delta[s][k] : T(0);
    }
    if (lp.has_batchnorm) {
      std::vector<std::span<const T>> dy, xh;
      std::vector<std::span<T>> dx;
      std::vector<std::vector<T>> out(tape.samples.size());
      for (std::size_t s = 0; s < tape.samples.size(); ++s) {
        out[s].resize(dz[s].size());
        dy.emplace_back(dz[s]);
        xh.emplace_back(tape.samples[s].xhat[l]);
        dx.emplace_back(out[s]);
      }
      batchnorm_backward<T>(dy, xh, lp.bn, tape.bn_stats[l], dx, lg.gamma, lg.beta);
      dz = std::move(out);
    }

    for (std::size_t s = 0; s < tape.samples.size(); ++s) {
      const auto& st = tape.samples[s];
      const auto& layer = plans[s]->layers[l];
      const auto& in = st.act[l - 1];
      const auto& bins = st.bins[l];
      const bool need_input_grad = l > 1;
      std::vector<T> din(need_input_grad ? in.size() : 0, T(0));
      std::vector<T> gi(O);
      for (std::size_t i = 0; i < layer.size(); ++i) {
        const auto b = layer.child_begin[i];
        const auto e = layer.child_begin[i + 1];
        const T inv = T(1) / static_cast<T>(e - b);
        const T* dzi = dz[s].data() + i * O;
        for (int o = 0; o < O; ++o) {
          gi[o] = dzi[o] * inv;
          lg.bias[o] += dzi[o];
        }
        for (auto k = b; k < e; ++k) {
          const std::size_t j = layer.children[k];
          const T* a = in.data() + j * I;
          T* gw = lg.weights.data() + bins[k] * lp.kernel.matrix_size();
          const T* w = lp.kernel.matrix(bins[k]).data();
          for (int o = 0; o < O; ++o) {
            const T go = gi[o];
            if (go == T(0)) continue;
            T* gwo = gw + static_cast<std::size_t>(o) * I;
            for (int c = 0; c < I; ++c) gwo[c] += go * a[c];
            if (need_input_grad) {
              const T* wo = w + static_cast<std::size_t>(o) * I;
              T* dj = din.data() + j * I;
              for (int c = 0; c < I; ++c) dj[c] += wo[c] * go;
            }
          }
        }
      }
      if (need_input_grad) delta[s] = std::move(din);
    }
  }
  return g;
}

template <typename T>
ParamGrads<T> backward(const BatchTape<T>& tape, const OctreeNetworkPlan& plan,
                       const ModelParams<T>& params, const std::vector<T>& logit_grad) {
  const OctreeNetworkPlan* p = &plan;
  return backward<T>(tape, std::span<const OctreeNetworkPlan* const>(&p, 1), params,
                     std::span<const std::vector<T>>(&logit_grad, 1));
}

}  // namespace sphconv

#endif  // SPHCONV_NETWORK_HPP_
