#ifndef SPHCONV_TRAINING_HPP_
#define SPHCONV_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sphconv/data_io.hpp"
#include "sphconv/error.hpp"
#include "sphconv/network.hpp"
#include "sphconv/octree.hpp"
#include "sphconv/rng.hpp"

namespace sphconv {

/// Optimizer and schedule settings. The step decay divides the learning rate by
/// `decay_factor` after `decay_start` epochs and again every `decay_every` epochs.
struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 16;
  int epochs = 100;
  int decay_start = 50;
  int decay_every = 20;
  double decay_factor = 10.0;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Literal optimizer values: momentum 0.0005 and no weight decay.
  static TrainConfig strict_optimizer() {
    TrainConfig c;
    c.momentum = 0.0005;
    c.weight_decay = 0.0;
    return c;
  }
};

/// Learning rate in effect during `epoch` (1-based).
inline double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch <= cfg.decay_start) return cfg.lr0;
  const int decays = 1 + (epoch - cfg.decay_start - 1) / cfg.decay_every;
  return cfg.lr0 / std::pow(cfg.decay_factor, decays);
}

struct AugmentConfig {
  bool enabled = false;
  bool subsample = true;
  double keep_min = 0.8;
  double keep_max = 1.0;
  double rotation_max = std::numbers::pi / 6;
  double translation_sigma = 0.02;
  int replication = 5;
  std::size_t min_points = 8;
};

/// What augment() did to one cloud.
struct AugmentRecord {
  std::vector<std::uint32_t> kept;  // indices into the input, ascending
  double angle = 0.0;
};

/// Optional subsampling without replacement, then a rotation about z by an angle
/// uniform in [-rotation_max, rotation_max], then per-point Gaussian jitter.
template <typename R>
PointCloud augment(std::span<const Point3> cloud, const AugmentConfig& cfg, R& rng,
                   AugmentRecord* record = nullptr) {
  if (cfg.translation_sigma < 0.0) throw ConfigError("augment: translation sigma must be >= 0");
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<std::uint32_t> kept(cloud.size());
  std::iota(kept.begin(), kept.end(), 0u);
  if (cfg.subsample && cfg.keep_min < 1.0) {
    const double frac = cfg.keep_min + (cfg.keep_max - cfg.keep_min) * u(rng);
    const auto keep = static_cast<std::size_t>(std::llround(frac * static_cast<double>(cloud.size())));
    if (keep < cfg.min_points)
      throw DataError("augment: subsampling leaves " + std::to_string(keep) + " points (< " +
                      std::to_string(cfg.min_points) + ")");
    // Partial Fisher-Yates; the kept prefix is then sorted to preserve input order.
    for (std::size_t i = 0; i < keep; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, kept.size() - 1);
      std::swap(kept[i], kept[pick(rng)]);
    }
    kept.resize(keep);
    std::sort(kept.begin(), kept.end());
  }

  const double angle =
      cfg.rotation_max > 0.0 ? cfg.rotation_max * (2.0 * u(rng) - 1.0) : 0.0;
  std::normal_distribution<double> jitter(0.0, 1.0);
  PointCloud out;
  out.reserve(kept.size());
  for (auto i : kept) {
    const Point3& p = cloud[i];
    Point3 r = rotate_z(p, angle);
    if (cfg.translation_sigma > 0.0)
      r += Point3{jitter(rng), jitter(rng), jitter(rng)} * cfg.translation_sigma;
    out.push_back(r);
  }
  if (record) {
    record->kept = std::move(kept);
    record->angle = angle;
  }
  return out;
}

/// `replication` independently augmented copies of every sample.
inline std::vector<LabeledCloud> augment_dataset(std::span<const LabeledCloud> samples,
                                                 const AugmentConfig& cfg, std::uint64_t seed) {
  std::vector<LabeledCloud> out;
  out.reserve(samples.size() * cfg.replication);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int r = 0; r < cfg.replication; ++r) {
      auto rng = make_rng(seed, streams::kAugment, i * cfg.replication + r);
      out.push_back({augment(samples[i].cloud, cfg, rng), samples[i].label,
                     samples[i].source + "#aug" + std::to_string(r)});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalResult {
  double instance_acc = 0.0;
  double class_acc = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::string> warnings;
};

/// Instance accuracy and the unweighted mean of per-class recalls over classes
/// that occur in the labels.
inline EvalResult score_predictions(std::span<const int> labels, std::span<const int> predicted,
                                    int num_classes) {
  if (labels.size() != predicted.size()) throw DataError("evaluate: label/prediction size mismatch");
  EvalResult r;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
      throw DataError("evaluate: class id out of range");
    ++r.confusion[labels[i]][predicted[i]];
    if (labels[i] == predicted[i]) ++correct;
  }
  r.instance_acc = labels.empty() ? 0.0 : static_cast<double>(correct) / labels.size();
  double recall_sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto total = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
    if (total == 0) {
      r.warnings.push_back("class " + std::to_string(c) + " absent from split; excluded from class accuracy");
      continue;
    }
    recall_sum += static_cast<double>(r.confusion[c][c]) / total;
    ++present;
  }
  r.class_acc = present ? recall_sum / present : 0.0;
  return r;
}

struct PreparedSample {
  OctreeNetworkPlan plan;
  int label = 0;
};

inline std::vector<PreparedSample> prepare(std::span<const LabeledCloud> samples, int depth) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({build_plan(s.cloud, depth), s.label});
  return out;
}

template <typename T>
EvalResult evaluate(std::span<const PreparedSample> samples, const ModelParams<T>& params) {
  std::vector<int> labels, predicted;
  for (const auto& s : samples) {
    labels.push_back(s.label);
    predicted.push_back(predict(s.plan, params));
  }
  return score_predictions(labels, predicted, params.num_classes);
}

// ---------------------------------------------------------------------------
// Optimizer

/// v <- momentum * v - lr * (g + weight_decay * w);  w <- w + v.
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(const ModelParams<T>& params, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay), velocity_(params) {}

  void step(ModelParams<T>& params, ParamGrads<T>& grads, double lr) {
    auto w = tensors(params);
    auto g = tensors(grads);
    auto v = tensors(velocity_);
    for (std::size_t t = 0; t < w.size(); ++t) {
      const double wd = w[t].decay ? weight_decay_ : 0.0;
      for (std::size_t i = 0; i < w[t].values.size(); ++i) {
        const double grad = g[t].values[i] + wd * w[t].values[i];
        v[t].values[i] = static_cast<T>(momentum_ * v[t].values[i] - lr * grad);
        w[t].values[i] += v[t].values[i];
      }
    }
    ++params.generation;
  }

 private:
  double momentum_;
  double weight_decay_;
  ParamGrads<T> velocity_;
};

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = -1.0;  // negative when no validation split was given
  std::size_t samples = 0;  // training samples visited
};

struct StepStats {
  double loss = 0.0;
  std::size_t correct = 0;
};

/// One SGD step on a minibatch: mean cross-entropy, gradients averaged over the
/// batch, running batch-norm statistics updated afterwards.
template <typename T>
StepStats train_step(std::span<const OctreeNetworkPlan* const> plans, std::span<const int> labels,
                     ModelParams<T>& params, SgdMomentum<T>& opt, double lr, unsigned threads = 1) {
  auto tape = forward_batch<T>(plans, params, Mode::kTrain, {threads});
  StepStats stats;
  std::vector<std::vector<T>> dlogits(plans.size());
  const double inv_b = 1.0 / static_cast<double>(plans.size());
  for (std::size_t s = 0; s < plans.size(); ++s) {
    const auto& logits = tape.samples[s].logits;
    auto l = loss_softmax_ce<T>(logits, labels[s]);
    if (!std::isfinite(l.loss)) throw NumericError("non-finite loss");
    stats.loss += l.loss * inv_b;
    if (argmax<T>(logits) == labels[s]) ++stats.correct;
    for (auto& d : l.grad) d = static_cast<T>(d * inv_b);
    dlogits[s] = std::move(l.grad);
  }
  auto grads = backward<T>(tape, plans, params, dlogits);
  update_running_stats(params, tape);
  opt.step(params, grads, lr);
  return stats;
}

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains in place and returns the per-epoch history. With augmentation enabled
/// every epoch visits `replication` freshly augmented copies of each sample and
/// rebuilds their octrees; otherwise plans are built once.
template <typename T>
std::vector<EpochRecord> train(std::span<const LabeledCloud> train_set,
                               std::span<const LabeledCloud> val_set, ModelParams<T>& params,
                               const TrainConfig& cfg, const AugmentConfig& aug,
                               const TrainCallbacks& callbacks = {}) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ConfigError("train: bad batch size or epoch count");
  for (const auto& s : train_set)
    if (s.label < 0 || s.label >= params.num_classes)
      throw DataError("train: label " + std::to_string(s.label) + " outside model class count");

  const int depth = params.depth();
  std::vector<PreparedSample> fixed;
  if (!aug.enabled) fixed = prepare(train_set, depth);
  const auto val = prepare(val_set, depth);
  const std::size_t rep = aug.enabled ? static_cast<std::size_t>(aug.replication) : 1;
  const std::size_t per_epoch = train_set.size() * rep;

  SgdMomentum<T> opt(params, cfg.momentum, cfg.weight_decay);
  std::vector<EpochRecord> history;
  std::vector<std::size_t> order(per_epoch);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = make_rng(cfg.seed, streams::kShuffle, static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; b += cfg.batch_size) {
      const std::size_t e = std::min(per_epoch, b + cfg.batch_size);
      std::vector<PreparedSample> fresh;
      std::vector<const OctreeNetworkPlan*> plans;
      std::vector<int> labels;
      if (aug.enabled) {
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t id = order[k];
          const auto& src = train_set[id / rep];
          auto rng = make_rng(cfg.seed, streams::kAugment,
                              static_cast<std::uint64_t>(epoch) * per_epoch + id);
          fresh.push_back({build_plan(augment(src.cloud, aug, rng), depth), src.label});
        }
        for (const auto& f : fresh) {
          plans.push_back(&f.plan);
          labels.push_back(f.label);
        }
      } else {
        for (std::size_t k = b; k < e; ++k) {
          plans.push_back(&fixed[order[k]].plan);
          labels.push_back(fixed[order[k]].label);
        }
      }
      const auto st = train_step<T>(plans, labels, params, opt, lr, cfg.threads);
      loss_sum += st.loss * static_cast<double>(e - b);
      correct += st.correct;
    }
    rec.samples = per_epoch;
    rec.train_loss = loss_sum / static_cast<double>(per_epoch);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(per_epoch);
    if (!val.empty()) rec.val_acc = evaluate<T>(val, params).instance_acc;
    history.push_back(rec);
    if (callbacks.on_epoch) callbacks.on_epoch(rec);
  }
  return history;
}

}  // namespace sphconv

#endif  // SPHCONV_TRAINING_HPP_
