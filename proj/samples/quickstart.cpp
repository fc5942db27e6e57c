// Bins a neighbor, builds an octree plan, then trains and evaluates a small
// classifier on the synthetic shapes.

#include <cstdio>

#include "sphconv/sphconv.hpp"

using namespace sphconv;

int main() {
  const KernelConfig kernel = preset_uniform(8, 2, 3, 1.0);
  const BinAssigner assign(kernel);
  const auto k = assign({0, 0, 0}, {0.3, 0.2, 0.1});
  const auto u = unpack_bin(k, kernel.n(), kernel.p());
  std::printf("neighbor bin %u (theta %d, phi %d, r %d) of %d\n", k.kappa, u.k_theta, u.k_phi, u.k_r,
              kernel.bin_count());

  SynthConfig sc;
  sc.per_class = 40;
  sc.points = 1024;
  sc.seed = 7;
  const Dataset ds = synth_dataset(sc);

  const auto plan = build_plan(ds.train.front().cloud, 5);
  for (int l = 0; l <= plan.depth; ++l) std::printf("layer %d: %zu neurons\n", l, plan.neuron_count(l));

  ModelSpec spec;
  spec.channels = {16, 16, 32, 32, 64};
  spec.num_classes = ds.num_classes();
  auto params = make_model<float>(spec, 7);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 7;
  TrainCallbacks cb;
  cb.on_epoch = [](const EpochRecord& r) {
    std::printf("epoch %d  loss %.4f  test %.3f\n", r.epoch, r.train_loss, r.val_acc);
  };
  train<float>(ds.train, ds.test, params, cfg, {}, cb);

  const auto test = prepare(ds.test, spec.depth());
  const auto r = evaluate<float>(test, params);
  std::printf("instance accuracy %.3f  class accuracy %.3f\n", r.instance_acc, r.class_acc);
}
