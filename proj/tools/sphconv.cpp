#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sphconv/sphconv.hpp"

#ifndef SPHCONV_VERSION
#define SPHCONV_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sphconv;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename I>
std::vector<I> parse_ints(const std::string& s, const char* what) {
  std::vector<I> out;
  for (const auto& t : split_csv(s)) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || v < 0) throw ConfigError(std::string("bad ") + what + ": '" + s + "'");
    out.push_back(static_cast<I>(v));
  }
  return out;
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Manifest

/// Every option of `cmd` with its effective value, and the argument list that
/// reproduces them.
std::pair<json, std::vector<std::string>> resolve(const CLI::App& cmd) {
  json config = json::object();
  std::vector<std::string> argv;
  for (const CLI::Option* opt : cmd.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->get_expected_max() == 0) {
      const bool on = opt->count() > 0;
      config[name] = on;
      if (on) argv.push_back("--" + name);
      continue;
    }
    std::string value = opt->get_default_str();
    if (opt->count() > 0) value = opt->as<std::string>();
    config[name] = value;
    if (!value.empty()) {
      argv.push_back("--" + name);
      argv.push_back(value);
    }
  }
  return {config, argv};
}

// Manifest of a subcommand that unwound before finishing; completed by fail().
std::optional<std::pair<fs::path, json>> g_unfinished;

class Manifest {
 public:
  Manifest(const CLI::App& cmd, const fs::path& dir, std::uint64_t seed) : path_(dir / "manifest.json") {
    auto [config, argv] = resolve(cmd);
    doc_ = {{"tool", "sphconv"},        {"version", SPHCONV_VERSION}, {"subcommand", cmd.get_name()},
            {"seed", seed},             {"config", config},           {"argv", argv},
            {"started_utc", utc_now()}, {"status", "running"}};
    fs::create_directories(dir);
    write();
  }
  ~Manifest() {
    if (!finished_) g_unfinished.emplace(path_, std::move(doc_));
  }
  json& doc() { return doc_; }
  void finish(int code) {
    finished_ = true;
    doc_["finished_utc"] = utc_now();
    doc_["status"] = code == kOk ? "ok" : "failed";
    doc_["exit_code"] = code;
    write();
  }
  void save() const { write(path_, doc_); }

  static void write(const fs::path& path, const json& doc) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << doc.dump(2) << '\n';
  }

 private:
  void write() const { write(path_, doc_); }
  fs::path path_;
  json doc_;
  bool finished_ = false;
};

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOpts {
  std::string data;
  bool synthetic = false;
  std::size_t points = 30000;
  int per_class = 125;
  double noise = 0.01;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  void add(CLI::App* c) {
    c->add_option("--data", data, "Directory written by 'ingest'");
    c->add_flag("--synthetic", synthetic, "Use the built-in 4-class synthetic dataset");
    c->add_option("--points", points, "Points per synthetic sample")->check(CLI::PositiveNumber);
    c->add_option("--per-class", per_class, "Synthetic samples per class")->check(CLI::PositiveNumber);
    c->add_option("--noise", noise, "Synthetic surface noise sigma")->check(CLI::NonNegativeNumber);
    c->add_option("--train-fraction", train_fraction, "Synthetic train split fraction")->check(CLI::Range(0.0, 1.0));
    c->add_option("--seed", seed, "Seed for data generation, initialization and shuffling");
  }

  Dataset load() const {
    if (synthetic == !data.empty()) throw ConfigError("exactly one of --data or --synthetic is required");
    if (!synthetic) return load_ingested(data);
    SynthConfig sc;
    sc.per_class = per_class;
    sc.points = points;
    sc.noise = noise;
    sc.train_fraction = train_fraction;
    sc.seed = seed;
    return synth_dataset(sc);
  }
};

struct ModelOpts {
  int depth = 8;
  std::string kernel = "8,2,3";
  std::string channels;
  std::string precision = "f32";

  void add(CLI::App* c) {
    c->add_option("--depth", depth, "Octree depth L (network layers)")->check(CLI::Range(1, 16));
    c->add_option("--kernel", kernel, "Kernel bins n,p,q (azimuth, elevation, radial)");
    c->add_option("--channels", channels, "Output channels per layer, comma separated (default 32,32,64,64,128,128,256,512 truncated to depth)");
    add_precision(c);
  }
  void add_precision(CLI::App* c) {
    c->add_option("--precision", precision, "Scalar type")->check(CLI::IsMember({"f32", "f64"}));
  }

  ModelSpec spec(int num_classes) const {
    ModelSpec s;
    const auto k = parse_ints<int>(kernel, "--kernel");
    if (k.size() != 3) throw ConfigError("--kernel expects n,p,q");
    s.n = k[0];
    s.p = k[1];
    s.q = k[2];
    if (!channels.empty()) {
      s.channels = parse_ints<int>(channels, "--channels");
      if (static_cast<int>(s.channels.size()) != depth)
        throw ConfigError("--channels lists " + std::to_string(s.channels.size()) + " layers but --depth is " +
                          std::to_string(depth));
    } else {
      if (depth > static_cast<int>(s.channels.size()))
        throw ConfigError("--channels is required for depth > " + std::to_string(s.channels.size()));
      s.channels.resize(depth);
    }
    s.num_classes = num_classes;
    require_valid(preset_uniform(s.n, s.p, s.q, 1.0));
    return s;
  }
};

struct TrainOpts {
  TrainConfig cfg;
  bool strict = false;
  bool augment = false;
  std::string out = "run";

  void add(CLI::App* c) {
    c->add_option("--lr", cfg.lr0, "Initial learning rate")->check(CLI::NonNegativeNumber);
    c->add_option("--momentum", cfg.momentum, "SGD momentum")->check(CLI::NonNegativeNumber);
    c->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber);
    c->add_flag("--strict-paper", strict, "Use momentum 0.0005 and no weight decay");
    c->add_option("--batch", cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
    c->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::NonNegativeNumber);
    c->add_option("--decay-start", cfg.decay_start, "Epochs before the first learning-rate decay");
    c->add_option("--decay-every", cfg.decay_every, "Epochs between later decays")->check(CLI::PositiveNumber);
    c->add_option("--decay-factor", cfg.decay_factor, "Learning-rate divisor per decay")->check(CLI::PositiveNumber);
    c->add_flag("--augment", augment, "Five augmented copies per sample and epoch");
    c->add_option("--threads", cfg.threads, "Worker threads for the forward pass")->check(CLI::PositiveNumber);
    c->add_option("--out", out, "Output directory");
  }
};

template <typename F>
auto with_precision(const std::string& p, F&& f) {
  return p == "f64" ? f(double{}) : f(float{});
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_ingest(const CLI::App& cmd, const std::string& input, const std::string& output, std::size_t points,
               std::uint64_t seed) {
  Manifest m(cmd, output, seed);
  const auto report = ingest_directory(input, output, points, seed);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : report.failures) std::cerr << "failed: " << f << '\n';
  std::cout << "wrote " << report.written << " clouds of " << points << " points to " << output << '\n';
  m.doc()["written"] = report.written;
  m.doc()["failures"] = report.failures;
  m.doc()["warnings"] = report.warnings;
  const int code = report.failures.empty() ? kOk : kData;
  m.finish(code);
  return code;
}

int cmd_train(const CLI::App& cmd, const DataOpts& data, const ModelOpts& model, TrainOpts opts) {
  opts.cfg.seed = data.seed;
  if (opts.strict) {
    const auto s = TrainConfig::strict_optimizer();
    opts.cfg.momentum = s.momentum;
    opts.cfg.weight_decay = s.weight_decay;
  }
  Manifest m(cmd, opts.out, data.seed);
  const auto ds = data.load();
  const auto spec = model.spec(ds.num_classes());
  AugmentConfig aug;
  aug.enabled = opts.augment;
  m.doc()["resolved"] = {{"depth", spec.depth()},
                         {"kernel", {spec.n, spec.p, spec.q}},
                         {"channels", spec.channels},
                         {"classes", ds.class_names},
                         {"train_samples", ds.train.size()},
                         {"test_samples", ds.test.size()},
                         {"lr0", opts.cfg.lr0},
                         {"momentum", opts.cfg.momentum},
                         {"weight_decay", opts.cfg.weight_decay},
                         {"batch", opts.cfg.batch_size},
                         {"epochs", opts.cfg.epochs},
                         {"augment_replication", aug.enabled ? aug.replication : 1}};
  m.save();

  const fs::path out(opts.out);
  std::ofstream hist(out / "history.csv");
  hist << "epoch,lr,train_loss,train_acc,val_acc,samples\n";
  with_precision(model.precision, [&](auto zero) {
    using T = decltype(zero);
    auto params = make_model<T>(spec, data.seed);
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochRecord& r) {
      hist << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_acc << ','
           << r.samples << '\n'
           << std::flush;
      std::printf("epoch %3d  lr %-8g loss %.5f  train %.4f  test %.4f  (%zu samples)\n", r.epoch, r.lr,
                  r.train_loss, r.train_acc, r.val_acc, r.samples);
      std::fflush(stdout);
    };
    train<T>(ds.train, ds.test, params, opts.cfg, aug, cb);
    save_checkpoint(out / "model.ckpt", params, ds.class_names);
    return 0;
  });
  m.finish(kOk);
  return kOk;
}

template <typename T>
ModelParams<T> load_model(const std::string& path, const Dataset& ds, CheckpointInfo* info) {
  auto params = load_checkpoint<T>(fs::path(path), info);
  if (params.num_classes != ds.num_classes())
    throw DataError("checkpoint has " + std::to_string(params.num_classes) + " classes, dataset has " +
                    std::to_string(ds.num_classes()));
  if (!info->class_names.empty() && info->class_names != ds.class_names)
    throw DataError("checkpoint class names differ from the dataset's");
  return params;
}

const std::vector<LabeledCloud>& pick_split(const Dataset& ds, const std::string& split) {
  return split == "train" ? ds.train : ds.test;
}

int cmd_eval(const CLI::App& cmd, const DataOpts& data, const std::string& checkpoint, const std::string& split,
             const std::string& precision, bool augment, const std::string& out) {
  Manifest m(cmd, out, data.seed);
  const auto ds = data.load();
  with_precision(precision, [&](auto zero) {
    using T = decltype(zero);
    CheckpointInfo info;
    const auto params = load_model<T>(checkpoint, ds, &info);
    std::vector<LabeledCloud> samples = pick_split(ds, split);
    if (augment) {
      AugmentConfig aug;
      aug.enabled = true;
      samples = augment_dataset(samples, aug, data.seed);
    }
    const auto prepared = prepare(samples, params.depth());
    const auto r = evaluate<T>(prepared, params);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    std::printf("%s: %zu samples  instance accuracy %.4f  class accuracy %.4f\n", split.c_str(), samples.size(),
                r.instance_acc, r.class_acc);
    std::ofstream cm(fs::path(out) / "confusion.csv");
    cm << "true\\predicted";
    for (const auto& n : ds.class_names) cm << ',' << n;
    cm << '\n';
    for (std::size_t c = 0; c < r.confusion.size(); ++c) {
      cm << ds.class_names[c];
      for (auto v : r.confusion[c]) cm << ',' << v;
      cm << '\n';
    }
    m.doc()["result"] = {{"samples", samples.size()},
                         {"instance_accuracy", r.instance_acc},
                         {"class_accuracy", r.class_acc},
                         {"warnings", r.warnings}};
    return 0;
  });
  m.finish(kOk);
  return kOk;
}

template <typename T>
void write_layer(const fs::path& out, const OctreeNetworkPlan& plan, const SampleTape<T>& tape, int l,
                 int channels, bool csv, bool ply) {
  const auto& locs = plan.layer(l).locations;
  const auto& act = tape.act[l];
  if (csv) {
    std::ofstream os(out / ("layer_" + std::to_string(l) + ".csv"));
    os << "x,y,z";
    for (int c = 0; c < channels; ++c) os << ",f" << c;
    os << '\n';
    os.precision(9);
    for (std::size_t i = 0; i < locs.size(); ++i) {
      os << locs[i].x << ',' << locs[i].y << ',' << locs[i].z;
      for (int c = 0; c < channels; ++c) os << ',' << act[i * channels + c];
      os << '\n';
    }
  }
  if (ply) {
    std::ofstream os(out / ("layer_" + std::to_string(l) + ".ply"));
    os << "ply\nformat ascii 1.0\nelement vertex " << locs.size()
       << "\nproperty float x\nproperty float y\nproperty float z\n";
    for (int c = 0; c < channels; ++c) os << "property float f" << c << '\n';
    os << "end_header\n";
    os.precision(9);
    for (std::size_t i = 0; i < locs.size(); ++i) {
      os << locs[i].x << ' ' << locs[i].y << ' ' << locs[i].z;
      for (int c = 0; c < channels; ++c) os << ' ' << act[i * channels + c];
      os << '\n';
    }
  }
}

template <typename T>
void write_kernel(const fs::path& out, const ModelParams<T>& params, int l) {
  const auto& k = params.layers[l - 1].kernel;
  const int n = k.config.n(), p = k.config.p();
  std::ofstream os(out / ("kernel_layer_" + std::to_string(l) + ".csv"));
  os << "bin,k_theta,k_phi,k_r,in,out,weight\n";
  os.precision(9);
  for (int b = 0; b < k.bin_count(); ++b) {
    const auto u = unpack_bin({static_cast<std::uint32_t>(b)}, n, p);
    const auto w = k.matrix(static_cast<std::uint32_t>(b));
    for (int i = 0; i < k.in_channels; ++i)
      for (int o = 0; o < k.out_channels; ++o)
        os << b << ',' << u.k_theta << ',' << u.k_phi << ',' << u.k_r << ',' << i << ',' << o << ','
           << w[static_cast<std::size_t>(o) * k.in_channels + i] << '\n';
  }
}

int cmd_export(const CLI::App& cmd, const DataOpts& data, const std::string& checkpoint, const std::string& split,
               std::size_t sample, const std::string& layer, const std::string& format, bool weights,
               const std::string& precision, const std::string& out) {
  Manifest m(cmd, out, data.seed);
  const auto ds = data.load();
  with_precision(precision, [&](auto zero) {
    using T = decltype(zero);
    CheckpointInfo info;
    const auto params = load_model<T>(checkpoint, ds, &info);
    const auto& samples = pick_split(ds, split);
    if (sample >= samples.size())
      throw ConfigError("--sample " + std::to_string(sample) + " out of range (split has " +
                        std::to_string(samples.size()) + ")");
    const int L = params.depth();
    std::vector<int> layers;
    if (layer == "all") {
      for (int l = 0; l <= L; ++l) layers.push_back(l);
    } else {
      const auto v = parse_ints<int>(layer, "--layer");
      for (int l : v)
        if (l > L) throw ConfigError("--layer " + std::to_string(l) + " out of range 0.." + std::to_string(L));
      layers.assign(v.begin(), v.end());
    }
    const auto plan = build_plan(samples[sample].cloud, L);
    const auto tape = forward(plan, params, Mode::kEval);
    const bool csv = format != "ply", ply = format != "csv";
    json counts = json::object();
    for (int l : layers) {
      const int channels = l == 0 ? 3 : params.channels[l - 1];
      write_layer(out, plan, tape.samples[0], l, channels, csv, ply);
      if (weights && l > 0) write_kernel(out, params, l);
      counts[std::to_string(l)] = plan.neuron_count(l);
      std::printf("layer %d: %zu neurons\n", l, plan.neuron_count(l));
    }
    m.doc()["neurons"] = counts;
    m.doc()["predicted"] = argmax<T>(tape.samples[0].logits);
    m.doc()["label"] = samples[sample].label;
    return 0;
  });
  m.finish(kOk);
  return kOk;
}

int cmd_bench(const CLI::App& cmd, bench::BenchConfig cfg, const std::string& sizes, const std::string& strategies,
              const std::string& out) {
  cfg.sizes = parse_ints<std::size_t>(sizes, "--sizes");
  cfg.strategies.clear();
  for (const auto& s : split_csv(strategies)) {
    bool found = false;
    for (const auto k : bench::kAllStrategies)
      if (s == bench::strategy_name(k)) {
        cfg.strategies.push_back(k);
        found = true;
      }
    if (!found) throw ConfigError("unknown strategy '" + s + "'");
  }
  Manifest m(cmd, out, cfg.seed);
  bench::CsvSink sink((fs::path(out) / "bench.csv").string());
  const auto report = bench::bench_neighbors(cfg, [&](const bench::BenchRow& r) {
    sink(r);
    std::printf("%-15s %8zu  %12.3f ms  %s\n", bench::strategy_name(r.strategy), r.point_count, r.median_ms,
                r.note.c_str());
    std::fflush(stdout);
  });
  std::ofstream dat(fs::path(out) / "bench.dat");
  bench::write_gnuplot(dat, report);
  m.finish(kOk);
  return kOk;
}

int cmd_time_inference(const CLI::App& cmd, const ModelOpts& model, const std::string& checkpoint, int classes,
                       const std::string& sizes, int repeats, std::uint64_t seed, const std::string& out) {
  Manifest m(cmd, out, seed);
  const auto counts = parse_ints<std::size_t>(sizes, "--sizes");
  std::ofstream os(fs::path(out) / "timing.csv");
  os << "points,octree_ms,forward_ms,total_ms\n";
  with_precision(model.precision, [&](auto zero) {
    using T = decltype(zero);
    const auto params =
        checkpoint.empty() ? make_model<T>(model.spec(classes), seed) : load_checkpoint<T>(fs::path(checkpoint));
    for (const auto& t : bench::time_inference(params, counts, repeats, seed)) {
      os << t.point_count << ',' << t.octree_ms << ',' << t.forward_ms << ',' << t.total_ms << '\n';
      std::printf("%8zu points  octree %9.3f ms  forward %9.3f ms  total %9.3f ms\n", t.point_count, t.octree_ms,
                  t.forward_ms, t.total_ms);
    }
    return 0;
  });
  m.finish(kOk);
  return kOk;
}

int fail(int code, const char* kind, const std::string& what) {
  std::cerr << kind << ": " << what << '\n';
  if (g_unfinished) {
    auto& [path, doc] = *g_unfinished;
    doc["finished_utc"] = utc_now();
    doc["status"] = "failed";
    doc["exit_code"] = code;
    doc["error"] = what;
    try {
      Manifest::write(path, doc);
    } catch (const std::exception&) {
    }
    g_unfinished.reset();
  }
  return code;
}

int run(int argc, const char* const* argv);

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad manifest: ") + e.what());
  }
  std::vector<std::string> args{"sphconv", doc.at("subcommand").get<std::string>()};
  for (const auto& a : doc.at("argv")) args.push_back(a.get<std::string>());
  std::vector<const char*> ptrs;
  for (const auto& a : args) ptrs.push_back(a.c_str());
  return run(static_cast<int>(ptrs.size()), ptrs.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Spherical convolutions on octree-structured point clouds"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", SPHCONV_VERSION);

  // ingest
  std::string ingest_in, ingest_out;
  std::size_t ingest_points = 30000;
  std::uint64_t ingest_seed = 0;
  auto* ingest = app.add_subcommand("ingest", "Sample OFF meshes into cached point clouds");
  ingest->add_option("--input", ingest_in, "Root with <class>/{train,test}/*.off")->required();
  ingest->add_option("--output", ingest_out, "Cache directory")->required();
  ingest->add_option("--points", ingest_points, "Points sampled per mesh")->check(CLI::PositiveNumber);
  ingest->add_option("--seed", ingest_seed, "Sampling seed");

  // train
  DataOpts train_data;
  ModelOpts train_model;
  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  train_data.add(train_cmd);
  train_model.add(train_cmd);
  train_opts.add(train_cmd);

  // eval
  DataOpts eval_data;
  std::string eval_ckpt, eval_split = "test", eval_precision = "f32", eval_out = "eval";
  bool eval_augment = false;
  auto* eval = app.add_subcommand("eval", "Instance and class accuracy of a checkpoint");
  eval_data.add(eval);
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--split", eval_split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--precision", eval_precision, "Scalar type")->check(CLI::IsMember({"f32", "f64"}));
  eval->add_flag("--augment", eval_augment, "Evaluate five augmented copies of each sample");
  eval->add_option("--out", eval_out, "Output directory");

  // export
  DataOpts exp_data;
  std::string exp_ckpt, exp_split = "test", exp_layer = "all", exp_format = "csv", exp_precision = "f32",
                        exp_out = "export";
  std::size_t exp_sample = 0;
  bool exp_weights = false;
  auto* exp = app.add_subcommand("export", "Per-layer neuron locations and features of one sample");
  exp_data.add(exp);
  exp->add_option("--checkpoint", exp_ckpt, "Checkpoint file")->required();
  exp->add_option("--split", exp_split, "Dataset split")->check(CLI::IsMember({"train", "test"}));
  exp->add_option("--sample", exp_sample, "Sample index within the split");
  exp->add_option("--layer", exp_layer, "Layer index, comma list, or 'all' (0 is the input cloud)");
  exp->add_option("--format", exp_format, "Output format")->check(CLI::IsMember({"csv", "ply", "both"}));
  exp->add_flag("--weights", exp_weights, "Also write kernel weights per bin for each exported layer");
  exp->add_option("--precision", exp_precision, "Scalar type")->check(CLI::IsMember({"f32", "f64"}));
  exp->add_option("--out", exp_out, "Output directory");

  // bench
  bench::BenchConfig bcfg;
  std::string bench_sizes = "10000,50000,100000,200000", bench_strategies = "octree,kdtree,knn_bruteforce,range_search",
              bench_out = "bench";
  auto* bench_cmd = app.add_subcommand("bench", "Neighborhood-structuring scalability benchmark");
  bench_cmd->add_option("--sizes", bench_sizes, "Point counts, ascending");
  bench_cmd->add_option("--strategies", bench_strategies, "Subset of octree,kdtree,knn_bruteforce,range_search");
  bench_cmd->add_option("--repeats", bcfg.repeats, "Timed repeats per cell (median reported, >= 5)");
  bench_cmd->add_option("--k", bcfg.k, "Neighbors per query for K-NN strategies")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--neighbors", bcfg.mean_neighbors, "Target mean neighbors for range search");
  bench_cmd->add_option("--depth", bcfg.octree_depth, "Octree depth")->check(CLI::Range(1, 16));
  bench_cmd->add_option("--max-points", bcfg.max_points, "Skip sizes above this budget");
  bench_cmd->add_option("--threads", bcfg.threads, "Query threads for kd-tree strategies")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bcfg.seed, "Cloud seed");
  bench_cmd->add_option("--out", bench_out, "Output directory (bench.csv is appended)");

  // time-inference
  ModelOpts ti_model;
  std::string ti_ckpt, ti_sizes = "10000,30000,50000", ti_out = "timing";
  int ti_classes = 10, ti_repeats = 5;
  std::uint64_t ti_seed = 0;
  auto* ti = app.add_subcommand("time-inference", "Octree construction and forward-pass time per sample");
  ti_model.add(ti);
  ti->add_option("--checkpoint", ti_ckpt, "Checkpoint file (random model when omitted)");
  ti->add_option("--classes", ti_classes, "Classes of the random model")->check(CLI::PositiveNumber);
  ti->add_option("--sizes", ti_sizes, "Point counts");
  ti->add_option("--repeats", ti_repeats, "Repeats per size (median reported)")->check(CLI::PositiveNumber);
  ti->add_option("--seed", ti_seed, "Seed for clouds and the random model");
  ti->add_option("--out", ti_out, "Output directory");

  // replay
  std::string replay_path;
  auto* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  replay->add_option("manifest", replay_path, "manifest.json written by an earlier run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) return cmd_ingest(*ingest, ingest_in, ingest_out, ingest_points, ingest_seed);
    if (*train_cmd) return cmd_train(*train_cmd, train_data, train_model, train_opts);
    if (*eval) return cmd_eval(*eval, eval_data, eval_ckpt, eval_split, eval_precision, eval_augment, eval_out);
    if (*exp)
      return cmd_export(*exp, exp_data, exp_ckpt, exp_split, exp_sample, exp_layer, exp_format, exp_weights,
                        exp_precision, exp_out);
    if (*bench_cmd) return cmd_bench(*bench_cmd, bcfg, bench_sizes, bench_strategies, bench_out);
    if (*ti) return cmd_time_inference(*ti, ti_model, ti_ckpt, ti_classes, ti_sizes, ti_repeats, ti_seed, ti_out);
    if (*replay) return cmd_replay(replay_path);
  } catch (const ConfigError& e) {
    return fail(kUsage, "error", e.what());
  } catch (const NumericError& e) {
    return fail(kNumeric, "numeric failure", e.what());
  } catch (const DataError& e) {
    return fail(kData, "data error", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kData, "data error", e.what());
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
