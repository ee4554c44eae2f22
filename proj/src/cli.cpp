#include "i2s/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "i2s/config.hpp"
#include "i2s/evalviz.hpp"
#include "i2s/harmonics.hpp"
#include "i2s/selftest.hpp"
#include "i2s/symsol.hpp"
#include "i2s/trainer.hpp"

namespace i2s {
namespace {

namespace fs = std::filesystem;

std::string env(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string();
}

std::string output_path(const std::string& path) {
  const std::string dir = env("I2S_OUTPUT_DIR");
  if (dir.empty() || path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(dir) / path).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

const SO3Grid& grid_for(int recursion) { return cached_so3_grid(recursion, env("I2S_CACHE_DIR")); }

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_dataset(const ModelConfig& m, const Dataset& d) {
  if (d.height != m.image_height || d.width != m.image_width || d.channels != m.image_channels) {
    throw std::invalid_argument("dataset images are " + std::to_string(d.height) + "x" + std::to_string(d.width) + "x" +
                                std::to_string(d.channels) + " but the model expects " +
                                std::to_string(m.image_height) + "x" + std::to_string(m.image_width) + "x" +
                                std::to_string(m.image_channels));
  }
}

Model load_model(const std::string& path, RunConfig& cfg) {
  const Checkpoint ckpt = load_checkpoint(path);
  cfg = run_config_from_json(ckpt.config_json);
  cfg.validate();
  Model model(cfg.model);
  load_parameters(model, ckpt);
  return model;
}

struct GenerateArgs {
  std::string shape;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string out;
};

struct TrainArgs {
  std::string data, out, config, metrics;
  int L = 0, n_so3_convs = 0, batch = 0, epochs = 0, keep = 0, decay_every = 0, train_grid = 0, eval_grid = 0,
      checkpoint_every = 0;
  double lr = 0.0, momentum = 0.0, decay = 0.0;
  std::uint64_t seed = 0;
  long max_steps = 0;
  std::string projection, s2_filter;
};

struct EvalArgs {
  std::string checkpoint, data, out;
  int grid_recursion = -1;
};

struct VizArgs {
  std::string checkpoint, data, out;
  std::size_t index = 0;
  double threshold = -1.0;
  int grid_recursion = -1;
};

struct SelftestArgs {
  int fault_degree = -1;
  double fault_scale = 1.5;
};

int cmd_generate(const GenerateArgs& a, int threads, std::ostream& out) {
  const ShapeId shape = shape_from_name(a.shape);
  Split split;
  if (a.split == "train") {
    split = Split::Train;
  } else if (a.split == "test") {
    split = Split::Test;
  } else {
    throw std::invalid_argument("unknown split '" + a.split + "' (valid: train, test)");
  }
  if (a.n == 0) throw std::invalid_argument("--n must be positive");
  const std::string path = output_path(a.out);
  const Dataset d = generate(shape, a.n, a.seed, split, threads);
  ensure_parent(path);
  save_dataset(d, path);
  std::size_t visible = 0;
  for (const Sample& s : d.samples) visible += s.marker_visible ? 1 : 0;
  out << "generated " << d.samples.size() << " " << a.split << " samples of " << a.shape << " (seed " << a.seed
      << ", " << d.height << "x" << d.width << "x" << d.channels;
  if (get_shape(shape).marked) out << ", marker visible in " << visible;
  out << ") -> " << path << '\n';
  return kExitOk;
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, int threads, std::ostream& out) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = run_config_from_json(read_text(a.config), cfg);
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--L")) cfg.model.band_limit = a.L;
  if (given("--projection")) cfg.model.projection = projection_from_name(a.projection);
  if (given("--s2-filter")) cfg.model.s2_filter = filter_mode_from_name(a.s2_filter);
  if (given("--n-so3-convs")) cfg.model.n_so3_convs = a.n_so3_convs;
  if (given("--keep")) cfg.model.projection_config.keep = a.keep;
  if (given("--train-grid-recursion")) cfg.model.train_grid_recursion = a.train_grid;
  if (given("--eval-grid-recursion")) cfg.eval_grid_recursion = a.eval_grid;
  if (given("--lr")) cfg.train.lr = a.lr;
  if (given("--momentum")) cfg.train.momentum = a.momentum;
  if (given("--batch")) cfg.train.batch = a.batch;
  if (given("--epochs")) cfg.train.epochs = a.epochs;
  if (given("--decay-every")) cfg.train.decay_every = a.decay_every;
  if (given("--decay")) cfg.train.decay = a.decay;
  if (given("--seed")) cfg.train.seed = a.seed;
  if (given("--max-steps")) cfg.train.max_steps = a.max_steps;
  if (given("--checkpoint-every")) cfg.train.checkpoint_every = a.checkpoint_every;
  cfg.validate();
  cfg.train.threads = threads;

  const Dataset data = load_dataset(a.data);
  check_dataset(cfg.model, data);
  if (data.samples.empty()) throw std::invalid_argument("training set is empty");

  TrainOutputs outputs;
  outputs.checkpoint = output_path(a.out);
  outputs.metrics = output_path(a.metrics.empty() ? a.out + ".metrics.jsonl" : a.metrics);
  outputs.config_json = to_json(cfg);
  ensure_parent(outputs.checkpoint);
  ensure_parent(outputs.metrics);
  out << "config " << outputs.config_json << '\n';

  grid_for(cfg.model.train_grid_recursion);
  Model model(cfg.model);
  model.initialize(cfg.train.seed);
  const TrainResult res = train(model, cfg.train, data, outputs, [&](const EpochLog& e) {
    std::ostringstream line;
    line << "epoch " << e.epoch << " loss " << e.loss << " lr " << e.lr << " time " << std::fixed
         << std::setprecision(1) << e.wall_time << "s";
    out << line.str() << '\n';
    out.flush();
  });
  out << "trained " << res.step_losses.size() << " steps";
  if (!res.step_losses.empty()) {
    out << ", first loss " << res.step_losses.front() << ", last loss " << res.step_losses.back();
  }
  out << " -> " << outputs.checkpoint << '\n';
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, int threads, std::ostream& out) {
  RunConfig cfg;
  Model model = load_model(a.checkpoint, cfg);
  const int rec = a.grid_recursion >= 0 ? a.grid_recursion : cfg.eval_grid_recursion;
  if (rec > kMaxSO3Recursion) throw std::invalid_argument("--grid-recursion must be in [0, 5]");
  cfg.eval_grid_recursion = rec;
  const Dataset data = load_dataset(a.data);
  check_dataset(cfg.model, data);
  grid_for(rec);
  std::map<std::string, EvalResult> results;
  results[shape_name(data.shape)] = evaluate(model, data, rec, threads);
  const std::string json = report_json(make_report(results, rec, to_json(cfg)));
  if (a.out.empty()) {
    out << json;
  } else {
    const std::string path = output_path(a.out);
    ensure_parent(path);
    std::ofstream f(path);
    f << json;
    if (!f) throw std::runtime_error("cannot write " + path);
    const MetricSummary& s = results.begin()->second.summary;
    out << shape_name(data.shape) << ": n " << s.point.count << " MedErr " << s.point.median_error_deg
        << " Acc@15 " << s.point.acc15 << " Acc@30 " << s.point.acc30 << " loglik " << s.avg_log_likelihood
        << " -> " << path << '\n';
  }
  return kExitOk;
}

int cmd_viz(const VizArgs& a, std::ostream& out) {
  RunConfig cfg;
  Model model = load_model(a.checkpoint, cfg);
  const int rec = a.grid_recursion >= 0 ? a.grid_recursion : cfg.model.train_grid_recursion;
  if (rec > kMaxSO3Recursion) throw std::invalid_argument("--grid-recursion must be in [0, 5]");
  const Dataset data = load_dataset(a.data);
  check_dataset(cfg.model, data);
  if (a.index >= data.samples.size()) {
    throw std::invalid_argument("--index " + std::to_string(a.index) + " out of range (dataset has " +
                                std::to_string(data.samples.size()) + " samples)");
  }
  const Sample& s = data.samples[a.index];
  const SO3Grid& grid = grid_for(rec);
  const Network net(model);
  const PoseDistribution dist = softmax_distribution(net.logits(s.image, net.projector().eval_mask(), grid), grid);
  const std::vector<Rotation> gt = s.equivalents.empty() ? std::vector<Rotation>{s.label} : s.equivalents;
  SvgStats stats;
  std::string svg = mollweide_svg(dist, gt, a.threshold, &stats);
  const std::size_t open = svg.find("<svg");
  const std::size_t close = open == std::string::npos ? open : svg.find('>', open);
  if (close != std::string::npos) {
    std::string meta = to_json(cfg);
    std::string escaped;
    for (char c : meta) {
      if (c == '&') escaped += "&amp;";
      else if (c == '<') escaped += "&lt;";
      else escaped += c;
    }
    svg.insert(close + 1, "\n<metadata>" + escaped + "</metadata>");
  }
  const std::string path = output_path(a.out);
  ensure_parent(path);
  std::ofstream f(path);
  f << svg;
  if (!f) throw std::runtime_error("cannot write " + path);
  out << "sample " << a.index << " (marker " << (s.marker_visible ? "visible" : "hidden") << "): " << stats.dots
      << " dots, " << stats.rings << " ground-truth rings -> " << path << '\n';
  return kExitOk;
}

int cmd_selftest(const SelftestArgs& a, std::ostream& out, std::ostream& err) {
  if (a.fault_degree >= 0) testing::set_wigner_fault(a.fault_degree, a.fault_scale);
  const auto checks = run_selftest();
  if (a.fault_degree >= 0) testing::clear_wigner_fault();
  if (print_selftest(checks, out)) return kExitOk;
  std::string failed;
  for (const auto& c : checks) {
    if (!c.passed) failed += (failed.empty() ? "" : ", ") + c.name;
  }
  err << "failed checks: " << failed << '\n';
  return kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Image-to-sphere pose estimation on SYMSOL-lite"};
  app.require_subcommand(1);
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Render a SYMSOL-lite split");
  gen->add_option("--shape", ga.shape, "tet, cube, ico, cone, cyl, tetX, cylO, sphX")->required();
  gen->add_option("--n", ga.n, "Number of samples")->required();
  gen->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
  gen->add_option("--split", ga.split, "train or test")->capture_default_str();
  gen->add_option("--out", ga.out, "Dataset file")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", ta.data, "Training dataset")->required();
  tr->add_option("--out", ta.out, "Checkpoint file")->required();
  tr->add_option("--config", ta.config, "JSON config; flags override it");
  tr->add_option("--metrics", ta.metrics, "Metrics JSONL (default: <out>.metrics.jsonl)");
  tr->add_option("--L", ta.L, "Band limit");
  tr->add_option("--projection", ta.projection, "spatial or fourier");
  tr->add_option("--s2-filter", ta.s2_filter, "fourier or spatial");
  tr->add_option("--n-so3-convs", ta.n_so3_convs, "Number of SO(3) convolutions");
  tr->add_option("--keep", ta.keep, "Projection points kept per forward pass");
  tr->add_option("--train-grid-recursion", ta.train_grid, "SO(3) grid recursion used in training");
  tr->add_option("--eval-grid-recursion", ta.eval_grid, "Default SO(3) grid recursion for eval");
  tr->add_option("--lr", ta.lr, "Learning rate");
  tr->add_option("--momentum", ta.momentum, "Nesterov momentum");
  tr->add_option("--batch", ta.batch, "Batch size");
  tr->add_option("--epochs", ta.epochs, "Epochs");
  tr->add_option("--decay-every", ta.decay_every, "Epochs between learning-rate decays");
  tr->add_option("--decay", ta.decay, "Learning-rate decay factor");
  tr->add_option("--seed", ta.seed, "Seed for initialization, shuffling and masks");
  tr->add_option("--max-steps", ta.max_steps, "Stop after this many steps (0: no limit)");
  tr->add_option("--checkpoint-every", ta.checkpoint_every, "Epochs between checkpoints");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a test split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", ea.data, "Test dataset")->required();
  ev->add_option("--grid-recursion", ea.grid_recursion, "SO(3) grid recursion (default: from the checkpoint)");
  ev->add_option("--out", ea.out, "Report JSON (default: stdout)");

  VizArgs va;
  auto* vz = app.add_subcommand("viz", "Render one predicted distribution as SVG");
  vz->add_option("--checkpoint", va.checkpoint, "Checkpoint file")->required();
  vz->add_option("--data", va.data, "Dataset")->required();
  vz->add_option("--index", va.index, "Sample index")->capture_default_str();
  vz->add_option("--out", va.out, "SVG file")->required();
  vz->add_option("--threshold", va.threshold, "Probability threshold (default: 4x uniform)");
  vz->add_option("--grid-recursion", va.grid_recursion, "SO(3) grid recursion (default: training grid)");

  SelftestArgs sa;
  auto* st = app.add_subcommand("selftest", "Run the fast invariant suite");
  st->add_option("--inject-wigner-fault", sa.fault_degree, "Scale the Wigner block of this degree");
  st->add_option("--fault-scale", sa.fault_scale, "Scale used by --inject-wigner-fault")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_generate(ga, threads, out);
    if (tr->parsed()) return cmd_train(ta, *tr, threads, out);
    if (ev->parsed()) return cmd_eval(ea, threads, out);
    if (vz->parsed()) return cmd_viz(va, out);
    return cmd_selftest(sa, out, err);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace i2s
