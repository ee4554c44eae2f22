// Acceptance suite: one PASS/FAIL line per criterion. I2S_ACCEPT_ONLY=1,5,11
// restricts the run to a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "i2s/cli.hpp"
#include "i2s/equivariant.hpp"
#include "i2s/evalviz.hpp"
#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"
#include "i2s/head.hpp"
#include "i2s/model.hpp"
#include "i2s/symsol.hpp"
#include "i2s/trainer.hpp"

using namespace i2s;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

void fill(std::vector<double>& v, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  for (double& x : v) x = n(rng);
}

S2Coeffs rand_s2(int L, int c, std::mt19937_64& rng) {
  S2Coeffs s(L, c);
  fill(s.data, rng);
  return s;
}

SO3Coeffs rand_so3(int L, int c, std::mt19937_64& rng) {
  SO3Coeffs s(L, c);
  fill(s.data, rng);
  return s;
}

fs::path workdir() {
  const char* env = std::getenv("I2S_ACCEPT_WORKDIR");
  const fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "i2s_acceptance";
  fs::create_directories(dir);
  return dir;
}

// Training schedules for the scaled experiments (10k samples each), sized to
// the CPU budgets.
struct Schedule {
  double lr;
  int epochs;
  int decay_every;
};
constexpr Schedule kSymmetrySchedule{0.01, 10, 8};
constexpr Schedule kPoseSchedule{0.01, 22, 17};

ModelConfig experiment_model() {
  ModelConfig cfg;
  cfg.encoder_channels1 = 32;
  cfg.encoder_channels2 = 64;
  return cfg;
}
constexpr double kAblationLr = 0.02;
constexpr int kAblationBatch = 64;

Model train_shape(ShapeId shape, const Schedule& s, std::uint64_t data_seed) {
  const Dataset data = generate(shape, 10000, data_seed, Split::Train);
  Model model{experiment_model()};
  TrainConfig tc;
  tc.lr = s.lr;
  tc.epochs = s.epochs;
  tc.decay_every = s.decay_every;
  tc.seed = 1;
  model.initialize(tc.seed);
  train(model, tc, data, {}, [&](const EpochLog& e) {
    std::cerr << "  " << shape_name(shape) << " epoch " << e.epoch << " loss " << e.loss << " (" << e.wall_time
              << " s)\n";
  });
  return model;
}

// 1 ---------------------------------------------------------------------------
Outcome grid_constants() {
  std::string bad;
  for (int r = 0; r <= 5; ++r) {
    const std::size_t n = healpix_s2(r).points.size();
    if (n != 12u * (std::size_t{1} << (2 * r))) bad += fmt(" S2(%d)=%zu", r, n);
  }
  const std::size_t n3 = healpix_so3(3).rotations.size(), n5 = healpix_so3(5).rotations.size();
  if (n3 != 36864) bad += fmt(" SO3(3)=%zu", n3);
  if (n5 != 2359296) bad += fmt(" SO3(5)=%zu", n5);
  return {bad.empty(), fmt("|S2(r)| = 12*4^r for r<=5, |SO3(3)| = %zu, |SO3(5)| = %zu", n3, n5) + bad};
}

// 2 ---------------------------------------------------------------------------
Outcome roundtrips() {
  std::mt19937_64 rng(2);
  double worst_s2 = 0.0, worst_so3 = 0.0;
  for (int L = 0; L <= 8; ++L) {
    const S2Coeffs c = rand_s2(L, 2, rng);
    const QuadratureGrid q2 = quadrature_s2(L);
    worst_s2 = std::max(worst_s2, rel(s2_fft(q2, s2_ifft(c, q2.points), 2, L).data, c.data));
    const SO3Coeffs h = rand_so3(L, 2, rng);
    const QuadratureGrid q3 = quadrature_so3(L);
    worst_so3 = std::max(worst_so3, rel(so3_fft(q3, so3_ifft(h, q3), 2, L).data, h.data));
  }
  return {worst_s2 < 1e-8 && worst_so3 < 1e-8,
          fmt("worst relative error s2 %.2e, so3 %.2e (tol 1e-8, L=0..8)", worst_s2, worst_so3)};
}

// 3 ---------------------------------------------------------------------------
// Direct quadrature of the group-convolution integral at random g.
Outcome convolution_oracle() {
  std::mt19937_64 rng(3);
  double worst_s2 = 0.0, worst_so3 = 0.0;
  for (int L = 1; L <= 4; ++L) {
    const S2Coeffs f = rand_s2(L, 1, rng), psi = rand_s2(L, 1, rng);
    const SO3Coeffs out = s2_conv(f, psi, 1);
    const QuadratureGrid q = quadrature_s2(L);
    const auto fv = s2_ifft(f, q.points);
    const SO3Coeffs h = rand_so3(L, 1, rng), phi = rand_so3(L, 1, rng);
    const SO3Coeffs out3 = so3_conv(h, phi, 1);
    const QuadratureGrid q3 = quadrature_so3(L);
    const auto hv = so3_ifft(h, q3);
    for (int t = 0; t < 5; ++t) {
      const Rotation g = sample_uniform(rng);
      const Rotation gs[] = {g};
      std::vector<Vec3> moved;
      for (const Vec3& x : q.points) moved.push_back(g.inverse().apply(x));
      const auto pv = s2_ifft(psi, moved);
      double brute = 0.0, scale = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        brute += q.weights[i] * fv[i] * pv[i];
        scale += q.weights[i] * std::abs(fv[i] * pv[i]);
      }
      worst_s2 = std::max(worst_s2, std::abs(so3_ifft(out, gs)[0] - brute) / scale);

      std::vector<Rotation> moved3;
      for (const Rotation& r : q3.rotations) moved3.push_back(g.inverse() * r);
      const auto phiv = so3_ifft(phi, moved3);
      brute = scale = 0.0;
      for (std::size_t i = 0; i < q3.size(); ++i) {
        brute += q3.weights[i] * hv[i] * phiv[i];
        scale += q3.weights[i] * std::abs(hv[i] * phiv[i]);
      }
      worst_so3 = std::max(worst_so3, std::abs(so3_ifft(out3, gs)[0] - brute) / scale);
    }
  }
  return {worst_s2 < 1e-3 && worst_so3 < 1e-3,
          fmt("worst relative error s2_conv %.2e, so3_conv %.2e (tol 1e-3, L=1..4)", worst_s2, worst_so3)};
}

// 4 ---------------------------------------------------------------------------
Outcome equivariance() {
  std::mt19937_64 rng(4);
  const int L = 6;
  double s2w = 0.0, so3w = 0.0, reluw = 0.0;
  for (int t = 0; t < 20; ++t) {
    const Rotation g = sample_uniform(rng);
    const S2Coeffs f = rand_s2(L, 2, rng), psi = rand_s2(L, 4, rng);
    s2w = std::max(s2w, rel(s2_conv(rotate_signal(f, g), psi, 2).data, rotate_signal(s2_conv(f, psi, 2), g).data));
    const SO3Coeffs h = rand_so3(L, 2, rng), phi = rand_so3(L, 2, rng);
    so3w = std::max(so3w, rel(so3_conv(rotate_signal(h, g), phi, 1).data, rotate_signal(so3_conv(h, phi, 1), g).data));
    const SO3Coeffs r = rand_so3(L, 1, rng);
    reluw = std::max(reluw, rel(spatial_relu(rotate_signal(r, g), 2 * L).data,
                                rotate_signal(spatial_relu(r, 2 * L), g).data));
  }
  return {s2w < 1e-6 && so3w < 1e-6 && reluw < 0.05,
          fmt("20 pairs: s2_conv %.2e, so3_conv %.2e (tol 1e-6), spatial_relu %.2f%% (tol 5%%)", s2w, so3w,
              100 * reluw)};
}

// 5 ---------------------------------------------------------------------------
Outcome gradient_oracle() {
  ModelConfig cfg;
  cfg.band_limit = 2;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.encoder_channels1 = 4;
  cfg.encoder_channels2 = 6;
  cfg.s2_channels = 3;
  cfg.so3_filter_recursion = 2;
  cfg.so3_support_deg = 40.0;
  const SO3Grid grid = healpix_so3(0);
  std::mt19937_64 rng(5);
  double worst = 0.0;
  int sampled = 0;
  for (int variant = 0; variant < 4; ++variant) {
    cfg.projection = variant & 1 ? ProjectionKind::Fourier : ProjectionKind::Spatial;
    cfg.s2_filter = variant & 2 ? S2Filter::Mode::Spatial : S2Filter::Mode::Fourier;
    Model m(cfg);
    m.initialize(variant);
    std::normal_distribution<double> n(0.0, 0.4);
    for (auto p : m.mutable_parameters()) {
      for (double& v : p) v = n(rng);
    }
    std::vector<float> img(static_cast<std::size_t>(cfg.image_height) * cfg.image_width * cfg.image_channels);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : img) v = u(rng);
    const Network net(m);
    const auto kept = net.projector().train_mask(rng);
    const std::size_t target = rng() % grid.rotations.size();
    const auto fwd = net.forward(img, kept, grid);
    const Gradients g = backward(m, fwd.cache, cross_entropy(fwd.logits, target).grad);
    auto loss = [&] { return cross_entropy(forward(m, img, kept, grid).logits, target).loss; };
    const double h = 1e-6;
    const auto params = m.parameters();
    for (int t = 0; t < 50; ++t, ++sampled) {
      const std::size_t k = rng() % params.size();
      const std::size_t i = rng() % params[k].size();
      const double orig = m.parameters()[k][i];
      m.mutable_parameters()[k][i] = orig + h;
      const double lp = loss();
      m.mutable_parameters()[k][i] = orig - h;
      const double lm = loss();
      m.mutable_parameters()[k][i] = orig;
      const double fd = (lp - lm) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[k][i]) / std::max({std::abs(fd), std::abs(g[k][i]), 1e-4}));
    }
  }
  return {worst < 1e-3, fmt("%d parameters over 4 variants, worst relative error %.2e (tol 1e-3)", sampled, worst)};
}

// 6 ---------------------------------------------------------------------------
Outcome uniform_baseline() {
  const double target = -std::log(pi * pi);
  double worst = 0.0;
  std::string parts;
  for (ShapeId s : {ShapeId::Cube, ShapeId::CylO, ShapeId::SphX}) {
    const Dataset test = generate(s, 25, 6, Split::Test);
    Model m{ModelConfig{}};
    m.initialize(1);
    const double ll = avg_log_likelihood(m, test, 5);
    worst = std::max(worst, std::abs(ll - target));
    parts += fmt(" %s %.4f", shape_name(s).c_str(), ll);
  }
  return {worst <= 0.01, fmt("untrained avg log-likelihood at recursion 5:%s (target %.4f +- 0.01)", parts.c_str(),
                             target)};
}

// 7 + 8 -----------------------------------------------------------------------
Outcome symmetry_learning() {
  const Model model = train_shape(ShapeId::Cube, kSymmetrySchedule, 1);
  const Dataset test = generate(ShapeId::Cube, 1000, 2, Split::Test);
  const EvalResult r = evaluate(model, test, 5);
  std::size_t within = 0;
  for (const SampleEval& s : r.samples) within += s.error_deg <= 10.0 ? 1 : 0;
  const double frac = static_cast<double>(within) / r.samples.size();
  const double gain = r.summary.avg_log_likelihood + std::log(pi * pi);
  return {gain >= 3.0 && frac >= 0.8,
          fmt("cube: avg log-likelihood %.3f (gain %.3f over uniform, need >= 3), argmax within 10 deg %.3f "
              "(need >= 0.8)",
              r.summary.avg_log_likelihood, gain, frac)};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome ambiguity() {
  const Model model = train_shape(ShapeId::CylO, kSymmetrySchedule, 1);
  const Dataset test = generate(ShapeId::CylO, 1000, 2, Split::Test);
  const EvalResult r = evaluate(model, test, 5);
  std::vector<double> visible, hidden;
  for (const SampleEval& s : r.samples) (s.marker_visible ? visible : hidden).push_back(static_cast<double>(s.support));
  const double mv = median(visible), mh = median(hidden);
  return {mh > 0.0 && mh >= 10.0 * mv,
          fmt("cylO median support (cells > 4/N at recursion 5): hidden %.1f (n=%zu), visible %.1f (n=%zu), "
              "ratio %.1f (need >= 10)",
              mh, hidden.size(), mv, visible.size(), mv > 0 ? mh / mv : INFINITY)};
}

// 9 ---------------------------------------------------------------------------
Outcome pose_accuracy() {
  const Model model = train_shape(ShapeId::TetX, kPoseSchedule, 1);
  const Dataset test = generate(ShapeId::TetX, 1000, 2, Split::Test);
  const EvalResult r = evaluate(model, test, 5);
  return {r.summary.point.acc15 >= 0.8, fmt("tetX: Acc@15 %.3f (need >= 0.8), MedErr %.2f deg",
                                            r.summary.point.acc15, r.summary.point.median_error_deg)};
}

// 10 --------------------------------------------------------------------------
Outcome ablation_smoke() {
  struct Variant {
    std::string name;
    ModelConfig cfg;
  };
  std::vector<Variant> variants;
  for (auto proj : {ProjectionKind::Spatial, ProjectionKind::Fourier}) {
    for (auto filt : {S2Filter::Mode::Fourier, S2Filter::Mode::Spatial}) {
      ModelConfig c;
      c.projection = proj;
      c.s2_filter = filt;
      variants.push_back({"proj=" + std::string(proj == ProjectionKind::Spatial ? "spatial" : "fourier") +
                              ",filter=" + (filt == S2Filter::Mode::Fourier ? "fourier" : "spatial"),
                          c});
    }
  }
  for (int n : {0, 2}) {
    ModelConfig c;
    c.n_so3_convs = n;
    variants.push_back({"n_so3_convs=" + std::to_string(n), c});
  }
  for (int L : {2, 4}) {
    ModelConfig c;
    c.band_limit = L;
    variants.push_back({"L=" + std::to_string(L), c});
  }
  const Dataset data = generate(ShapeId::TetX, 2000, 10, Split::Train);
  bool ok = true;
  std::string parts;
  for (const Variant& v : variants) {
    Model m(v.cfg);
    TrainConfig tc;
    tc.lr = kAblationLr;
    tc.batch = kAblationBatch;
    tc.max_steps = 200;
    tc.epochs = 1000;
    tc.decay_every = 1000;
    m.initialize(1);
    bool finite = true;
    double first = 0.0, tail = 0.0;
    try {
      const TrainResult r = train(m, tc, data);
      first = r.step_losses.front();
      const std::size_t n = r.step_losses.size();
      for (std::size_t i = n - 20; i < n; ++i) tail += r.step_losses[i] / 20.0;
    } catch (const std::runtime_error&) {
      finite = false;
    }
    const double drop = finite ? 1.0 - tail / first : 0.0;
    ok = ok && finite && drop >= 0.2;
    parts += fmt(" %s:%.0f%%", v.name.c_str(), 100 * drop);
    std::cerr << "  " << v.name << " step0 " << first << " last20 " << tail << '\n';
  }
  return {ok, "loss reduction after 200 steps (last 20 vs step 0, need >= 20%, no NaN):" + parts};
}

// 11 --------------------------------------------------------------------------
std::uint64_t fnv1a(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

Outcome determinism() {
  const fs::path root = workdir() / "determinism";
  std::vector<std::vector<std::uint64_t>> hashes;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / ("run" + std::to_string(run));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string threads = run == 0 ? "1" : "3";
    auto go = [&](std::vector<std::string> args) {
      args.insert(args.begin(), {"--threads", threads});
      std::ostringstream out, err;
      const int code = run_cli(args, out, err);
      if (code != 0) throw std::runtime_error("command failed: " + err.str());
    };
    const std::string train = (dir / "train.bin").string(), test = (dir / "test.bin").string();
    const std::string ckpt = (dir / "model.ckpt").string(), report = (dir / "report.json").string();
    go({"generate", "--shape", "cylO", "--n", "1000", "--seed", "11", "--out", train});
    go({"generate", "--shape", "cylO", "--n", "50", "--seed", "12", "--split", "test", "--out", test});
    go({"train", "--data", train, "--out", ckpt, "--max-steps", "200", "--seed", "5", "--lr", "0.01"});
    go({"eval", "--checkpoint", ckpt, "--data", test, "--out", report});
    hashes.push_back({fnv1a(train), fnv1a(test), fnv1a(ckpt), fnv1a(report)});
  }
  const char* names[] = {"train", "test", "checkpoint", "report"};
  std::string parts;
  for (std::size_t i = 0; i < hashes[0].size(); ++i) {
    parts += fmt(" %s %016llx%s", names[i], static_cast<unsigned long long>(hashes[0][i]),
                 hashes[0][i] == hashes[1][i] ? "" : " (differs)");
  }
  return {hashes[0] == hashes[1], "two runs (1 and 3 threads) of generate/train 200 steps/eval:" + parts};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all = {
      {1, "grid constants", 10, grid_constants},
      {2, "Fourier roundtrips", 30, roundtrips},
      {3, "convolution-theorem oracle", 120, convolution_oracle},
      {4, "equivariance suite", 60, equivariance},
      {5, "gradient oracle", 120, gradient_oracle},
      {6, "uniform baseline", 60, uniform_baseline},
      {7, "symmetry learning (cube)", 45 * 60, symmetry_learning},
      {8, "ambiguity (cylO)", 45 * 60, ambiguity},
      {9, "pose accuracy (tetX)", 45 * 60, pose_accuracy},
      {10, "ablation smoke", 20 * 60, ablation_smoke},
      {11, "determinism", 10 * 60, determinism},
  };
  std::set<int> only;
  if (const char* env = std::getenv("I2S_ACCEPT_ONLY")) {
    std::stringstream ss(env);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }
  int failures = 0;
  double shared = 0.0;  // 7 and 8 share one budget
  for (const Criterion& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double budget_used = secs;
    if (c.id == 7) shared = secs;
    if (c.id == 8) budget_used = secs + shared;
    const bool in_time = budget_used <= c.budget_s;
    const bool pass = o.pass && in_time;
    failures += pass ? 0 : 1;
    std::printf("criterion %2d %s: %s | %s | %.1f s (budget %.0f s%s)%s\n", c.id, pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), secs, c.budget_s, c.id == 8 ? ", shared with 7" : "",
                in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
