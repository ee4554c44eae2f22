#include "i2s/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "i2s/binary_io.hpp"
#include "json.hpp"

namespace i2s {
namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint64_t kMaskStream = 0x6d61736b;
constexpr std::uint64_t kShuffleStream = 0x73687566;

template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const std::size_t t = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (t == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(t);
  for (std::size_t k = 0; k < t; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += t) f(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (decay_every < 1) throw std::invalid_argument("decay_every must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("decay must be in (0, 1]");
  if (threads < 1) throw std::invalid_argument("threads must be positive");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be nonnegative");
  if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be positive");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch < 1) throw std::invalid_argument("epochs are numbered from 1");
  return cfg.lr * std::pow(cfg.decay, (epoch - 1) / cfg.decay_every);
}

void nesterov_step(std::span<double> w, std::span<double> v, std::span<const double> g, double lr, double mu) {
  if (w.size() != v.size() || w.size() != g.size()) throw std::invalid_argument("nesterov_step size mismatch");
  for (std::size_t i = 0; i < w.size(); ++i) {
    v[i] = mu * v[i] - lr * g[i];
    w[i] += mu * v[i] - lr * g[i];
  }
}

StepResult batch_gradient(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                          const SO3Grid& grid, std::uint64_t mask_seed, int threads) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const ModelConfig& cfg = model.config();
  if (data.height != cfg.image_height || data.width != cfg.image_width || data.channels != cfg.image_channels) {
    throw std::invalid_argument("dataset images do not match the model input size");
  }
  const Network net(model);
  std::vector<Network::Accumulator> acc(indices.size());
  std::vector<double> losses(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t j) {
    const Sample& s = data.samples.at(indices[j]);
    std::mt19937_64 rng(sample_seed(mask_seed, j));
    const auto fwd = net.forward(s.image, net.projector().train_mask(rng), grid);
    const CrossEntropy ce = cross_entropy(fwd.logits, s.label, grid);
    losses[j] = ce.loss;
    acc[j] = net.make_accumulator();
    net.backward(fwd.cache, ce.grad, acc[j]);
  });
  for (std::size_t j = 1; j < acc.size(); ++j) Network::add(acc[0], acc[j]);
  StepResult res;
  res.grad = net.finish(acc[0]);
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (auto& t : res.grad) {
    for (double& v : t) v *= inv;
  }
  res.loss = std::accumulate(losses.begin(), losses.end(), 0.0) * inv;
  return res;
}

TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data, const TrainOutputs& out,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (data.samples.empty()) throw std::invalid_argument("training set is empty");
  const SO3Grid& grid = cached_so3_grid(model.config().train_grid_recursion);
  std::vector<std::vector<double>> velocity = zero_gradients(model);
  std::ofstream metrics;
  if (!out.metrics.empty()) {
    metrics.open(out.metrics, std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write metrics log " + out.metrics);
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  std::vector<std::size_t> order(data.samples.size());
  long step = 0;
  bool done = false;
  for (int epoch = 1; epoch <= cfg.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(sample_seed(cfg.seed ^ kShuffleStream, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(shuffle_rng)]);
    }
    const double lr = learning_rate(cfg, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      StepResult sr = batch_gradient(model, data, idx, grid,
                                     sample_seed(cfg.seed ^ kMaskStream, static_cast<std::uint64_t>(step)), cfg.threads);
      if (!std::isfinite(sr.loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + "; try a smaller learning rate");
      }
      auto params = model.mutable_parameters();
      for (std::size_t k = 0; k < params.size(); ++k) nesterov_step(params[k], velocity[k], sr.grad[k], lr, cfg.momentum);
      result.step_losses.push_back(sr.loss);
      loss_sum += sr.loss;
      ++batches;
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        done = true;
        break;
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(batches);
    log.lr = lr;
    log.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(log);
    if (metrics) {
      metrics << nlohmann::json{{"epoch", log.epoch}, {"loss", log.loss}, {"lr", log.lr}, {"wall_time", log.wall_time}}.dump()
              << "\n"
              << std::flush;
    }
    if (on_epoch) on_epoch(log);
    if (!out.checkpoint.empty() && epoch % cfg.checkpoint_every == 0) save_checkpoint(model, out.config_json, out.checkpoint);
  }
  if (!out.checkpoint.empty()) save_checkpoint(model, out.config_json, out.checkpoint);
  return result;
}

void save_checkpoint(const Model& model, const std::string& config_json, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path);
    io::write_magic(os, "I2SC");
    io::write_u32(os, kCheckpointVersion);
    io::write_string(os, config_json);
    const auto params = model.parameters();
    io::write_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
      io::write_u64(os, p.size());
      io::write_f64s(os, p);
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path);
  }
  std::rename(tmp.c_str(), path.c_str());
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  io::expect_magic(is, "I2SC");
  const std::uint32_t version = io::read_u32(is);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_json = io::read_string(is);
  const std::uint32_t n = io::read_u32(is);
  if (n > 64) throw std::runtime_error("corrupt checkpoint: tensor count " + std::to_string(n));
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint64_t len = io::read_u64(is);
    if (len > (1ull << 28)) throw std::runtime_error("corrupt checkpoint: tensor length");
    c.tensors.emplace_back(len);
    io::read_f64s(is, c.tensors.back());
  }
  return c;
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  const auto shapes = model.parameters();
  const auto names = model.parameter_names();
  if (shapes.size() != ckpt.tensors.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                                std::to_string(shapes.size()));
  }
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (shapes[k].size() != ckpt.tensors[k].size()) {
      throw std::invalid_argument("checkpoint tensor " + names[k] + " has " + std::to_string(ckpt.tensors[k].size()) +
                                  " values, model expects " + std::to_string(shapes[k].size()));
    }
  }
  auto params = model.mutable_parameters();
  for (std::size_t k = 0; k < params.size(); ++k) std::copy(ckpt.tensors[k].begin(), ckpt.tensors[k].end(), params[k].begin());
}

}  // namespace i2s
