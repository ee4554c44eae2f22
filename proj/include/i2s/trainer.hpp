#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "i2s/model.hpp"
#include "i2s/symsol.hpp"

namespace i2s {

struct TrainConfig {
  double lr = 0.001;
  double momentum = 0.9;
  int batch = 64;
  int epochs = 40;
  int decay_every = 15;
  double decay = 0.1;
  std::uint64_t seed = 1;
  int threads = 1;
  long max_steps = 0;         // 0: run all epochs
  int checkpoint_every = 5;   // epochs

  void validate() const;
};

/// Learning rate for a 1-based epoch: lr * decay^floor((epoch - 1) / decay_every).
double learning_rate(const TrainConfig& cfg, int epoch);

/// v <- mu v - lr g; w <- w + mu v - lr g.
void nesterov_step(std::span<double> w, std::span<double> v, std::span<const double> g, double lr, double mu);

/// Training labels as grid cells and per-step dropout masks are both derived
/// from (seed, step, sample), so runs replay exactly for any thread count.
struct StepResult {
  double loss = 0.0;  // mean over the batch
  Gradients grad;     // mean over the batch
};

StepResult batch_gradient(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                          const SO3Grid& grid, std::uint64_t mask_seed, int threads);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<EpochLog> epochs;
};

struct TrainOutputs {
  std::string checkpoint;  // written every checkpoint_every epochs and at the end
  std::string metrics;     // JSON lines, one per epoch
  std::string config_json = "{}";  // embedded in every checkpoint
};

/// Throws std::runtime_error on a non-finite loss, naming epoch and step.
TrainResult train(Model& model, const TrainConfig& cfg, const Dataset& data, const TrainOutputs& out = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// "I2SC", version u32, config JSON (u64 length + text), tensor count u32,
/// then per tensor u64 length + float64 values in parameter order.
void save_checkpoint(const Model& model, const std::string& config_json, const std::string& path);
struct Checkpoint {
  std::string config_json;
  std::vector<std::vector<double>> tensors;
};
Checkpoint load_checkpoint(const std::string& path);
/// Copies tensors into the model; throws std::invalid_argument on any shape mismatch.
void load_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace i2s
