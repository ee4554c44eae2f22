#include "i2s/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "i2s/binary_io.hpp"
#include "i2s/so3_sampler.hpp"

namespace i2s {
namespace {

constexpr std::uint32_t kDistributionVersion = 1;

void check_grid(const SO3Grid& grid, std::size_t n) {
  if (grid.rotations.size() != n) throw std::invalid_argument("logit count does not match grid size");
}

}  // namespace

std::vector<double> query_logits(const SO3Coeffs& signal, const SO3Grid& grid) {
  if (signal.channels != 1) throw std::invalid_argument("query_logits needs a single-channel signal");
  const auto sampler = grid_sampler(grid.recursion, signal.band_limit);
  check_grid(grid, sampler->size());
  return sampler->synthesize(signal);
}

SO3Coeffs query_logits_backward(std::span<const double> grad_logits, const SO3Grid& grid, int band_limit) {
  check_grid(grid, grad_logits.size());
  return grid_sampler(grid.recursion, band_limit)->adjoint(grad_logits, 1);
}

PoseDistribution softmax_distribution(std::span<const double> logits, const SO3Grid& grid) {
  check_grid(grid, logits.size());
  PoseDistribution d;
  d.grid = &grid;
  d.probs.resize(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(mx)) throw std::invalid_argument("non-finite logits");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.probs[i] = std::exp(logits[i] - mx);
    sum += d.probs[i];
  }
  for (double& p : d.probs) p /= sum;
  return d;
}

CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) throw std::out_of_range("cross-entropy target out of range");
  CrossEntropy ce;
  ce.target = target;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  ce.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    ce.grad[i] = std::exp(logits[i] - mx);
    sum += ce.grad[i];
  }
  for (double& g : ce.grad) g /= sum;
  ce.loss = -(logits[target] - mx - std::log(sum));
  ce.grad[target] -= 1.0;
  return ce;
}

CrossEntropy cross_entropy(std::span<const double> logits, const Rotation& gt, const SO3Grid& grid) {
  check_grid(grid, logits.size());
  return cross_entropy(logits, nearest_index(grid, gt));
}

double log_likelihood(const PoseDistribution& dist, std::size_t cell) {
  const double n = static_cast<double>(dist.probs.size());
  return std::log(std::max(dist.probs.at(cell), kProbabilityFloor) * n / (std::numbers::pi * std::numbers::pi));
}

double log_likelihood(const PoseDistribution& dist, const Rotation& r) {
  if (!dist.grid) throw std::invalid_argument("distribution has no grid");
  return log_likelihood(dist, nearest_index(*dist.grid, r));
}

std::size_t argmax_index(const PoseDistribution& dist) {
  if (dist.probs.empty()) throw std::invalid_argument("empty distribution");
  return static_cast<std::size_t>(std::max_element(dist.probs.begin(), dist.probs.end()) - dist.probs.begin());
}

Rotation argmax_rotation(const PoseDistribution& dist) {
  if (!dist.grid) throw std::invalid_argument("distribution has no grid");
  return dist.grid->rotations[argmax_index(dist)];
}

void save_distribution(const PoseDistribution& dist, std::ostream& os) {
  if (!dist.grid) throw std::invalid_argument("distribution has no grid");
  io::write_magic(os, "PDST");
  io::write_u32(os, kDistributionVersion);
  io::write_u32(os, static_cast<std::uint32_t>(dist.grid->recursion));
  io::write_u64(os, dist.probs.size());
  for (double p : dist.probs) io::write_f32(os, static_cast<float>(p));
}

std::pair<int, std::vector<float>> load_distribution(std::istream& is) {
  io::expect_magic(is, "PDST");
  if (io::read_u32(is) != kDistributionVersion) throw std::runtime_error("unsupported distribution version");
  const int rec = static_cast<int>(io::read_u32(is));
  const std::uint64_t n = io::read_u64(is);
  if (rec < 0 || rec > kMaxSO3Recursion || n != (72ull << (3 * rec))) {
    throw std::runtime_error("distribution size does not match its grid");
  }
  std::vector<float> probs(n);
  for (float& p : probs) p = io::read_f32(is);
  return {rec, probs};
}

}  // namespace i2s
