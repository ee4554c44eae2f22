#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"

namespace i2s {

/// Categorical distribution over the cells of an SO(3) grid.
struct PoseDistribution {
  const SO3Grid* grid = nullptr;
  std::vector<double> probs;
};

constexpr double kProbabilityFloor = 1e-12;

/// logits[i] = f(grid rotation i) for a single-channel signal.
std::vector<double> query_logits(const SO3Coeffs& signal, const SO3Grid& grid);
/// Transpose of query_logits.
SO3Coeffs query_logits_backward(std::span<const double> grad_logits, const SO3Grid& grid, int band_limit);

/// Softmax with the maximum subtracted first.
PoseDistribution softmax_distribution(std::span<const double> logits, const SO3Grid& grid);

struct CrossEntropy {
  double loss = 0.0;
  std::size_t target = 0;
  std::vector<double> grad;  // softmax - onehot(target)
};

/// The target cell is nearest_index(grid, gt).
CrossEntropy cross_entropy(std::span<const double> logits, const Rotation& gt, const SO3Grid& grid);
CrossEntropy cross_entropy(std::span<const double> logits, std::size_t target);

/// log(max(p, floor) * N / pi^2): the density of the cell holding r with
/// respect to the Haar measure of total volume pi^2.
double log_likelihood(const PoseDistribution& dist, const Rotation& r);
double log_likelihood(const PoseDistribution& dist, std::size_t cell);

/// Most probable cell; ties go to the lowest index.
std::size_t argmax_index(const PoseDistribution& dist);
Rotation argmax_rotation(const PoseDistribution& dist);

/// Blob: magic "PDST", version u32, grid recursion u32, count u64, float32 probs.
void save_distribution(const PoseDistribution& dist, std::ostream& os);
/// Returns (recursion, probs).
std::pair<int, std::vector<float>> load_distribution(std::istream& is);

}  // namespace i2s
