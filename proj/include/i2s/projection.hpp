#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"

namespace i2s {

/// Planar feature map, channel-major: values[(c * height + row) * width + col].
/// The image plane spans [-1, 1]^2 with +x to the right (increasing col) and
/// +y up (decreasing row); pixel centers sit at col = (x + 1) / 2 * width - 0.5.
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int height, int width, int channels);

  double& at(int c, int row, int col) { return values[(static_cast<std::size_t>(c) * height + row) * width + col]; }
  double at(int c, int row, int col) const { return values[(static_cast<std::size_t>(c) * height + row) * width + col]; }
};

struct ProjectionConfig {
  int recursion = 2;
  int keep = 20;
  bool taper = true;
  double taper_start = 0.8;  // radius where the cosine falloff begins
  double ridge = 1e-6;
  /// Evaluation uses all hemisphere points instead of the fixed-seed mask.
  bool eval_keep_all = false;
  std::uint64_t eval_seed = 0x5eed;
};

/// 1 for rho <= rho0, 0.5 (1 + cos(pi (rho - rho0) / (1 - rho0))) up to rho = 1.
double taper_weight(const Vec3& x, double rho0 = 0.8);

/// Sorted uniform sample of n_keep of n_total indices without replacement.
std::vector<std::size_t> dropout_mask(std::mt19937_64& rng, std::size_t n_total, std::size_t n_keep);

/// Bilinear interpolation with edge clamping at image-plane point (x, y).
double bilinear(const FeatureMap& fm, int channel, double x, double y);

/// Orthographic hemisphere projection followed by a ridge least-squares fit of
/// degree <= L harmonics to the retained samples. Precomputes everything that
/// depends only on (config, image size, L).
class Projector {
 public:
  struct Cache {
    std::vector<std::size_t> kept;   // hemisphere indices
    RowMatrix fit;                   // (L+1)^2 x kept: coeffs = fit * samples
  };

  Projector(const ProjectionConfig& cfg, int height, int width, int band_limit);

  const ProjectionConfig& config() const { return cfg_; }
  const S2Grid& points() const { return hemi_; }
  int band_limit() const { return band_limit_; }

  /// Training mask (random) or evaluation mask (fixed seed / all points).
  std::vector<std::size_t> train_mask(std::mt19937_64& rng) const;
  std::vector<std::size_t> eval_mask() const;

  /// Sample value at hemisphere point i: taper * bilinear(fm, c, x_i, y_i).
  double sample(const FeatureMap& fm, int channel, std::size_t i) const;

  S2Coeffs project(const FeatureMap& fm, const std::vector<std::size_t>& kept, Cache* cache = nullptr) const;

  /// dLoss/dfm accumulated into grad_fm (same shape as the input).
  void backward(const Cache& cache, const S2Coeffs& grad_coeffs, FeatureMap& grad_fm) const;

  /// Ridge fit operator for a given retained set.
  RowMatrix fit_matrix(const std::vector<std::size_t>& kept) const;

 private:
  struct Tap {
    std::size_t offset[4];
    double weight[4];
  };

  ProjectionConfig cfg_;
  int height_, width_, band_limit_;
  S2Grid hemi_;
  std::vector<Tap> taps_;
  std::vector<double> taper_;
  RowMatrix harmonics_;  // hemisphere points x (L+1)^2
  RowMatrix eval_fit_;
  std::vector<std::size_t> eval_kept_;
};

/// Alternative projection: a trainable linear map from each flattened
/// feature-map channel straight to (L+1)^2 harmonic coefficients, shared
/// across channels.
struct FourierProjection {
  int band_limit = 0;
  int height = 0;
  int width = 0;
  std::vector<double> weights;  // [(L+1)^2][height * width]

  FourierProjection() = default;
  FourierProjection(int band_limit, int height, int width);

  S2Coeffs project(const FeatureMap& fm) const;
  void backward(const FeatureMap& fm, const S2Coeffs& grad_coeffs, FeatureMap& grad_fm,
                std::span<double> grad_weights) const;
};

/// N(0, 1 / (height * width)).
void init_fourier_projection(FourierProjection& p, std::mt19937_64& rng);

}  // namespace i2s
