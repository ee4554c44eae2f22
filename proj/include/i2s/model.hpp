#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "i2s/equivariant.hpp"
#include "i2s/head.hpp"
#include "i2s/projection.hpp"

namespace i2s {

enum class ProjectionKind { Spatial, Fourier };

struct ModelConfig {
  int band_limit = 6;
  int image_height = 32;
  int image_width = 32;
  int image_channels = 3;
  int encoder_channels1 = 16;
  int encoder_channels2 = 32;
  int s2_channels = 8;
  int n_so3_convs = 1;
  double so3_support_deg = 22.5;
  int so3_filter_recursion = 3;
  int train_grid_recursion = 3;
  int relu_oversample = 2;
  ProjectionKind projection = ProjectionKind::Spatial;
  S2Filter::Mode s2_filter = S2Filter::Mode::Fourier;
  ProjectionConfig projection_config;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
  int feature_height() const;
  int feature_width() const;
};

/// Scalar count implied by the config, without building the model.
std::size_t expected_parameter_count(const ModelConfig& cfg);

/// 3x3 conv, stride 2, padding 1, on CHW tensors.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weight;  // [out][in][3][3]
  std::vector<double> bias;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels);
};

FeatureMap conv2d_forward(const Conv2d& conv, const FeatureMap& x);
/// Accumulates into grad_weight / grad_bias, and into grad_x when non-null.
void conv2d_backward(const Conv2d& conv, const FeatureMap& x, const FeatureMap& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, FeatureMap* grad_x);

/// Parameters in declaration order: conv1 weight, conv1 bias, conv2 weight,
/// conv2 bias, [fourier projection], s2 filter, so3 filters.
class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// Encoder: He-normal weights, zero biases. Spherical filters follow
  /// init_s2_filter / init_so3_filter, except the last layer, which starts at
  /// zero so the untrained model predicts the uniform distribution.
  void initialize(std::uint64_t seed);

  std::vector<std::string> parameter_names() const;
  std::vector<std::span<const double>> parameters() const;
  /// Mutable view; bumps version() so caches from earlier passes go stale.
  std::vector<std::span<double>> mutable_parameters();
  std::size_t parameter_count() const;
  std::uint64_t version() const { return version_; }

  const Conv2d& conv1() const { return conv1_; }
  const Conv2d& conv2() const { return conv2_; }
  const FourierProjection& fourier_projection() const { return fourier_; }
  const S2Filter& s2_filter() const { return s2_; }
  const std::vector<SO3Filter>& so3_filters() const { return so3_; }

 private:
  ModelConfig cfg_;
  Conv2d conv1_, conv2_;
  FourierProjection fourier_;
  S2Filter s2_;
  std::vector<SO3Filter> so3_;
  std::uint64_t version_ = 0;
};

/// Same layout as Model::parameters().
using Gradients = std::vector<std::vector<double>>;
Gradients zero_gradients(const Model& model);

struct ForwardCache {
  std::uint64_t model_version = 0;
  const SO3Grid* grid = nullptr;
  FeatureMap input, act1, act2;
  Projector::Cache projection;
  S2Coeffs sphere;
  std::vector<SO3Coeffs> so3_inputs;            // input of each SO(3) conv
  std::vector<std::vector<std::uint8_t>> relu_masks;
  SO3Coeffs output;
};

struct ForwardResult {
  std::vector<double> logits;
  ForwardCache cache;
};

/// Frozen per-step view of a model: filter coefficients and the projector are
/// derived once and shared by every sample of a batch.
class Network {
 public:
  explicit Network(const Model& model);

  const Model& model() const { return *model_; }
  const Projector& projector() const { return projector_; }

  /// image is HWC (the dataset layout). kept selects hemisphere points for the
  /// spatial projection and is ignored by the Fourier projection.
  ForwardResult forward(std::span<const float> image, const std::vector<std::size_t>& kept, const SO3Grid& grid) const;
  /// Logits only; no cache is kept.
  std::vector<double> logits(std::span<const float> image, const std::vector<std::size_t>& kept,
                             const SO3Grid& grid) const;

  /// Gradient accumulator in which filter gradients stay in coefficient form
  /// until finish().
  struct Accumulator {
    Gradients params;
    S2Coeffs s2_filter;
    std::vector<SO3Coeffs> so3_filters;
  };
  Accumulator make_accumulator() const;
  void backward(const ForwardCache& cache, std::span<const double> grad_logits, Accumulator& acc) const;
  /// Adds b into a.
  static void add(Accumulator& a, const Accumulator& b);
  Gradients finish(const Accumulator& acc) const;

 private:
  const Model* model_;
  std::uint64_t version_;
  Projector projector_;
  S2Coeffs s2_coeffs_;
  std::vector<SO3Coeffs> so3_coeffs_;
  int relu_band_limit_;
};

/// Single-sample convenience wrappers around Network.
ForwardResult forward(const Model& model, std::span<const float> image, const std::vector<std::size_t>& kept,
                      const SO3Grid& grid);
/// Throws std::logic_error when the cache predates a parameter change.
Gradients backward(const Model& model, const ForwardCache& cache, std::span<const double> grad_logits);

/// HWC float image to a CHW feature map.
FeatureMap image_to_feature_map(std::span<const float> image, int height, int width, int channels);

}  // namespace i2s
