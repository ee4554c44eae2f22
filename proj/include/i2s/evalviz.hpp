#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "i2s/head.hpp"
#include "i2s/model.hpp"
#include "i2s/symsol.hpp"

namespace i2s {

struct PointMetrics {
  std::size_t count = 0;
  double median_error_deg = 0.0;
  double acc15 = 0.0;
  double acc30 = 0.0;
};

/// Smallest geodesic distance (radians) from pred to any label.
double min_error(const Rotation& pred, std::span<const Rotation> labels);

/// Per-sample error is min_error; the median of an even count is the mean of
/// the two middle values.
PointMetrics point_metrics(std::span<const Rotation> predictions, std::span<const std::vector<Rotation>> labels);

/// Mean over the equivalent rotations of log_likelihood.
double sample_log_likelihood(const PoseDistribution& dist, std::span<const Rotation> equivalents);

/// Cells with probability above factor / N.
std::size_t support_size(const PoseDistribution& dist, double factor = 4.0);

struct MetricSummary {
  PointMetrics point;
  double avg_log_likelihood = 0.0;
};

struct SampleEval {
  Rotation prediction;
  double error_deg = 0.0;
  double log_likelihood = 0.0;
  std::size_t support = 0;
  bool marker_visible = false;
};

struct EvalResult {
  MetricSummary summary;
  std::vector<SampleEval> samples;
};

/// Runs the model with the evaluation mask on every sample of a test split
/// and queries the recursion-`grid_recursion` grid.
EvalResult evaluate(const Model& model, const Dataset& data, int grid_recursion, int threads = 1);

/// Average log-likelihood in nats; throws std::invalid_argument when the
/// split carries no equivalent sets.
double avg_log_likelihood(const Model& model, const Dataset& data, int grid_recursion, int threads = 1);

struct EvalReport {
  std::string config_json = "{}";
  int grid_recursion = 0;
  std::map<std::string, MetricSummary> per_shape;
  MetricSummary aggregate;
};

/// Aggregate over several per-shape results, weighting shapes by sample count.
EvalReport make_report(const std::map<std::string, EvalResult>& results, int grid_recursion,
                       const std::string& config_json);
std::string report_json(const EvalReport& report);

/// Mollweide projection of (longitude, latitude) in radians onto the ellipse
/// with semi-axes 2 sqrt(2) and sqrt(2) (unit sphere, equal area).
struct PlanePoint {
  double x = 0.0;
  double y = 0.0;
};
PlanePoint mollweide(double longitude, double latitude);

/// Plot coordinates of a rotation: XYX angles give longitude alpha and
/// latitude pi/2 - beta; gamma picks the hue 0.5 + gamma / 2pi on the HSV wheel.
struct RotationPlot {
  PlanePoint position;
  double hue = 0.0;
};
RotationPlot plot_coordinates(const Rotation& r);

/// RGB hex string ("#rrggbb") for hue in [0, 1) at full saturation and value.
std::string hue_color(double hue);

/// Threshold < 0 selects the default of 4x the uniform cell probability.
/// Dot radius is 50 sqrt(p) pixels, so dot area is proportional to p.
struct SvgStats {
  std::size_t dots = 0;
  std::size_t rings = 0;
};
std::string mollweide_svg(const PoseDistribution& dist, std::span<const Rotation> ground_truth, double threshold,
                          SvgStats* stats = nullptr);
SvgStats render_mollweide(const PoseDistribution& dist, std::span<const Rotation> ground_truth, double threshold,
                          const std::string& path);

}  // namespace i2s
