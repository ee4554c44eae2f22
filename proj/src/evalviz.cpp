#include "i2s/evalviz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace i2s {
namespace {

using std::numbers::pi;

constexpr double kDeg = 180.0 / pi;
constexpr int kSvgWidth = 800;
constexpr int kSvgHeight = 420;
constexpr double kSvgScale = 180.0 / std::numbers::sqrt2;  // ellipse semi-axes 360 x 180 px
constexpr double kDotScale = 50.0;
constexpr double kRingRadius = 9.0;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double svg_x(double x) { return kSvgWidth / 2.0 + kSvgScale * x; }
double svg_y(double y) { return kSvgHeight / 2.0 - kSvgScale * y; }

nlohmann::ordered_json summary_json(const MetricSummary& s) {
  return {{"count", s.point.count},
          {"median_error_deg", s.point.median_error_deg},
          {"acc15", s.point.acc15},
          {"acc30", s.point.acc30},
          {"avg_log_likelihood", s.avg_log_likelihood}};
}

}  // namespace

double min_error(const Rotation& pred, std::span<const Rotation> labels) {
  if (labels.empty()) throw std::invalid_argument("empty label set");
  double best = INFINITY;
  for (const Rotation& l : labels) best = std::min(best, geodesic_distance(pred, l));
  return best;
}

PointMetrics point_metrics(std::span<const Rotation> predictions, std::span<const std::vector<Rotation>> labels) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("prediction and label counts differ");
  if (predictions.empty()) throw std::invalid_argument("point_metrics needs at least one sample");
  std::vector<double> err(predictions.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = min_error(predictions[i], labels[i]) * kDeg;
  PointMetrics m;
  m.count = err.size();
  std::size_t n15 = 0, n30 = 0;
  for (double e : err) {
    n15 += e <= 15.0 + 1e-9;
    n30 += e <= 30.0 + 1e-9;
  }
  m.acc15 = static_cast<double>(n15) / static_cast<double>(m.count);
  m.acc30 = static_cast<double>(n30) / static_cast<double>(m.count);
  std::sort(err.begin(), err.end());
  const std::size_t h = err.size() / 2;
  m.median_error_deg = err.size() % 2 ? err[h] : 0.5 * (err[h - 1] + err[h]);
  return m;
}

double sample_log_likelihood(const PoseDistribution& dist, std::span<const Rotation> equivalents) {
  if (equivalents.empty()) throw std::invalid_argument("sample has no equivalent rotations");
  double s = 0.0;
  for (const Rotation& r : equivalents) s += log_likelihood(dist, r);
  return s / static_cast<double>(equivalents.size());
}

std::size_t support_size(const PoseDistribution& dist, double factor) {
  const double t = factor / static_cast<double>(dist.probs.size());
  return static_cast<std::size_t>(std::count_if(dist.probs.begin(), dist.probs.end(), [t](double p) { return p > t; }));
}

EvalResult evaluate(const Model& model, const Dataset& data, int grid_recursion, int threads) {
  if (data.samples.empty()) throw std::invalid_argument("evaluation set is empty");
  for (const Sample& s : data.samples) {
    if (s.equivalents.empty()) throw std::invalid_argument("evaluation needs a test split with equivalent sets");
  }
  const SO3Grid& grid = cached_so3_grid(grid_recursion);
  const Network net(model);
  const auto kept = net.projector().eval_mask();
  EvalResult res;
  res.samples.resize(data.samples.size());
  const std::size_t t = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, data.samples.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < data.samples.size(); i += t) {
      const Sample& s = data.samples[i];
      const PoseDistribution dist = softmax_distribution(net.logits(s.image, kept, grid), grid);
      SampleEval& e = res.samples[i];
      e.prediction = argmax_rotation(dist);
      e.error_deg = min_error(e.prediction, s.equivalents) * kDeg;
      e.log_likelihood = sample_log_likelihood(dist, s.equivalents);
      e.support = support_size(dist);
      e.marker_visible = s.marker_visible;
    }
  };
  if (t == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t);
    for (std::size_t k = 0; k < t; ++k) {
      pool.emplace_back([&, k] {
        try {
          work(k);
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
  std::vector<Rotation> preds;
  std::vector<std::vector<Rotation>> labels;
  double ll = 0.0;
  for (std::size_t i = 0; i < res.samples.size(); ++i) {
    preds.push_back(res.samples[i].prediction);
    labels.push_back(data.samples[i].equivalents);
    ll += res.samples[i].log_likelihood;
  }
  res.summary.point = point_metrics(preds, labels);
  res.summary.avg_log_likelihood = ll / static_cast<double>(res.samples.size());
  return res;
}

double avg_log_likelihood(const Model& model, const Dataset& data, int grid_recursion, int threads) {
  return evaluate(model, data, grid_recursion, threads).summary.avg_log_likelihood;
}

EvalReport make_report(const std::map<std::string, EvalResult>& results, int grid_recursion,
                       const std::string& config_json) {
  if (results.empty()) throw std::invalid_argument("no evaluation results");
  EvalReport r;
  r.config_json = config_json;
  r.grid_recursion = grid_recursion;
  std::vector<double> errors;
  double ll = 0.0;
  std::size_t n15 = 0, n30 = 0;
  for (const auto& [name, res] : results) {
    r.per_shape[name] = res.summary;
    for (const SampleEval& s : res.samples) {
      errors.push_back(s.error_deg);
      ll += s.log_likelihood;
      n15 += s.error_deg <= 15.0 + 1e-9;
      n30 += s.error_deg <= 30.0 + 1e-9;
    }
  }
  const double n = static_cast<double>(errors.size());
  std::sort(errors.begin(), errors.end());
  const std::size_t h = errors.size() / 2;
  r.aggregate.point.count = errors.size();
  r.aggregate.point.median_error_deg = errors.size() % 2 ? errors[h] : 0.5 * (errors[h - 1] + errors[h]);
  r.aggregate.point.acc15 = static_cast<double>(n15) / n;
  r.aggregate.point.acc30 = static_cast<double>(n30) / n;
  r.aggregate.avg_log_likelihood = ll / n;
  return r;
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["config"] = nlohmann::ordered_json::parse(report.config_json);
  j["grid_recursion"] = report.grid_recursion;
  j["per_shape"] = nlohmann::ordered_json::object();
  for (const auto& [name, s] : report.per_shape) j["per_shape"][name] = summary_json(s);
  j["aggregate"] = summary_json(report.aggregate);
  return j.dump(2) + "\n";
}

PlanePoint mollweide(double longitude, double latitude) {
  // 2t + sin 2t = pi sin(lat), Newton from t = lat
  double t = latitude;
  const double target = pi * std::sin(latitude);
  if (std::abs(std::abs(latitude) - pi / 2) < 1e-12) {
    t = latitude;
  } else {
    for (int it = 0; it < 50; ++it) {
      const double f = 2 * t + std::sin(2 * t) - target;
      const double df = 2 + 2 * std::cos(2 * t);
      if (df < 1e-15) break;
      const double step = f / df;
      t -= step;
      if (std::abs(step) < 1e-14) break;
    }
  }
  return {2.0 * std::numbers::sqrt2 / pi * longitude * std::cos(t), std::numbers::sqrt2 * std::sin(t)};
}

RotationPlot plot_coordinates(const Rotation& r) {
  const EulerXYX e = to_euler_xyx(r);
  RotationPlot p;
  p.position = mollweide(e.alpha, pi / 2 - e.beta);
  p.hue = std::fmod(0.5 + e.gamma / (2 * pi) + 1.0, 1.0);
  return p;
}

std::string hue_color(double hue) {
  const double h = std::fmod(std::fmod(hue, 1.0) + 1.0, 1.0) * 6.0;
  const int sector = std::min(static_cast<int>(h), 5);
  const double f = h - sector;
  double r = 0, g = 0, b = 0;
  switch (sector) {
    case 0: r = 1; g = f; break;
    case 1: r = 1 - f; g = 1; break;
    case 2: g = 1; b = f; break;
    case 3: g = 1 - f; b = 1; break;
    case 4: r = f; b = 1; break;
    default: r = 1; b = 1 - f; break;
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

std::string mollweide_svg(const PoseDistribution& dist, std::span<const Rotation> ground_truth, double threshold,
                          SvgStats* stats) {
  if (!dist.grid || dist.grid->rotations.size() != dist.probs.size()) {
    throw std::invalid_argument("distribution does not match its grid");
  }
  if (threshold < 0.0) threshold = 4.0 / static_cast<double>(dist.probs.size());
  SvgStats st;
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + std::to_string(kSvgWidth) +
       "\" height=\"" + std::to_string(kSvgHeight) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<g id=\"axes\" fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"0.6\">\n";
  for (int lat = -60; lat <= 60; lat += 30) {
    const PlanePoint a = mollweide(-pi, lat * pi / 180), b = mollweide(pi, lat * pi / 180);
    s += "<line x1=\"" + fmt(svg_x(a.x)) + "\" y1=\"" + fmt(svg_y(a.y)) + "\" x2=\"" + fmt(svg_x(b.x)) + "\" y2=\"" +
         fmt(svg_y(b.y)) + "\"/>\n";
  }
  for (int lon = -150; lon <= 150; lon += 30) {
    s += "<polyline points=\"";
    for (int lat = -90; lat <= 90; lat += 5) {
      const PlanePoint p = mollweide(lon * pi / 180, lat * pi / 180);
      s += fmt(svg_x(p.x)) + "," + fmt(svg_y(p.y)) + (lat < 90 ? " " : "");
    }
    s += "\"/>\n";
  }
  s += "<ellipse cx=\"" + fmt(kSvgWidth / 2.0) + "\" cy=\"" + fmt(kSvgHeight / 2.0) + "\" rx=\"" +
       fmt(2 * std::numbers::sqrt2 * kSvgScale) + "\" ry=\"" + fmt(std::numbers::sqrt2 * kSvgScale) +
       "\" stroke=\"black\" stroke-width=\"1\"/>\n</g>\n";
  s += "<g id=\"probabilities\" stroke=\"none\">\n";
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (!(dist.probs[i] > threshold)) continue;
    const RotationPlot p = plot_coordinates(dist.grid->rotations[i]);
    s += "<circle cx=\"" + fmt(svg_x(p.position.x)) + "\" cy=\"" + fmt(svg_y(p.position.y)) + "\" r=\"" +
         fmt(kDotScale * std::sqrt(dist.probs[i])) + "\" fill=\"" + hue_color(p.hue) + "\"/>\n";
    ++st.dots;
  }
  s += "</g>\n<g id=\"ground_truth\" fill=\"none\" stroke-width=\"2\">\n";
  for (const Rotation& r : ground_truth) {
    const RotationPlot p = plot_coordinates(r);
    s += "<circle cx=\"" + fmt(svg_x(p.position.x)) + "\" cy=\"" + fmt(svg_y(p.position.y)) + "\" r=\"" +
         fmt(kRingRadius) + "\" stroke=\"" + hue_color(p.hue) + "\"/>\n";
    ++st.rings;
  }
  s += "</g>\n</svg>\n";
  if (stats) *stats = st;
  return s;
}

SvgStats render_mollweide(const PoseDistribution& dist, std::span<const Rotation> ground_truth, double threshold,
                          const std::string& path) {
  SvgStats st;
  const std::string svg = mollweide_svg(dist, ground_truth, threshold, &st);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << svg;
  if (!os) throw std::runtime_error("failed writing " + path);
  return st;
}

}  // namespace i2s
