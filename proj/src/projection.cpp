#include "i2s/projection.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace i2s {
namespace {

struct PixelCoord {
  int i0, i1;
  double t;
};

PixelCoord clamp_coord(double p, int n) {
  p = std::clamp(p, 0.0, static_cast<double>(n - 1));
  const int i0 = std::min(static_cast<int>(std::floor(p)), n - 1);
  const int i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, p - i0};
}

}  // namespace

FeatureMap::FeatureMap(int height_, int width_, int channels_)
    : height(height_), width(width_), channels(channels_) {
  if (height < 1 || width < 1 || channels < 1) throw std::invalid_argument("feature map dimensions must be positive");
  values.assign(static_cast<std::size_t>(height) * width * channels, 0.0);
}

double taper_weight(const Vec3& x, double rho0) {
  const double rho = std::hypot(x.x(), x.y());
  if (rho <= rho0) return 1.0;
  if (rho >= 1.0) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (rho - rho0) / (1.0 - rho0)));
}

std::vector<std::size_t> dropout_mask(std::mt19937_64& rng, std::size_t n_total, std::size_t n_keep) {
  if (n_keep > n_total) throw std::invalid_argument("cannot keep more points than the grid has");
  std::vector<std::size_t> idx(n_total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < n_keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n_keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double bilinear(const FeatureMap& fm, int channel, double x, double y) {
  const PixelCoord c = clamp_coord((x + 1.0) * 0.5 * fm.width - 0.5, fm.width);
  const PixelCoord r = clamp_coord((1.0 - y) * 0.5 * fm.height - 0.5, fm.height);
  const double top = (1.0 - c.t) * fm.at(channel, r.i0, c.i0) + c.t * fm.at(channel, r.i0, c.i1);
  const double bottom = (1.0 - c.t) * fm.at(channel, r.i1, c.i0) + c.t * fm.at(channel, r.i1, c.i1);
  return (1.0 - r.t) * top + r.t * bottom;
}

Projector::Projector(const ProjectionConfig& cfg, int height, int width, int band_limit)
    : cfg_(cfg), height_(height), width_(width), band_limit_(band_limit) {
  if (height < 2 || width < 2) throw std::invalid_argument("feature map must be at least 2x2");
  if (band_limit < 0 || band_limit > kMaxDegree) throw std::invalid_argument("projection band limit out of range");
  if (cfg.ridge < 0.0) throw std::invalid_argument("ridge must be nonnegative");
  if (!(cfg.taper_start >= 0.0 && cfg.taper_start < 1.0)) throw std::invalid_argument("taper start outside [0, 1)");
  hemi_ = hemisphere(healpix_s2(cfg.recursion));
  if (cfg.keep < 1 || static_cast<std::size_t>(cfg.keep) > hemi_.points.size()) {
    throw std::invalid_argument("projection keeps " + std::to_string(cfg.keep) + " of " +
                                std::to_string(hemi_.points.size()) + " hemisphere points");
  }
  const std::size_t n = hemi_.points.size();
  const std::size_t nc = s2_size(band_limit);
  harmonics_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nc));
  std::vector<double> y(nc);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = hemi_.points[i];
    const PixelCoord c = clamp_coord((p.x() + 1.0) * 0.5 * width - 0.5, width);
    const PixelCoord r = clamp_coord((1.0 - p.y()) * 0.5 * height - 0.5, height);
    Tap tap;
    tap.offset[0] = static_cast<std::size_t>(r.i0) * width + c.i0;
    tap.offset[1] = static_cast<std::size_t>(r.i0) * width + c.i1;
    tap.offset[2] = static_cast<std::size_t>(r.i1) * width + c.i0;
    tap.offset[3] = static_cast<std::size_t>(r.i1) * width + c.i1;
    tap.weight[0] = (1.0 - r.t) * (1.0 - c.t);
    tap.weight[1] = (1.0 - r.t) * c.t;
    tap.weight[2] = r.t * (1.0 - c.t);
    tap.weight[3] = r.t * c.t;
    taps_.push_back(tap);
    taper_.push_back(cfg.taper ? taper_weight(p, cfg.taper_start) : 1.0);
    sh_all(band_limit, p, y);
    for (std::size_t k = 0; k < nc; ++k) harmonics_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = y[k];
  }
  if (cfg.eval_keep_all) {
    eval_kept_.resize(n);
    std::iota(eval_kept_.begin(), eval_kept_.end(), std::size_t{0});
  } else {
    std::mt19937_64 rng(cfg.eval_seed);
    eval_kept_ = dropout_mask(rng, n, static_cast<std::size_t>(cfg.keep));
  }
  eval_fit_ = fit_matrix(eval_kept_);
}

std::vector<std::size_t> Projector::train_mask(std::mt19937_64& rng) const {
  return dropout_mask(rng, hemi_.points.size(), static_cast<std::size_t>(cfg_.keep));
}

std::vector<std::size_t> Projector::eval_mask() const { return eval_kept_; }

RowMatrix Projector::fit_matrix(const std::vector<std::size_t>& kept) const {
  const auto k = static_cast<Eigen::Index>(kept.size());
  const Eigen::Index nc = harmonics_.cols();
  RowMatrix a(k, nc);
  for (Eigen::Index j = 0; j < k; ++j) a.row(j) = harmonics_.row(static_cast<Eigen::Index>(kept[static_cast<std::size_t>(j)]));
  if (k <= nc) {
    // minimum-norm side: A^T (A A^T + lambda I)^-1
    Eigen::MatrixXd gram = a * a.transpose();
    gram.diagonal().array() += cfg_.ridge;
    return a.transpose() * gram.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += cfg_.ridge;
  return gram.ldlt().solve(Eigen::MatrixXd(a.transpose()));
}

double Projector::sample(const FeatureMap& fm, int channel, std::size_t i) const {
  const Tap& t = taps_[i];
  const double* plane = fm.values.data() + static_cast<std::size_t>(channel) * height_ * width_;
  double v = 0.0;
  for (int q = 0; q < 4; ++q) v += t.weight[q] * plane[t.offset[q]];
  return taper_[i] * v;
}

S2Coeffs Projector::project(const FeatureMap& fm, const std::vector<std::size_t>& kept, Cache* cache) const {
  if (fm.height != height_ || fm.width != width_) throw std::invalid_argument("feature map size does not match projector");
  const RowMatrix fit = kept == eval_kept_ ? eval_fit_ : fit_matrix(kept);
  S2Coeffs out(band_limit_, fm.channels);
  Eigen::VectorXd s(static_cast<Eigen::Index>(kept.size()));
  for (int c = 0; c < fm.channels; ++c) {
    for (std::size_t j = 0; j < kept.size(); ++j) s(static_cast<Eigen::Index>(j)) = sample(fm, c, kept[j]);
    Eigen::Map<Eigen::VectorXd>(out.channel(c).data(), static_cast<Eigen::Index>(out.per_channel())) = fit * s;
  }
  if (cache) {
    cache->kept = kept;
    cache->fit = fit;
  }
  return out;
}

void Projector::backward(const Cache& cache, const S2Coeffs& grad_coeffs, FeatureMap& grad_fm) const {
  if (grad_fm.height != height_ || grad_fm.width != width_ || grad_fm.channels != grad_coeffs.channels) {
    throw std::invalid_argument("gradient feature map shape mismatch");
  }
  for (int c = 0; c < grad_coeffs.channels; ++c) {
    const Eigen::Map<const Eigen::VectorXd> g(grad_coeffs.channel(c).data(), static_cast<Eigen::Index>(grad_coeffs.per_channel()));
    const Eigen::VectorXd ds = cache.fit.transpose() * g;
    double* plane = grad_fm.values.data() + static_cast<std::size_t>(c) * height_ * width_;
    for (std::size_t j = 0; j < cache.kept.size(); ++j) {
      const std::size_t i = cache.kept[j];
      const Tap& t = taps_[i];
      const double v = ds(static_cast<Eigen::Index>(j)) * taper_[i];
      for (int q = 0; q < 4; ++q) plane[t.offset[q]] += v * t.weight[q];
    }
  }
}

FourierProjection::FourierProjection(int band_limit_, int height_, int width_)
    : band_limit(band_limit_), height(height_), width(width_) {
  if (band_limit < 0 || band_limit > kMaxDegree || height < 1 || width < 1) {
    throw std::invalid_argument("invalid Fourier projection shape");
  }
  weights.assign(s2_size(band_limit) * static_cast<std::size_t>(height) * width, 0.0);
}

S2Coeffs FourierProjection::project(const FeatureMap& fm) const {
  if (fm.height != height || fm.width != width) throw std::invalid_argument("feature map size does not match projection");
  const auto hw = static_cast<Eigen::Index>(height) * width;
  const auto nc = static_cast<Eigen::Index>(s2_size(band_limit));
  const Eigen::Map<const RowMatrix> w(weights.data(), nc, hw);
  S2Coeffs out(band_limit, fm.channels);
  for (int c = 0; c < fm.channels; ++c) {
    const Eigen::Map<const Eigen::VectorXd> x(fm.values.data() + c * hw, hw);
    Eigen::Map<Eigen::VectorXd>(out.channel(c).data(), nc) = w * x;
  }
  return out;
}

void FourierProjection::backward(const FeatureMap& fm, const S2Coeffs& grad_coeffs, FeatureMap& grad_fm,
                                 std::span<double> grad_weights) const {
  const auto hw = static_cast<Eigen::Index>(height) * width;
  const auto nc = static_cast<Eigen::Index>(s2_size(band_limit));
  const Eigen::Map<const RowMatrix> w(weights.data(), nc, hw);
  Eigen::Map<RowMatrix> gw(grad_weights.data(), nc, hw);
  for (int c = 0; c < fm.channels; ++c) {
    const Eigen::Map<const Eigen::VectorXd> x(fm.values.data() + c * hw, hw);
    const Eigen::Map<const Eigen::VectorXd> g(grad_coeffs.channel(c).data(), nc);
    gw.noalias() += g * x.transpose();
    Eigen::Map<Eigen::VectorXd>(grad_fm.values.data() + c * hw, hw).noalias() += w.transpose() * g;
  }
}

void init_fourier_projection(FourierProjection& p, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(1.0 / (static_cast<double>(p.height) * p.width)));
  for (double& w : p.weights) w = n(rng);
}

}  // namespace i2s
