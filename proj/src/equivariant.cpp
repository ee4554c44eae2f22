#include "i2s/equivariant.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "i2s/so3_sampler.hpp"

namespace i2s {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSpatialFilterRecursion = 2;

void check_shapes(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("shape mismatch in ") + what);
}

}  // namespace

S2Filter::S2Filter(Mode mode_, int band_limit_, int in_channels_, int out_channels_)
    : mode(mode_), band_limit(band_limit_), in_channels(in_channels_), out_channels(out_channels_) {
  if (band_limit < 0 || band_limit > kMaxDegree || in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("invalid S2 filter shape");
  }
  const std::size_t per = mode == Mode::Fourier ? s2_size(band_limit) : spatial_filter_grid().points.size();
  params.assign(filters() * per, 0.0);
}

const S2Grid& spatial_filter_grid() {
  static const S2Grid grid = healpix_s2(kSpatialFilterRecursion);
  return grid;
}

S2Coeffs s2_filter_coeffs(const S2Filter& filter) {
  const int nf = static_cast<int>(filter.filters());
  if (filter.mode == S2Filter::Mode::Fourier) {
    S2Coeffs c(filter.band_limit, nf);
    check_shapes(c.data.size() == filter.params.size(), "s2_filter_coeffs");
    c.data = filter.params;
    return c;
  }
  const S2Grid& grid = spatial_filter_grid();
  const std::size_t n = grid.points.size();
  check_shapes(filter.params.size() == n * static_cast<std::size_t>(nf), "s2_filter_coeffs");
  S2Coeffs c(filter.band_limit, nf);
  std::vector<double> y(s2_size(filter.band_limit));
  for (std::size_t i = 0; i < n; ++i) {
    sh_all(filter.band_limit, grid.points[i], y);
    for (int f = 0; f < nf; ++f) {
      const double v = grid.cell_area * filter.params[static_cast<std::size_t>(f) * n + i];
      auto dst = c.channel(f);
      for (std::size_t k = 0; k < y.size(); ++k) dst[k] += v * y[k];
    }
  }
  return c;
}

void s2_filter_coeffs_backward(const S2Filter& filter, const S2Coeffs& grad_coeffs, std::span<double> grad_params) {
  check_shapes(grad_params.size() == filter.params.size(), "s2_filter_coeffs_backward");
  const int nf = static_cast<int>(filter.filters());
  if (filter.mode == S2Filter::Mode::Fourier) {
    for (std::size_t k = 0; k < grad_params.size(); ++k) grad_params[k] += grad_coeffs.data[k];
    return;
  }
  const S2Grid& grid = spatial_filter_grid();
  const std::size_t n = grid.points.size();
  std::vector<double> y(s2_size(filter.band_limit));
  for (std::size_t i = 0; i < n; ++i) {
    sh_all(filter.band_limit, grid.points[i], y);
    for (int f = 0; f < nf; ++f) {
      const auto g = grad_coeffs.channel(f);
      double acc = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) acc += g[k] * y[k];
      grad_params[static_cast<std::size_t>(f) * n + i] += grid.cell_area * acc;
    }
  }
}

void init_s2_filter(S2Filter& filter, std::mt19937_64& rng) {
  const double coeff_var = 1.0 / (filter.in_channels * static_cast<double>(s2_size(filter.band_limit)));
  double var = coeff_var;
  if (filter.mode == S2Filter::Mode::Spatial) {
    // each coefficient is cell_area * sum_i v_i Y(x_i), whose variance is about
    // cell_area * var(v) since sum_i Y(x_i)^2 ~ 1 / cell_area
    var = coeff_var / spatial_filter_grid().cell_area;
  }
  std::normal_distribution<double> n(0.0, std::sqrt(var));
  for (double& p : filter.params) p = n(rng);
}

SO3Filter::SO3Filter(int band_limit_, int in_channels_, int out_channels_, double support_angle_, int grid_recursion_)
    : band_limit(band_limit_),
      in_channels(in_channels_),
      out_channels(out_channels_),
      support_angle(support_angle_),
      grid_recursion(grid_recursion_) {
  if (band_limit < 0 || band_limit > kMaxDegree || in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("invalid SO3 filter shape");
  }
  if (!(support_angle > 0.0) || support_angle > kPi) throw std::invalid_argument("support angle outside (0, pi]");
  const SO3Grid& grid = cached_so3_grid(grid_recursion);
  for (const Rotation& r : grid.rotations) {
    if (r.angle() <= support_angle + 1e-12) support.push_back(r);
  }
  const std::size_t per = so3_size(band_limit);
  wigner_.resize(support.size() * per);
  for (std::size_t i = 0; i < support.size(); ++i) {
    wigner_D_all(band_limit, support[i], std::span<double>(wigner_.data() + i * per, per));
  }
  values.assign(filters() * support.size(), 0.0);
}

SO3Coeffs so3_filter_coeffs(const SO3Filter& filter) {
  const int nf = static_cast<int>(filter.filters());
  const std::size_t ns = filter.support.size();
  const std::size_t per = so3_size(filter.band_limit);
  check_shapes(filter.values.size() == ns * static_cast<std::size_t>(nf), "so3_filter_coeffs");
  SO3Coeffs c(filter.band_limit, nf);
  for (int f = 0; f < nf; ++f) {
    auto dst = c.channel(f);
    for (std::size_t i = 0; i < ns; ++i) {
      const double v = filter.values[static_cast<std::size_t>(f) * ns + i];
      const double* d = filter.wigner_.data() + i * per;
      for (std::size_t k = 0; k < per; ++k) dst[k] += v * d[k];
    }
    for (int l = 0; l <= filter.band_limit; ++l) {
      c.block(f, l) *= (2.0 * l + 1.0) / (kPi * kPi);
    }
  }
  return c;
}

void so3_filter_coeffs_backward(const SO3Filter& filter, const SO3Coeffs& grad_coeffs, std::span<double> grad_values) {
  check_shapes(grad_values.size() == filter.values.size(), "so3_filter_coeffs_backward");
  const int nf = static_cast<int>(filter.filters());
  const std::size_t ns = filter.support.size();
  const std::size_t per = so3_size(filter.band_limit);
  std::vector<double> scaled(per);
  for (int f = 0; f < nf; ++f) {
    const auto g = grad_coeffs.channel(f);
    for (int l = 0; l <= filter.band_limit; ++l) {
      const double s = (2.0 * l + 1.0) / (kPi * kPi);
      for (std::size_t k = so3_block_offset(l); k < so3_block_offset(l + 1); ++k) scaled[k] = s * g[k];
    }
    for (std::size_t i = 0; i < ns; ++i) {
      const double* d = filter.wigner_.data() + i * per;
      double acc = 0.0;
      for (std::size_t k = 0; k < per; ++k) acc += scaled[k] * d[k];
      grad_values[static_cast<std::size_t>(f) * ns + i] += acc;
    }
  }
}

void init_so3_filter(SO3Filter& filter, std::mt19937_64& rng) {
  const double var = 1.0 / (filter.in_channels * static_cast<double>(filter.support.size()));
  std::normal_distribution<double> n(0.0, std::sqrt(var));
  for (double& v : filter.values) v = n(rng);
}

SO3Coeffs s2_conv(const S2Coeffs& signal, const S2Coeffs& filter, int out_channels) {
  check_shapes(signal.band_limit == filter.band_limit && filter.channels == signal.channels * out_channels, "s2_conv");
  const int L = signal.band_limit;
  SO3Coeffs out(L, out_channels);
  for (int o = 0; o < out_channels; ++o) {
    for (int c = 0; c < signal.channels; ++c) {
      const auto f = signal.channel(c);
      const auto psi = filter.channel(c * out_channels + o);
      for (int l = 0; l <= L; ++l) {
        const std::size_t base = s2_index(l, -l);
        const Eigen::Map<const Eigen::VectorXd> fv(f.data() + base, 2 * l + 1);
        const Eigen::Map<const Eigen::VectorXd> pv(psi.data() + base, 2 * l + 1);
        out.block(o, l).noalias() += fv * pv.transpose();
      }
    }
  }
  return out;
}

void s2_conv_backward(const S2Coeffs& signal, const S2Coeffs& filter, const SO3Coeffs& grad_out,
                      S2Coeffs* grad_signal, S2Coeffs* grad_filter) {
  const int out_channels = grad_out.channels;
  check_shapes(filter.channels == signal.channels * out_channels && grad_out.band_limit == signal.band_limit,
               "s2_conv_backward");
  const int L = signal.band_limit;
  if (grad_signal) *grad_signal = S2Coeffs(L, signal.channels);
  if (grad_filter) *grad_filter = S2Coeffs(L, filter.channels);
  for (int o = 0; o < out_channels; ++o) {
    for (int c = 0; c < signal.channels; ++c) {
      for (int l = 0; l <= L; ++l) {
        const std::size_t base = s2_index(l, -l);
        const int n = 2 * l + 1;
        const ConstBlockMap g = grad_out.block(o, l);
        if (grad_signal) {
          const Eigen::Map<const Eigen::VectorXd> pv(filter.channel(c * out_channels + o).data() + base, n);
          Eigen::Map<Eigen::VectorXd>(grad_signal->channel(c).data() + base, n).noalias() += g * pv;
        }
        if (grad_filter) {
          const Eigen::Map<const Eigen::VectorXd> fv(signal.channel(c).data() + base, n);
          Eigen::Map<Eigen::VectorXd>(grad_filter->channel(c * out_channels + o).data() + base, n).noalias() +=
              g.transpose() * fv;
        }
      }
    }
  }
}

SO3Coeffs so3_conv(const SO3Coeffs& signal, const SO3Coeffs& filter, int out_channels) {
  check_shapes(signal.band_limit == filter.band_limit && filter.channels == signal.channels * out_channels, "so3_conv");
  const int L = signal.band_limit;
  SO3Coeffs out(L, out_channels);
  for (int o = 0; o < out_channels; ++o) {
    for (int c = 0; c < signal.channels; ++c) {
      for (int l = 0; l <= L; ++l) {
        out.block(o, l).noalias() +=
            (kPi * kPi / (2.0 * l + 1.0)) * signal.block(c, l) * filter.block(c * out_channels + o, l).transpose();
      }
    }
  }
  return out;
}

void so3_conv_backward(const SO3Coeffs& signal, const SO3Coeffs& filter, const SO3Coeffs& grad_out,
                       SO3Coeffs* grad_signal, SO3Coeffs* grad_filter) {
  const int out_channels = grad_out.channels;
  check_shapes(filter.channels == signal.channels * out_channels && grad_out.band_limit == signal.band_limit,
               "so3_conv_backward");
  const int L = signal.band_limit;
  if (grad_signal) *grad_signal = SO3Coeffs(L, signal.channels);
  if (grad_filter) *grad_filter = SO3Coeffs(L, filter.channels);
  for (int o = 0; o < out_channels; ++o) {
    for (int c = 0; c < signal.channels; ++c) {
      for (int l = 0; l <= L; ++l) {
        const double s = kPi * kPi / (2.0 * l + 1.0);
        const ConstBlockMap g = grad_out.block(o, l);
        if (grad_signal) grad_signal->block(c, l).noalias() += s * g * filter.block(c * out_channels + o, l);
        if (grad_filter) {
          grad_filter->block(c * out_channels + o, l).noalias() += s * g.transpose() * signal.block(c, l);
        }
      }
    }
  }
}

SO3Coeffs spatial_relu(const SO3Coeffs& signal, const QuadratureGrid& quad, std::vector<std::uint8_t>* mask) {
  if (quad.kind != QuadratureGrid::Kind::SO3) throw std::invalid_argument("spatial_relu needs an SO3 quadrature grid");
  return spatial_relu(signal, quad.band_limit, mask);
}

namespace {

const std::vector<double>& quadrature_weights(int band_limit) {
  static std::mutex mu;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard lock(mu);
  auto& w = cache[band_limit];
  if (w.empty()) w = quadrature_so3(band_limit).weights;
  return w;
}

void scale_degrees(SO3Coeffs& c) {
  for (int ch = 0; ch < c.channels; ++ch) {
    for (int l = 0; l <= c.band_limit; ++l) c.block(ch, l) *= (2.0 * l + 1.0) / (kPi * kPi);
  }
}

}  // namespace

SO3Coeffs spatial_relu(const SO3Coeffs& signal, int quad_band_limit, std::vector<std::uint8_t>* mask) {
  if (quad_band_limit < signal.band_limit) throw std::invalid_argument("ReLU quadrature below signal band limit");
  const auto sampler = quadrature_sampler(quad_band_limit, signal.band_limit);
  const std::vector<double>& w = quadrature_weights(quad_band_limit);
  std::vector<double> v = sampler->synthesize(signal);
  const std::size_t n = sampler->size();
  if (mask) mask->assign(v.size(), 0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      if (mask) (*mask)[i] = 1;
      v[i] *= w[i % n];
    } else {
      v[i] = 0.0;
    }
  }
  SO3Coeffs out = sampler->adjoint(v, signal.channels);
  scale_degrees(out);
  return out;
}

SO3Coeffs spatial_relu_backward(const SO3Coeffs& grad_out, int quad_band_limit, const std::vector<std::uint8_t>& mask) {
  const auto sampler = quadrature_sampler(quad_band_limit, grad_out.band_limit);
  const std::vector<double>& w = quadrature_weights(quad_band_limit);
  SO3Coeffs g = grad_out;
  scale_degrees(g);
  std::vector<double> u = sampler->synthesize(g);
  check_shapes(u.size() == mask.size(), "spatial_relu_backward");
  const std::size_t n = sampler->size();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = mask[i] ? u[i] * w[i % n] : 0.0;
  return sampler->adjoint(u, grad_out.channels);
}

S2Coeffs rotate_signal(const S2Coeffs& coeffs, const Rotation& g) {
  S2Coeffs out = coeffs;
  for (int l = 0; l <= coeffs.band_limit; ++l) {
    const RowMatrix d = wigner_D(l, g);
    const std::size_t base = s2_index(l, -l);
    for (int c = 0; c < coeffs.channels; ++c) {
      const Eigen::Map<const Eigen::VectorXd> src(coeffs.channel(c).data() + base, 2 * l + 1);
      Eigen::Map<Eigen::VectorXd>(out.channel(c).data() + base, 2 * l + 1) = d * src;
    }
  }
  return out;
}

SO3Coeffs rotate_signal(const SO3Coeffs& coeffs, const Rotation& g) {
  SO3Coeffs out = coeffs;
  for (int l = 0; l <= coeffs.band_limit; ++l) {
    const RowMatrix d = wigner_D(l, g);
    for (int c = 0; c < coeffs.channels; ++c) out.block(c, l) = d * coeffs.block(c, l);
  }
  return out;
}

}  // namespace i2s
