#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"

namespace i2s {

/// Globally supported S^2 filter bank, C_in x C_out filters. Filter (c, o) is
/// channel c * C_out + o of the derived coefficients.
struct S2Filter {
  enum class Mode { Fourier, Spatial };

  Mode mode = Mode::Fourier;
  int band_limit = 0;
  int in_channels = 0;
  int out_channels = 0;
  /// Fourier: S2Coeffs data. Spatial: values on the full HEALPix grid of
  /// spatial_filter_grid(), laid out [filter][point].
  std::vector<double> params;

  S2Filter() = default;
  S2Filter(Mode mode, int band_limit, int in_channels, int out_channels);

  std::size_t filters() const { return static_cast<std::size_t>(in_channels) * out_channels; }
};

/// HEALPix recursion-2 grid carrying spatial-mode S^2 filters.
const S2Grid& spatial_filter_grid();

S2Coeffs s2_filter_coeffs(const S2Filter& filter);
/// Accumulates dLoss/dparams given dLoss/dcoeffs.
void s2_filter_coeffs_backward(const S2Filter& filter, const S2Coeffs& grad_coeffs, std::span<double> grad_params);

/// N(0, 1 / (C_in (L+1)^2)) for Fourier coefficients; spatial samples use the
/// variance that gives the same coefficient variance.
void init_s2_filter(S2Filter& filter, std::mt19937_64& rng);

/// Locally supported SO(3) filter bank: one value per support rotation per
/// (c, o) pair. Support rotations are SO(3) grid points within
/// support_angle of the identity; everything outside is zero.
struct SO3Filter {
  int band_limit = 0;
  int in_channels = 0;
  int out_channels = 0;
  double support_angle = 0.0;
  int grid_recursion = 0;
  std::vector<Rotation> support;
  std::vector<double> values;  // [(c * C_out + o) * support.size() + i]

  SO3Filter() = default;
  SO3Filter(int band_limit, int in_channels, int out_channels, double support_angle, int grid_recursion = 3);

  std::size_t filters() const { return static_cast<std::size_t>(in_channels) * out_channels; }

 private:
  friend SO3Coeffs so3_filter_coeffs(const SO3Filter&);
  friend void so3_filter_coeffs_backward(const SO3Filter&, const SO3Coeffs&, std::span<double>);
  std::vector<double> wigner_;       // [support][so3_size(L)]
};

/// Psi^l = (2l+1)/pi^2 * sum_i s_i D^l(g_i): each sample is a point mass, so
/// so3_conv computes sum_i s_i f(g g_i) up to the band limit.
SO3Coeffs so3_filter_coeffs(const SO3Filter& filter);
void so3_filter_coeffs_backward(const SO3Filter& filter, const SO3Coeffs& grad_coeffs, std::span<double> grad_values);

/// N(0, 1 / (C_in |support|)).
void init_so3_filter(SO3Filter& filter, std::mt19937_64& rng);

/// [psi * f](g) = integral f(x) psi(g^-1 x) dx. Per degree the output block is
/// sum_c f^l_c (psi^l_{c,o})^T.
SO3Coeffs s2_conv(const S2Coeffs& signal, const S2Coeffs& filter, int out_channels);
void s2_conv_backward(const S2Coeffs& signal, const S2Coeffs& filter, const SO3Coeffs& grad_out,
                      S2Coeffs* grad_signal, S2Coeffs* grad_filter);

/// [psi * f](g) = integral f(h) psi(g^-1 h) dh. Per degree the output block is
/// sum_c pi^2/(2l+1) F^l_c (Psi^l_{c,o})^T, so the delta filter
/// Psi^l = (2l+1)/pi^2 I reproduces its input.
SO3Coeffs so3_conv(const SO3Coeffs& signal, const SO3Coeffs& filter, int out_channels);
void so3_conv_backward(const SO3Coeffs& signal, const SO3Coeffs& filter, const SO3Coeffs& grad_out,
                       SO3Coeffs* grad_signal, SO3Coeffs* grad_filter);

/// so3_fft(max(0, so3_ifft(signal))) on the quadrature grid of band limit
/// quad.band_limit (use 2L). `mask` receives the active sample pattern.
SO3Coeffs spatial_relu(const SO3Coeffs& signal, const QuadratureGrid& quad, std::vector<std::uint8_t>* mask = nullptr);
SO3Coeffs spatial_relu(const SO3Coeffs& signal, int quad_band_limit, std::vector<std::uint8_t>* mask = nullptr);
SO3Coeffs spatial_relu_backward(const SO3Coeffs& grad_out, int quad_band_limit, const std::vector<std::uint8_t>& mask);

/// Coefficients of x -> f(g^-1 x) (resp. h -> f(g^-1 h)).
S2Coeffs rotate_signal(const S2Coeffs& coeffs, const Rotation& g);
SO3Coeffs rotate_signal(const SO3Coeffs& coeffs, const Rotation& g);

}  // namespace i2s
