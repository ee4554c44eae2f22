#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "i2s/grids.hpp"
#include "i2s/rotation.hpp"

namespace i2s {

/// Highest Wigner degree (and signal band limit) supported.
constexpr int kMaxDegree = 16;
/// Highest degree sh() evaluates; quadrature checks integrate products.
constexpr int kMaxShDegree = 64;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using BlockMap = Eigen::Map<RowMatrix>;
using ConstBlockMap = Eigen::Map<const RowMatrix>;

constexpr std::size_t s2_size(int band_limit) {
  return static_cast<std::size_t>((band_limit + 1) * (band_limit + 1));
}
constexpr std::size_t s2_index(int l, int k) { return static_cast<std::size_t>(l * l + l + k); }
constexpr std::size_t so3_block_offset(int l) { return static_cast<std::size_t>(l * (4 * l * l - 1) / 3); }
constexpr std::size_t so3_size(int band_limit) { return so3_block_offset(band_limit + 1); }

/// Spherical-harmonic coefficients, channel-major: data[c * (L+1)^2 + l^2 + l + k].
struct S2Coeffs {
  int band_limit = 0;
  int channels = 0;
  std::vector<double> data;

  S2Coeffs() = default;
  S2Coeffs(int band_limit, int channels);

  std::size_t per_channel() const { return s2_size(band_limit); }
  double& operator()(int c, int l, int k) { return data[static_cast<std::size_t>(c) * per_channel() + s2_index(l, k)]; }
  double operator()(int c, int l, int k) const { return data[static_cast<std::size_t>(c) * per_channel() + s2_index(l, k)]; }
  std::span<double> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * per_channel(), per_channel()}; }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * per_channel(), per_channel()};
  }
};

/// Wigner coefficients: per channel, per degree a row-major (2l+1)x(2l+1)
/// block indexed (m + l, n + l). Serialization order is (channel, l, m, n).
struct SO3Coeffs {
  int band_limit = 0;
  int channels = 0;
  std::vector<double> data;

  SO3Coeffs() = default;
  SO3Coeffs(int band_limit, int channels);

  std::size_t per_channel() const { return so3_size(band_limit); }
  BlockMap block(int c, int l) {
    return {data.data() + static_cast<std::size_t>(c) * per_channel() + so3_block_offset(l), 2 * l + 1, 2 * l + 1};
  }
  ConstBlockMap block(int c, int l) const {
    return {data.data() + static_cast<std::size_t>(c) * per_channel() + so3_block_offset(l), 2 * l + 1, 2 * l + 1};
  }
  std::span<double> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * per_channel(), per_channel()}; }
  std::span<const double> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * per_channel(), per_channel()};
  }
};

/// Real orthonormal spherical harmonic (unit-sphere surface measure).
/// k > 0 carries cos(k phi), k < 0 carries sin(|k| phi), no Condon-Shortley
/// phase: Y_1^{-1}, Y_1^0, Y_1^1 are proportional to y, z, x.
double sh(int l, int k, const Vec3& direction);

/// All degrees 0..L at once, in s2_index order. `out` must hold (L+1)^2.
void sh_all(int band_limit, const Vec3& direction, std::span<double> out);

/// Real-basis representation of a rotation by alpha about z.
RowMatrix wigner_Dz(int l, double alpha);

/// Real-basis representation of a rotation by beta about y (the "small d"
/// factor of the Euler factorization D = Dz(a) d(b) Dz(g)).
RowMatrix wigner_d(int l, double beta);

/// Real-basis Wigner matrix. Rotating a signal f to f(R^-1 x) maps its
/// degree-l coefficient vector c to wigner_D(l, R) * c, and
/// wigner_D(l, R1 R2) = wigner_D(l, R1) wigner_D(l, R2).
RowMatrix wigner_D(int l, const Rotation& r);

/// Blocks 0..L concatenated in SO3Coeffs channel layout.
void wigner_D_all(int band_limit, const Rotation& r, std::span<double> out);

/// Forward transform of samples on an S^2 quadrature grid.
/// Samples are channel-major: samples[c * grid.size() + i].
S2Coeffs s2_fft(const QuadratureGrid& grid, std::span<const double> samples, int channels, int band_limit);

/// Evaluates the expansion at arbitrary unit vectors; channel-major output.
std::vector<double> s2_ifft(const S2Coeffs& coeffs, std::span<const Vec3> points);

/// c^l_mn = (2l+1)/pi^2 * integral f(g) D^l_mn(g) dg, so that
/// f(g) = sum c^l_mn D^l_mn(g) and the uniform density 1/pi^2 has c^0 = 1/pi^2.
SO3Coeffs so3_fft(const QuadratureGrid& grid, std::span<const double> samples, int channels, int band_limit);

/// Evaluation at arbitrary rotations (dense Wigner evaluation per point).
std::vector<double> so3_ifft(const SO3Coeffs& coeffs, std::span<const Rotation> points);

/// Evaluation on a structured quadrature grid (separable fast path).
std::vector<double> so3_ifft(const SO3Coeffs& coeffs, const QuadratureGrid& grid);

/// Coefficient blobs: magic ("S2CF" / "SOCF"), version u32, L u32,
/// channels u32, then float64 data in (channel, l, m[, n]) order.
void save_coeffs(const S2Coeffs& c, std::ostream& os);
void save_coeffs(const SO3Coeffs& c, std::ostream& os);
S2Coeffs load_s2_coeffs(std::istream& is);
SO3Coeffs load_so3_coeffs(std::istream& is);

namespace testing {
/// Fault-injection hook for the self-test: multiplies every real-basis
/// y-rotation block of degree `l` by `scale` until cleared.
void set_wigner_fault(int l, double scale);
void clear_wigner_fault();
unsigned wigner_generation();
}  // namespace testing

}  // namespace i2s
