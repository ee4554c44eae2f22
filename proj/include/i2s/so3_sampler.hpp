#pragma once

#include <memory>
#include <span>
#include <vector>

#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"

namespace i2s {

/// Separable evaluation of band-limited SO(3) signals on point sets that
/// factor as rings of equal polar angle beta, pixels of azimuth alpha within a
/// ring, and a shared list of third angles gamma per pixel:
/// R = Z(alpha) Y(beta) Z(gamma). Both quadrature grids and HEALPix SO(3)
/// grids have this shape.
///
/// With D = Dz(a) d(b) Dz(g), each point value is a trigonometric polynomial
/// in (a, g) whose coefficients depend only on the ring. The cost per point is
/// O(L) instead of O(L^3).
class SO3Sampler {
 public:
  struct Ring {
    double beta = 0.0;
    std::vector<double> alphas;
  };

  SO3Sampler(int band_limit, std::vector<Ring> rings, std::vector<double> gammas);

  static SO3Sampler for_quadrature(const QuadratureGrid& grid, int band_limit);
  static SO3Sampler for_grid(const SO3Grid& grid, int band_limit);

  int band_limit() const { return band_limit_; }
  std::size_t size() const { return n_points_; }

  /// out[c * size() + i] = f_c(point i)
  void synthesize(const SO3Coeffs& coeffs, std::span<double> out) const;
  std::vector<double> synthesize(const SO3Coeffs& coeffs) const;

  /// Transpose of synthesize: out^l_mn[c] = sum_i values[c * size() + i] D^l_mn(point i).
  SO3Coeffs adjoint(std::span<const double> values, int channels) const;

 private:
  int band_limit_;
  std::size_t n_points_ = 0;
  std::vector<Ring> rings_;
  std::vector<double> gammas_;
  std::vector<std::vector<double>> ring_d_;  // per ring, concatenated d^l(beta) blocks
  std::vector<RowMatrix> alpha_trig_;  // per ring: [alpha][cos a alpha | sin a alpha]
  RowMatrix gamma_trig_;               // [gamma][cos b gamma | sin b gamma]
};

/// Process-wide samplers keyed by grid; rebuilt if the Wigner fault hook changes.
std::shared_ptr<const SO3Sampler> quadrature_sampler(int quadrature_band_limit, int band_limit);
std::shared_ptr<const SO3Sampler> grid_sampler(int recursion, int band_limit);

}  // namespace i2s
