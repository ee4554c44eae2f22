#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "i2s/rotation.hpp"

namespace i2s {

/// One iso-latitude ring of a ring-scheme HEALPix pixelization.
/// Pixel j of the ring sits at azimuth phi0 + j * 2pi / count.
struct HealpixRing {
  double z = 0.0;
  double theta = 0.0;
  double phi0 = 0.0;
  std::size_t first = 0;  // index of the ring's first pixel
  std::size_t count = 0;
};

std::vector<HealpixRing> healpix_rings(int nside);

/// HEALPix point set on the unit sphere. Cells are exactly equal-area.
struct S2Grid {
  std::vector<Vec3> points;
  int recursion = 0;
  double cell_area = 0.0;  // steradians; 4pi / (full-sphere pixel count)
};

/// Equivolumetric SO(3) grid: every HEALPix pixel (azimuth a, polar b) is
/// paired with 6 * 2^recursion evenly spaced third angles g, giving
/// R = Z(a) Y(b) Z(g). Index = pixel * n_gamma + gamma index.
/// Haar measure is normalized to total volume pi^2.
struct SO3Grid {
  std::vector<Rotation> rotations;
  int recursion = 0;
  double cell_volume = 0.0;
  std::size_t n_pixels = 0;
  std::size_t n_gamma = 0;
};

constexpr int kMaxS2Recursion = 8;
constexpr int kMaxSO3Recursion = 5;

S2Grid healpix_s2(int recursion);

/// Points with z >= 0 (the camera looks down -z at the +z hemisphere),
/// in the input order.
S2Grid hemisphere(const S2Grid& grid);

SO3Grid healpix_so3(int recursion);

/// Argmin of geodesic distance over the grid, ties to the lowest index.
/// Ring-pruned search; returns exactly what the exhaustive scan returns.
std::size_t nearest_index(const SO3Grid& grid, const Rotation& r);
std::size_t nearest_index_exhaustive(const SO3Grid& grid, const Rotation& r);

/// Equiangular quadrature on S^2 or SO(3) with closed-form polar weights.
/// For band limit L the polar grid has 2(L+1) nodes
/// beta_j = pi (2j+1) / (4(L+1)); azimuthal angles are 2pi k / (2(L+1)).
/// Products of two signals of degree <= L integrate exactly.
///
/// S^2 points are ordered (beta, alpha); SO(3) points (beta, alpha, gamma),
/// gamma fastest. S^2 weights sum to 4pi, SO(3) weights to pi^2.
struct QuadratureGrid {
  enum class Kind { S2, SO3 };
  Kind kind = Kind::S2;
  int band_limit = 0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> gammas;  // empty for S^2
  std::vector<double> weights;
  std::vector<Vec3> points;          // S^2 only
  std::vector<Rotation> rotations;   // SO(3) only

  std::size_t size() const { return weights.size(); }
};

constexpr int kMaxQuadratureBandLimit = 32;

std::vector<double> polar_quadrature_weights(int band_limit);
QuadratureGrid quadrature_s2(int band_limit);
QuadratureGrid quadrature_so3(int band_limit);

/// Grid files: magic ("S2GR" / "SOGR"), version u32, recursion u32,
/// count u64, then packed little-endian float64 xyz or wxyz.
void save_grid(const S2Grid& grid, std::ostream& os);
void save_grid(const SO3Grid& grid, std::ostream& os);
S2Grid load_s2_grid(std::istream& is);
SO3Grid load_so3_grid(std::istream& is);

/// Builds the grid, reading/writing a cache file under `cache_dir` when it is
/// non-empty.
const SO3Grid& cached_so3_grid(int recursion, const std::string& cache_dir = "");

}  // namespace i2s
