#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "i2s/grids.hpp"

using namespace i2s;
using std::numbers::pi;

namespace {

double nn_spacing(const SO3Grid& grid, std::size_t i) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.rotations.size(); ++j) {
    if (j != i) best = std::min(best, geodesic_distance(grid.rotations[i], grid.rotations[j]));
  }
  return best;
}

double mean_nn_spacing_deg(const SO3Grid& grid, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.rotations.size() - 1);
  double sum = 0.0;
  for (int s = 0; s < samples; ++s) sum += nn_spacing(grid, pick(rng));
  return sum / samples * 180.0 / pi;
}

}  // namespace

TEST_CASE("HEALPix S2 cardinalities and geometry") {
  for (int r = 0; r <= 5; ++r) {
    const S2Grid g = healpix_s2(r);
    CHECK(g.points.size() == 12u * (1u << (2 * r)));
    CHECK(g.cell_area == doctest::Approx(4 * pi / g.points.size()));
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : g.points) {
      CHECK(std::abs(p.norm() - 1.0) < 1e-12);
      centroid += p;
    }
    CHECK(centroid.norm() / g.points.size() < 1e-9);
  }
  CHECK(healpix_s2(2).points.size() == 192);
  CHECK_THROWS_AS(healpix_s2(9), std::invalid_argument);
  CHECK_THROWS_AS(healpix_s2(-1), std::invalid_argument);
}

TEST_CASE("HEALPix rings are equal-area bands") {
  for (int nside : {1, 2, 4, 8}) {
    const auto rings = healpix_rings(nside);
    const double npix = 12.0 * nside * nside;
    std::size_t total = 0;
    for (const HealpixRing& r : rings) total += r.count;
    CHECK(total == static_cast<std::size_t>(npix));
    CHECK(rings.size() == static_cast<std::size_t>(4 * nside - 1));
    // the cap above the boundary between polar rings k and k+1 holds 2k(k+1)
    // pixels, so the equal-area boundary must fall between the ring centers
    for (int k = 1; k < nside; ++k) {
      const double cap_pixels = 2.0 * k * (k + 1);
      const double z_edge = 1.0 - cap_pixels / npix * 2.0;
      const double zk = rings[k - 1].z, zk1 = rings[k].z;
      CHECK(z_edge < zk);
      CHECK(z_edge > zk1);
    }
  }
}

TEST_CASE("hemisphere keeps exactly the z >= 0 points") {
  const S2Grid full0 = healpix_s2(0);
  const S2Grid h0 = hemisphere(full0);
  // 4 polar-ring centers plus the 4 equatorial centers at z = 0.
  CHECK(h0.points.size() == 8);
  for (int r = 0; r <= 4; ++r) {
    const S2Grid full = healpix_s2(r);
    const S2Grid h = hemisphere(full);
    std::size_t expected = 0, equator = 0;
    for (const Vec3& p : full.points) {
      if (p.z() >= 0) ++expected;
      if (p.z() == 0.0) ++equator;
    }
    CHECK(h.points.size() == expected);
    CHECK(h.points.size() >= full.points.size() / 2 - equator);
    CHECK(h.points.size() <= full.points.size() / 2 + equator);
    for (const Vec3& p : h.points) CHECK(p.z() >= 0.0);
    const S2Grid again = hemisphere(healpix_s2(r));
    CHECK(again.points == h.points);
  }
  CHECK(hemisphere(healpix_s2(2)).points.size() == 104);
}

TEST_CASE("SO3 grid cardinalities") {
  CHECK(healpix_so3(0).rotations.size() == 72);
  for (int r = 0; r <= 3; ++r) {
    const SO3Grid g = healpix_so3(r);
    CHECK(g.rotations.size() == 72u * (1u << (3 * r)));
    CHECK(g.cell_volume == doctest::Approx(pi * pi / g.rotations.size()));
    CHECK(g.n_pixels * g.n_gamma == g.rotations.size());
  }
  CHECK(healpix_so3(3).rotations.size() == 36864);
  CHECK_THROWS_AS(healpix_so3(6), std::invalid_argument);
}

TEST_CASE("SO3 grid spacing at recursion 3 and 5") {
  const SO3Grid g3 = healpix_so3(3);
  const double s3 = mean_nn_spacing_deg(g3, 300, 11);
  CHECK(s3 > 6.0);
  CHECK(s3 < 9.0);
  const SO3Grid g5 = healpix_so3(5);
  CHECK(g5.rotations.size() == 2359296);
  const double s5 = mean_nn_spacing_deg(g5, 20, 12);
  CHECK(s5 > 1.475);
  CHECK(s5 < 2.275);
}

TEST_CASE("nearest_index agrees with the exhaustive scan") {
  std::mt19937_64 rng(21);
  for (int rec : {0, 1, 2, 3}) {
    const SO3Grid g = healpix_so3(rec);
    for (int i = 0; i < 150; ++i) {
      const Rotation r = sample_uniform(rng);
      CHECK(nearest_index(g, r) == nearest_index_exhaustive(g, r));
    }
    // grid points and their tiny perturbations
    std::uniform_int_distribution<std::size_t> pick(0, g.rotations.size() - 1);
    for (int i = 0; i < 50; ++i) {
      const std::size_t k = pick(rng);
      CHECK(nearest_index(g, g.rotations[k]) == k);
      Vec3 axis(std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng),
                std::normal_distribution<double>()(rng));
      const Rotation p = g.rotations[k] * Rotation::from_axis_angle(axis, pi / 180.0);
      if (rec == 3) CHECK(nearest_index(g, p) == k);
      CHECK(nearest_index(g, p) == nearest_index_exhaustive(g, p));
    }
  }
}

TEST_CASE("SO3 grid covering radius at recursion 3") {
  const SO3Grid g = healpix_so3(3);
  std::mt19937_64 rng(31);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Rotation r = sample_uniform(rng);
    worst = std::max(worst, geodesic_distance(r, g.rotations[nearest_index(g, r)]));
  }
  CHECK(worst * 180.0 / pi < 6.6);
}

TEST_CASE("quadrature weights") {
  for (int L : {0, 1, 4, 6, 12, 16}) {
    const QuadratureGrid s2 = quadrature_s2(L);
    const QuadratureGrid so3 = quadrature_so3(L);
    double ws = 0.0, wo = 0.0;
    for (double w : s2.weights) {
      CHECK(w > 0.0);
      ws += w;
    }
    for (double w : so3.weights) wo += w;
    CHECK(std::abs(ws - 4 * pi) < 1e-10);
    CHECK(std::abs(wo - pi * pi) < 1e-10);
    const std::size_t b = 2 * (L + 1);
    CHECK(s2.size() == b * b);
    CHECK(so3.size() == b * b * b);
  }
  // polar weights integrate cos(k beta) sin(beta) exactly for k < 2B
  const int L = 5;
  const auto w = polar_quadrature_weights(L);
  const int B = L + 1;
  for (int k = 0; k < 2 * B; ++k) {
    double sum = 0.0;
    for (int j = 0; j < 2 * B; ++j) sum += w[j] * std::cos(k * pi * (2 * j + 1) / (4.0 * B));
    const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (1.0 - static_cast<double>(k) * k);
    CHECK(std::abs(sum - exact) < 1e-12);
  }
}

TEST_CASE("grid files roundtrip") {
  const S2Grid s = healpix_s2(1);
  std::stringstream ss;
  save_grid(s, ss);
  const S2Grid s2 = load_s2_grid(ss);
  CHECK(s2.points == s.points);
  CHECK(s2.recursion == 1);

  const SO3Grid o = healpix_so3(1);
  std::stringstream so;
  save_grid(o, so);
  const SO3Grid o2 = load_so3_grid(so);
  CHECK(o2.rotations == o.rotations);
  CHECK(o2.n_gamma == o.n_gamma);

  std::stringstream bad("XXXX");
  CHECK_THROWS(load_s2_grid(bad));
}
