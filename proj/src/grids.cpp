#include "i2s/grids.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "i2s/binary_io.hpp"

namespace i2s {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint32_t kGridFormatVersion = 1;

void check_recursion(int recursion, int max_recursion) {
  if (recursion < 0 || recursion > max_recursion) {
    throw std::invalid_argument("grid recursion " + std::to_string(recursion) +
                                " outside [0, " + std::to_string(max_recursion) + "]");
  }
}

struct Quat {
  double w, x, y, z;
};

// Z(phi) Y(theta), not canonicalized.
Quat pixel_quaternion(double phi, double theta) {
  const double a0 = std::cos(0.5 * phi), a3 = std::sin(0.5 * phi);
  const double b0 = std::cos(0.5 * theta), b2 = std::sin(0.5 * theta);
  return {a0 * b0, -a3 * b2, a0 * b2, b0 * a3};
}

}  // namespace

std::vector<HealpixRing> healpix_rings(int nside) {
  if (nside < 1) throw std::invalid_argument("nside must be positive");
  const int n_rings = 4 * nside - 1;
  std::vector<HealpixRing> rings(static_cast<std::size_t>(n_rings));
  const double ns = nside;
  std::size_t first = 0;
  for (int i = 1; i <= n_rings; ++i) {
    HealpixRing& ring = rings[static_cast<std::size_t>(i - 1)];
    if (i < nside || i > 3 * nside) {
      const int k = i < nside ? i : 4 * nside - i;  // polar-cap ring number
      const double t = static_cast<double>(k) * k / (3.0 * ns * ns);  // 1 - |z|
      const double az = 1.0 - t;
      ring.z = i < nside ? az : -az;
      const double sin_theta = std::sqrt(t * (2.0 - t));
      ring.theta = std::atan2(sin_theta, ring.z);
      ring.count = static_cast<std::size_t>(4 * k);
      ring.phi0 = kPi / (4.0 * k);
    } else {
      ring.z = 4.0 / 3.0 - (2.0 * i) / (3.0 * ns);
      ring.theta = std::atan2(std::sqrt((1.0 - ring.z) * (1.0 + ring.z)), ring.z);
      ring.count = static_cast<std::size_t>(4 * nside);
      const int s = (i - nside + 1) % 2;
      ring.phi0 = kPi / (2.0 * ns) * (1.0 - 0.5 * s);
    }
    ring.first = first;
    first += ring.count;
  }
  return rings;
}

S2Grid healpix_s2(int recursion) {
  check_recursion(recursion, kMaxS2Recursion);
  const int nside = 1 << recursion;
  S2Grid grid;
  grid.recursion = recursion;
  grid.points.reserve(12u * static_cast<std::size_t>(nside) * nside);
  for (const HealpixRing& ring : healpix_rings(nside)) {
    const double st = std::sin(ring.theta);
    const double dphi = 2.0 * kPi / static_cast<double>(ring.count);
    for (std::size_t j = 0; j < ring.count; ++j) {
      const double phi = ring.phi0 + dphi * static_cast<double>(j);
      grid.points.emplace_back(st * std::cos(phi), st * std::sin(phi), ring.z);
    }
  }
  grid.cell_area = 4.0 * kPi / static_cast<double>(grid.points.size());
  return grid;
}

S2Grid hemisphere(const S2Grid& grid) {
  S2Grid out;
  out.recursion = grid.recursion;
  out.cell_area = grid.cell_area;
  for (const Vec3& p : grid.points) {
    if (p.z() >= 0.0) out.points.push_back(p);
  }
  return out;
}

SO3Grid healpix_so3(int recursion) {
  check_recursion(recursion, kMaxSO3Recursion);
  const int nside = 1 << recursion;
  SO3Grid grid;
  grid.recursion = recursion;
  grid.n_gamma = 6u * static_cast<std::size_t>(nside);
  grid.n_pixels = 12u * static_cast<std::size_t>(nside) * nside;
  grid.rotations.reserve(grid.n_pixels * grid.n_gamma);
  std::vector<Rotation> gamma_rots;
  for (std::size_t k = 0; k < grid.n_gamma; ++k) {
    gamma_rots.push_back(Rotation::rot_z(2.0 * kPi * static_cast<double>(k) / static_cast<double>(grid.n_gamma)));
  }
  for (const HealpixRing& ring : healpix_rings(nside)) {
    const double dphi = 2.0 * kPi / static_cast<double>(ring.count);
    for (std::size_t j = 0; j < ring.count; ++j) {
      const Rotation pix = Rotation::rot_z(ring.phi0 + dphi * static_cast<double>(j)) * Rotation::rot_y(ring.theta);
      for (const Rotation& g : gamma_rots) grid.rotations.push_back(pix * g);
    }
  }
  grid.cell_volume = kPi * kPi / static_cast<double>(grid.rotations.size());
  return grid;
}

std::size_t nearest_index_exhaustive(const SO3Grid& grid, const Rotation& r) {
  if (grid.rotations.empty()) throw std::invalid_argument("empty grid");
  std::size_t best = 0;
  double best_sim = -1.0;
  for (std::size_t i = 0; i < grid.rotations.size(); ++i) {
    const double s = quaternion_similarity(grid.rotations[i], r);
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return best;
}

std::size_t nearest_index(const SO3Grid& grid, const Rotation& r) {
  if (grid.rotations.empty()) throw std::invalid_argument("empty grid");
  const int nside = 1 << grid.recursion;
  if (grid.n_pixels != 12u * static_cast<std::size_t>(nside) * nside ||
      grid.rotations.size() != grid.n_pixels * grid.n_gamma) {
    return nearest_index_exhaustive(grid, r);
  }
  const std::vector<HealpixRing> rings = healpix_rings(nside);
  const Vec3 axis = r.apply(Vec3::UnitZ());
  const double theta = std::atan2(std::hypot(axis.x(), axis.y()), axis.z());
  const Quat q{r.w(), r.x(), r.y(), r.z()};
  const double dgamma = 2.0 * kPi / static_cast<double>(grid.n_gamma);

  std::size_t best = grid.rotations.size();
  double best_sim = -1.0;
  auto consider = [&](std::size_t idx) {
    const double s = quaternion_similarity(grid.rotations[idx], r);
    if (s > best_sim || (s == best_sim && idx < best)) {
      best_sim = s;
      best = idx;
    }
  };
  auto scan_ring = [&](const HealpixRing& ring) {
    const double dphi = 2.0 * kPi / static_cast<double>(ring.count);
    for (std::size_t j = 0; j < ring.count; ++j) {
      const Quat p = pixel_quaternion(ring.phi0 + dphi * static_cast<double>(j), ring.theta);
      // <q, p * (cos g/2, 0, 0, sin g/2)> = A cos(g/2) + B sin(g/2)
      const double a = q.w * p.w + q.x * p.x + q.y * p.y + q.z * p.z;
      const double b = -q.w * p.z + q.x * p.y - q.y * p.x + q.z * p.w;
      double g = 2.0 * std::atan2(b, a);
      if (g < 0.0) g += 2.0 * kPi;
      auto k0 = static_cast<std::size_t>(std::floor(g / dgamma));
      k0 %= grid.n_gamma;
      const std::size_t base = (ring.first + j) * grid.n_gamma;
      consider(base + k0);
      consider(base + (k0 + 1) % grid.n_gamma);
    }
  };
  auto bound_exceeded = [&](const HealpixRing& ring) {
    const double best_angle = 2.0 * std::acos(std::min(1.0, best_sim));
    return std::abs(ring.theta - theta) > best_angle + 1e-9;
  };

  // start at the ring closest in polar angle and grow outward
  auto it = std::lower_bound(rings.begin(), rings.end(), theta,
                             [](const HealpixRing& ring, double t) { return ring.theta < t; });
  std::ptrdiff_t hi = it - rings.begin();
  std::ptrdiff_t lo = hi - 1;
  const auto n_rings = static_cast<std::ptrdiff_t>(rings.size());
  bool lo_done = lo < 0, hi_done = hi >= n_rings;
  while (!lo_done || !hi_done) {
    const bool take_hi = !hi_done && (lo_done || std::abs(rings[static_cast<std::size_t>(hi)].theta - theta) <=
                                                     std::abs(rings[static_cast<std::size_t>(lo)].theta - theta));
    if (take_hi) {
      const HealpixRing& ring = rings[static_cast<std::size_t>(hi)];
      if (best_sim >= 0.0 && bound_exceeded(ring)) {
        hi_done = true;
        continue;
      }
      scan_ring(ring);
      hi_done = ++hi >= n_rings;
    } else {
      const HealpixRing& ring = rings[static_cast<std::size_t>(lo)];
      if (best_sim >= 0.0 && bound_exceeded(ring)) {
        lo_done = true;
        continue;
      }
      scan_ring(ring);
      lo_done = --lo < 0;
    }
  }
  return best;
}

std::vector<double> polar_quadrature_weights(int band_limit) {
  const int b = band_limit + 1;
  std::vector<double> w(static_cast<std::size_t>(2 * b));
  for (int j = 0; j < 2 * b; ++j) {
    const double beta = kPi * (2 * j + 1) / (4.0 * b);
    double s = 0.0;
    for (int k = 0; k < b; ++k) s += std::sin((2 * k + 1) * beta) / (2 * k + 1);
    w[static_cast<std::size_t>(j)] = 2.0 / b * std::sin(beta) * s;
  }
  return w;
}

namespace {

QuadratureGrid quadrature_axes(int band_limit, QuadratureGrid::Kind kind) {
  if (band_limit < 0 || band_limit > kMaxQuadratureBandLimit) {
    throw std::invalid_argument("quadrature band limit out of range");
  }
  QuadratureGrid q;
  q.kind = kind;
  q.band_limit = band_limit;
  const int b = band_limit + 1;
  for (int j = 0; j < 2 * b; ++j) {
    q.betas.push_back(kPi * (2 * j + 1) / (4.0 * b));
    q.alphas.push_back(2.0 * kPi * j / (2.0 * b));
  }
  return q;
}

}  // namespace

QuadratureGrid quadrature_s2(int band_limit) {
  QuadratureGrid q = quadrature_axes(band_limit, QuadratureGrid::Kind::S2);
  const std::vector<double> wb = polar_quadrature_weights(band_limit);
  const double dphi = 2.0 * kPi / static_cast<double>(q.alphas.size());
  for (std::size_t j = 0; j < q.betas.size(); ++j) {
    const double st = std::sin(q.betas[j]), ct = std::cos(q.betas[j]);
    for (double a : q.alphas) {
      q.points.emplace_back(st * std::cos(a), st * std::sin(a), ct);
      q.weights.push_back(wb[j] * dphi);
    }
  }
  return q;
}

QuadratureGrid quadrature_so3(int band_limit) {
  QuadratureGrid q = quadrature_axes(band_limit, QuadratureGrid::Kind::SO3);
  q.gammas = q.alphas;
  const std::vector<double> wb = polar_quadrature_weights(band_limit);
  const double d = 2.0 * kPi / static_cast<double>(q.alphas.size());
  // dg = sin(beta) da db dg / 8 so that the total volume is pi^2
  for (std::size_t j = 0; j < q.betas.size(); ++j) {
    const Rotation ry = Rotation::rot_y(q.betas[j]);
    for (double a : q.alphas) {
      const Rotation ab = Rotation::rot_z(a) * ry;
      for (double g : q.gammas) {
        q.rotations.push_back(ab * Rotation::rot_z(g));
        q.weights.push_back(wb[j] * d * d / 8.0);
      }
    }
  }
  return q;
}

void save_grid(const S2Grid& grid, std::ostream& os) {
  io::write_magic(os, "S2GR");
  io::write_u32(os, kGridFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(grid.recursion));
  io::write_u64(os, grid.points.size());
  for (const Vec3& p : grid.points) {
    io::write_f64(os, p.x());
    io::write_f64(os, p.y());
    io::write_f64(os, p.z());
  }
}

void save_grid(const SO3Grid& grid, std::ostream& os) {
  io::write_magic(os, "SOGR");
  io::write_u32(os, kGridFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(grid.recursion));
  io::write_u64(os, grid.rotations.size());
  for (const Rotation& r : grid.rotations) {
    io::write_f64(os, r.w());
    io::write_f64(os, r.x());
    io::write_f64(os, r.y());
    io::write_f64(os, r.z());
  }
}

S2Grid load_s2_grid(std::istream& is) {
  io::expect_magic(is, "S2GR");
  if (io::read_u32(is) != kGridFormatVersion) throw std::runtime_error("unsupported S2 grid version");
  S2Grid grid;
  grid.recursion = static_cast<int>(io::read_u32(is));
  check_recursion(grid.recursion, kMaxS2Recursion);
  const std::uint64_t n = io::read_u64(is);
  if (n != 12ull << (2 * grid.recursion)) throw std::runtime_error("S2 grid count does not match recursion");
  grid.points.resize(n);
  for (Vec3& p : grid.points) {
    const double x = io::read_f64(is), y = io::read_f64(is), z = io::read_f64(is);
    p = Vec3(x, y, z);
  }
  grid.cell_area = 4.0 * kPi / static_cast<double>(n);
  return grid;
}

SO3Grid load_so3_grid(std::istream& is) {
  io::expect_magic(is, "SOGR");
  if (io::read_u32(is) != kGridFormatVersion) throw std::runtime_error("unsupported SO3 grid version");
  SO3Grid grid;
  grid.recursion = static_cast<int>(io::read_u32(is));
  check_recursion(grid.recursion, kMaxSO3Recursion);
  const std::uint64_t n = io::read_u64(is);
  if (n != 72ull << (3 * grid.recursion)) throw std::runtime_error("SO3 grid count does not match recursion");
  const std::size_t nside = 1u << grid.recursion;
  grid.n_gamma = 6 * nside;
  grid.n_pixels = 12 * nside * nside;
  grid.rotations.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double w = io::read_f64(is), x = io::read_f64(is), y = io::read_f64(is), z = io::read_f64(is);
    grid.rotations.push_back(Rotation::from_quaternion(w, x, y, z));
  }
  grid.cell_volume = kPi * kPi / static_cast<double>(n);
  return grid;
}

const SO3Grid& cached_so3_grid(int recursion, const std::string& cache_dir) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<SO3Grid>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[recursion];
  if (slot) return *slot;
  if (!cache_dir.empty()) {
    const std::filesystem::path path = std::filesystem::path(cache_dir) / ("so3_r" + std::to_string(recursion) + ".sogr");
    std::ifstream in(path, std::ios::binary);
    if (in) {
      try {
        slot = std::make_unique<SO3Grid>(load_so3_grid(in));
        return *slot;
      } catch (const std::exception&) {
        // stale or truncated cache file; rebuild below
      }
    }
    slot = std::make_unique<SO3Grid>(healpix_so3(recursion));
    std::filesystem::create_directories(cache_dir);
    std::ofstream out(path, std::ios::binary);
    if (out) save_grid(*slot, out);
    return *slot;
  }
  slot = std::make_unique<SO3Grid>(healpix_so3(recursion));
  return *slot;
}

}  // namespace i2s
