#include "i2s/harmonics.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "i2s/binary_io.hpp"
#include "i2s/so3_sampler.hpp"

namespace i2s {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::uint32_t kCoeffFormatVersion = 1;

std::atomic<int> g_fault_degree{-1};
std::atomic<double> g_fault_scale{1.0};
std::atomic<unsigned> g_generation{0};

void check_degree(int l) {
  if (l < 0 || l > kMaxDegree) throw std::out_of_range("Wigner degree " + std::to_string(l) + " out of range");
}

void check_band_limit(int band_limit) {
  if (band_limit < 0 || band_limit > kMaxDegree) {
    throw std::out_of_range("band limit " + std::to_string(band_limit) + " out of range");
  }
}

// J_l = D(X(-pi/2)) for every degree, from exact quadrature of harmonic
// products: J_mk = integral Y_m(x) Y_k(X(pi/2) x) dx. Conjugating z-rotations
// with J gives y-rotations.
const std::vector<RowMatrix>& swap_matrices() {
  static const std::vector<RowMatrix> table = [] {
    const QuadratureGrid q = quadrature_s2(kMaxDegree);
    const Mat3 inv = Rotation::rot_x(kPi / 2).matrix();
    std::vector<RowMatrix> js;
    for (int l = 0; l <= kMaxDegree; ++l) js.push_back(RowMatrix::Zero(2 * l + 1, 2 * l + 1));
    std::vector<double> y(s2_size(kMaxDegree)), yr(s2_size(kMaxDegree));
    for (std::size_t i = 0; i < q.size(); ++i) {
      sh_all(kMaxDegree, q.points[i], y);
      sh_all(kMaxDegree, inv * q.points[i], yr);
      const double w = q.weights[i];
      for (int l = 0; l <= kMaxDegree; ++l) {
        const std::size_t off = s2_index(l, -l);
        for (int m = 0; m < 2 * l + 1; ++m) {
          const double wy = w * y[off + static_cast<std::size_t>(m)];
          for (int k = 0; k < 2 * l + 1; ++k) js[static_cast<std::size_t>(l)](m, k) += wy * yr[off + static_cast<std::size_t>(k)];
        }
      }
    }
    return js;
  }();
  return table;
}

}  // namespace

S2Coeffs::S2Coeffs(int band_limit_, int channels_)
    : band_limit(band_limit_), channels(channels_), data(static_cast<std::size_t>(channels_) * s2_size(band_limit_), 0.0) {
  check_band_limit(band_limit_);
  if (channels_ < 0) throw std::invalid_argument("negative channel count");
}

SO3Coeffs::SO3Coeffs(int band_limit_, int channels_)
    : band_limit(band_limit_), channels(channels_), data(static_cast<std::size_t>(channels_) * so3_size(band_limit_), 0.0) {
  check_band_limit(band_limit_);
  if (channels_ < 0) throw std::invalid_argument("negative channel count");
}

void sh_all(int band_limit, const Vec3& direction, std::span<double> out) {
  if (band_limit < 0 || band_limit > kMaxShDegree) throw std::out_of_range("sh degree out of range");
  if (out.size() < s2_size(band_limit)) throw std::invalid_argument("sh_all output too small");
  const double n = direction.norm();
  if (!(n > 0.0)) throw std::invalid_argument("sh direction must be nonzero");
  const double x = direction.x() / n, y = direction.y() / n, z = direction.z() / n;
  const int lmax = band_limit;

  // Q_l^m: normalized associated Legendre function divided by sin^m(theta);
  // (x + iy)^m supplies sin^m(theta) e^{i m phi}.
  double cm = 1.0, sm = 0.0;  // Re, Im of (x + iy)^m
  double qmm = 1.0 / std::sqrt(4.0 * kPi);
  for (int m = 0; m <= lmax; ++m) {
    if (m > 0) {
      qmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m));
      const double c = cm * x - sm * y;
      sm = cm * y + sm * x;
      cm = c;
    }
    const double fc = m == 0 ? 1.0 : std::numbers::sqrt2 * cm;
    const double fs = std::numbers::sqrt2 * sm;
    double q_prev2 = 0.0, q_prev = qmm;
    for (int l = m; l <= lmax; ++l) {
      double q;
      if (l == m) {
        q = qmm;
      } else if (l == m + 1) {
        q = std::sqrt(2.0 * m + 3.0) * z * qmm;
      } else {
        const double ll = l, mm = m;
        const double a = std::sqrt((4.0 * ll * ll - 1.0) / (ll * ll - mm * mm));
        const double b = std::sqrt(((ll - 1.0) * (ll - 1.0) - mm * mm) / (4.0 * (ll - 1.0) * (ll - 1.0) - 1.0));
        q = a * (z * q_prev - b * q_prev2);
      }
      if (l > m) {
        q_prev2 = q_prev;
        q_prev = q;
      }
      out[s2_index(l, m)] = q * fc;
      if (m > 0) out[s2_index(l, -m)] = q * fs;
    }
  }
}

double sh(int l, int k, const Vec3& direction) {
  if (l < 0 || l > kMaxShDegree || k < -l || k > l) {
    throw std::out_of_range("sh index (" + std::to_string(l) + ", " + std::to_string(k) + ") out of range");
  }
  std::vector<double> buf(s2_size(l));
  sh_all(l, direction, buf);
  return buf[s2_index(l, k)];
}

RowMatrix wigner_Dz(int l, double alpha) {
  check_degree(l);
  RowMatrix d = RowMatrix::Zero(2 * l + 1, 2 * l + 1);
  d(l, l) = 1.0;
  for (int k = 1; k <= l; ++k) {
    const double c = std::cos(k * alpha), s = std::sin(k * alpha);
    d(l + k, l + k) = c;
    d(l - k, l - k) = c;
    d(l - k, l + k) = s;
    d(l + k, l - k) = -s;
  }
  return d;
}

RowMatrix wigner_d(int l, double beta) {
  check_degree(l);
  const RowMatrix& j = swap_matrices()[static_cast<std::size_t>(l)];
  RowMatrix d = j * wigner_Dz(l, beta) * j.transpose();
  if (g_fault_degree.load() == l) d *= g_fault_scale.load();
  return d;
}

RowMatrix wigner_D(int l, const Rotation& r) {
  check_degree(l);
  const EulerZYZ e = r.to_zyz();
  return wigner_Dz(l, e.alpha) * wigner_d(l, e.beta) * wigner_Dz(l, e.gamma);
}

void wigner_D_all(int band_limit, const Rotation& r, std::span<double> out) {
  check_band_limit(band_limit);
  if (out.size() < so3_size(band_limit)) throw std::invalid_argument("wigner_D_all output too small");
  const EulerZYZ e = r.to_zyz();
  for (int l = 0; l <= band_limit; ++l) {
    const int n = 2 * l + 1;
    BlockMap(out.data() + so3_block_offset(l), n, n) =
        wigner_Dz(l, e.alpha) * wigner_d(l, e.beta) * wigner_Dz(l, e.gamma);
  }
}

S2Coeffs s2_fft(const QuadratureGrid& grid, std::span<const double> samples, int channels, int band_limit) {
  if (grid.kind != QuadratureGrid::Kind::S2) throw std::invalid_argument("s2_fft needs an S2 quadrature grid");
  if (band_limit > grid.band_limit) {
    throw std::invalid_argument("quadrature band limit " + std::to_string(grid.band_limit) +
                                " below signal band limit " + std::to_string(band_limit));
  }
  const std::size_t n = grid.size();
  if (samples.size() != n * static_cast<std::size_t>(channels)) throw std::invalid_argument("s2_fft sample count mismatch");
  S2Coeffs out(band_limit, channels);
  std::vector<double> y(s2_size(band_limit));
  for (std::size_t i = 0; i < n; ++i) {
    sh_all(band_limit, grid.points[i], y);
    for (int c = 0; c < channels; ++c) {
      const double v = grid.weights[i] * samples[static_cast<std::size_t>(c) * n + i];
      auto dst = out.channel(c);
      for (std::size_t k = 0; k < y.size(); ++k) dst[k] += v * y[k];
    }
  }
  return out;
}

std::vector<double> s2_ifft(const S2Coeffs& coeffs, std::span<const Vec3> points) {
  const std::size_t n = points.size();
  std::vector<double> out(n * static_cast<std::size_t>(coeffs.channels), 0.0);
  std::vector<double> y(coeffs.per_channel());
  for (std::size_t i = 0; i < n; ++i) {
    sh_all(coeffs.band_limit, points[i], y);
    for (int c = 0; c < coeffs.channels; ++c) {
      const auto src = coeffs.channel(c);
      double acc = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) acc += src[k] * y[k];
      out[static_cast<std::size_t>(c) * n + i] = acc;
    }
  }
  return out;
}

SO3Coeffs so3_fft(const QuadratureGrid& grid, std::span<const double> samples, int channels, int band_limit) {
  if (grid.kind != QuadratureGrid::Kind::SO3) throw std::invalid_argument("so3_fft needs an SO3 quadrature grid");
  if (band_limit > grid.band_limit) {
    throw std::invalid_argument("quadrature band limit " + std::to_string(grid.band_limit) +
                                " below signal band limit " + std::to_string(band_limit));
  }
  const std::size_t n = grid.size();
  if (samples.size() != n * static_cast<std::size_t>(channels)) throw std::invalid_argument("so3_fft sample count mismatch");
  std::vector<double> weighted(samples.begin(), samples.end());
  for (int c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) weighted[static_cast<std::size_t>(c) * n + i] *= grid.weights[i];
  }
  const auto sampler = quadrature_sampler(grid.band_limit, band_limit);
  SO3Coeffs out = sampler->adjoint(weighted, channels);
  for (int c = 0; c < channels; ++c) {
    for (int l = 0; l <= band_limit; ++l) out.block(c, l) *= (2.0 * l + 1.0) / (kPi * kPi);
  }
  return out;
}

std::vector<double> so3_ifft(const SO3Coeffs& coeffs, std::span<const Rotation> points) {
  const std::size_t n = points.size();
  std::vector<double> out(n * static_cast<std::size_t>(coeffs.channels), 0.0);
  std::vector<double> d(coeffs.per_channel());
  for (std::size_t i = 0; i < n; ++i) {
    wigner_D_all(coeffs.band_limit, points[i], d);
    for (int c = 0; c < coeffs.channels; ++c) {
      const auto src = coeffs.channel(c);
      double acc = 0.0;
      for (std::size_t k = 0; k < d.size(); ++k) acc += src[k] * d[k];
      out[static_cast<std::size_t>(c) * n + i] = acc;
    }
  }
  return out;
}

std::vector<double> so3_ifft(const SO3Coeffs& coeffs, const QuadratureGrid& grid) {
  if (grid.kind != QuadratureGrid::Kind::SO3) throw std::invalid_argument("so3_ifft needs an SO3 quadrature grid");
  return quadrature_sampler(grid.band_limit, coeffs.band_limit)->synthesize(coeffs);
}

void save_coeffs(const S2Coeffs& c, std::ostream& os) {
  io::write_magic(os, "S2CF");
  io::write_u32(os, kCoeffFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(c.band_limit));
  io::write_u32(os, static_cast<std::uint32_t>(c.channels));
  io::write_f64s(os, c.data);
}

void save_coeffs(const SO3Coeffs& c, std::ostream& os) {
  io::write_magic(os, "SOCF");
  io::write_u32(os, kCoeffFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(c.band_limit));
  io::write_u32(os, static_cast<std::uint32_t>(c.channels));
  io::write_f64s(os, c.data);
}

S2Coeffs load_s2_coeffs(std::istream& is) {
  io::expect_magic(is, "S2CF");
  if (io::read_u32(is) != kCoeffFormatVersion) throw std::runtime_error("unsupported coefficient blob version");
  const auto l = static_cast<int>(io::read_u32(is));
  const auto ch = static_cast<int>(io::read_u32(is));
  S2Coeffs c(l, ch);
  io::read_f64s(is, c.data);
  return c;
}

SO3Coeffs load_so3_coeffs(std::istream& is) {
  io::expect_magic(is, "SOCF");
  if (io::read_u32(is) != kCoeffFormatVersion) throw std::runtime_error("unsupported coefficient blob version");
  const auto l = static_cast<int>(io::read_u32(is));
  const auto ch = static_cast<int>(io::read_u32(is));
  SO3Coeffs c(l, ch);
  io::read_f64s(is, c.data);
  return c;
}

namespace testing {

void set_wigner_fault(int l, double scale) {
  g_fault_degree.store(l);
  g_fault_scale.store(scale);
  g_generation.fetch_add(1);
}

void clear_wigner_fault() {
  g_fault_degree.store(-1);
  g_fault_scale.store(1.0);
  g_generation.fetch_add(1);
}

unsigned wigner_generation() { return g_generation.load(); }

}  // namespace testing
}  // namespace i2s
