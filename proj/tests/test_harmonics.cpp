#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "i2s/harmonics.hpp"
#include "i2s/so3_sampler.hpp"

using namespace i2s;
using std::numbers::pi;

namespace {

double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

S2Coeffs random_s2(int L, int channels, std::mt19937_64& rng) {
  S2Coeffs c(L, channels);
  std::normal_distribution<double> n;
  for (double& v : c.data) v = n(rng);
  return c;
}

SO3Coeffs random_so3(int L, int channels, std::mt19937_64& rng) {
  SO3Coeffs c(L, channels);
  std::normal_distribution<double> n;
  for (double& v : c.data) v = n(rng);
  return c;
}

// Independent closed forms for the low degrees, written from Cartesian
// polynomials rather than the recursion.
double sh_closed(int l, int k, const Vec3& p) {
  const double x = p.x(), y = p.y(), z = p.z();
  switch (l * 10 + k + 5) {
    case 5: return 0.5 / std::sqrt(pi);
    case 14: return std::sqrt(3 / (4 * pi)) * y;
    case 15: return std::sqrt(3 / (4 * pi)) * z;
    case 16: return std::sqrt(3 / (4 * pi)) * x;
    case 23: return 0.5 * std::sqrt(15 / pi) * x * y;
    case 24: return 0.5 * std::sqrt(15 / pi) * y * z;
    case 25: return 0.25 * std::sqrt(5 / pi) * (3 * z * z - 1);
    case 26: return 0.5 * std::sqrt(15 / pi) * x * z;
    case 27: return 0.25 * std::sqrt(15 / pi) * (x * x - y * y);
    default: return NAN;
  }
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

// D_mk(R) = integral Y_m(x) Y_k(R^-1 x) dx, evaluated by exact quadrature.
RowMatrix wigner_by_quadrature(int l, const Rotation& r) {
  const QuadratureGrid q = quadrature_s2(l);
  RowMatrix d = RowMatrix::Zero(2 * l + 1, 2 * l + 1);
  const Rotation inv = r.inverse();
  for (std::size_t i = 0; i < q.size(); ++i) {
    const Vec3 rp = inv.apply(q.points[i]);
    for (int m = -l; m <= l; ++m) {
      const double ym = q.weights[i] * sh(l, m, q.points[i]);
      for (int k = -l; k <= l; ++k) d(m + l, k + l) += ym * sh(l, k, rp);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("sh closed-form values") {
  CHECK(sh(0, 0, Vec3(0.3, 0.1, 0.9).normalized()) == doctest::Approx(0.2820948).epsilon(1e-7));
  CHECK(sh(1, 0, Vec3(0, 0, 1)) == doctest::Approx(0.4886025).epsilon(1e-7));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p = random_unit(rng);
    for (int l = 0; l <= 2; ++l) {
      for (int k = -l; k <= l; ++k) CHECK(std::abs(sh(l, k, p) - sh_closed(l, k, p)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(sh(2, 3, Vec3(0, 0, 1)), std::out_of_range);
  CHECK_THROWS_AS(sh(-1, 0, Vec3(0, 0, 1)), std::out_of_range);
}

TEST_CASE("sh orthonormal under quadrature") {
  const int L = 12;
  const QuadratureGrid q = quadrature_s2(L);
  const std::size_t n = s2_size(L);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < q.size(); ++i) {
    sh_all(L, q.points[i], y);
    const Eigen::Map<Eigen::VectorXd> v(y.data(), n);
    gram += q.weights[i] * v * v.transpose();
  }
  CHECK((gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sh stays finite and orthonormal at high degree") {
  const int L = 40;
  const QuadratureGrid q = quadrature_s2(L / 2 + 1);
  std::vector<double> y(s2_size(L));
  for (const Vec3& p : q.points) {
    sh_all(L, p, y);
    for (double v : y) CHECK(std::isfinite(v));
  }
  // addition theorem: sum_k Y_lk(x)^2 = (2l+1)/(4pi)
  std::mt19937_64 rng(2);
  const Vec3 p = random_unit(rng);
  sh_all(L, p, y);
  for (int l = 0; l <= L; ++l) {
    double s = 0.0;
    for (int k = -l; k <= l; ++k) s += y[s2_index(l, k)] * y[s2_index(l, k)];
    CHECK(std::abs(s - (2 * l + 1) / (4 * pi)) < 1e-10);
  }
}

TEST_CASE("wigner_d basic properties") {
  CHECK(wigner_d(0, 0.7)(0, 0) == doctest::Approx(1.0));
  CHECK(std::abs(wigner_d(1, pi / 2)(1, 1)) < 1e-12);
  for (double b : {0.0, 0.3, 1.1, 2.5, pi}) {
    CHECK(wigner_d(1, b)(1, 1) == doctest::Approx(std::cos(b)).epsilon(1e-12));
    for (int l = 0; l <= kMaxDegree; ++l) {
      const RowMatrix d = wigner_d(l, b);
      CHECK((d * d.transpose() - RowMatrix::Identity(2 * l + 1, 2 * l + 1)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(d.allFinite());
    }
  }
  CHECK_THROWS_AS(wigner_d(kMaxDegree + 1, 0.1), std::out_of_range);
}

TEST_CASE("wigner_D matches its defining integral") {
  std::mt19937_64 rng(3);
  for (int l : {1, 2, 3, 5}) {
    for (int t = 0; t < 3; ++t) {
      const Rotation r = sample_uniform(rng);
      CHECK((wigner_D(l, r) - wigner_by_quadrature(l, r)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("wigner_D degree one is the rotation matrix in (y, z, x) order") {
  std::mt19937_64 rng(4);
  Mat3 p;
  p << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  for (int t = 0; t < 20; ++t) {
    const Rotation r = sample_uniform(rng);
    const Mat3 expected = p * r.matrix() * p.transpose();
    CHECK((wigner_D(1, r) - RowMatrix(expected)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("wigner_D is a homomorphism") {
  std::mt19937_64 rng(5);
  for (int l = 0; l <= kMaxDegree; ++l) {
    CHECK((wigner_D(l, Rotation()) - RowMatrix::Identity(2 * l + 1, 2 * l + 1)).cwiseAbs().maxCoeff() < 1e-12);
    for (int t = 0; t < 3; ++t) {
      const Rotation a = sample_uniform(rng), b = sample_uniform(rng);
      CHECK((wigner_D(l, a * b) - wigner_D(l, a) * wigner_D(l, b)).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((wigner_D(l, a.inverse()) - wigner_D(l, a).transpose()).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("rotating a signal multiplies its coefficients by D") {
  std::mt19937_64 rng(6);
  const int l = 4;
  const Rotation g = sample_uniform(rng);
  Eigen::VectorXd c = Eigen::VectorXd::Random(2 * l + 1);
  const Eigen::VectorXd c2 = wigner_D(l, g) * c;
  for (int t = 0; t < 10; ++t) {
    const Vec3 x = random_unit(rng);
    const Vec3 gx = g.inverse().apply(x);
    double f = 0.0, fr = 0.0;
    for (int k = -l; k <= l; ++k) {
      f += c(k + l) * sh(l, k, gx);
      fr += c2(k + l) * sh(l, k, x);
    }
    CHECK(std::abs(f - fr) < 1e-10);
  }
}

TEST_CASE("Wigner squared integral equals pi^2/(2l+1)") {
  const int L = 4;
  const QuadratureGrid q = quadrature_so3(L);
  std::vector<double> d(so3_size(L));
  std::vector<double> acc(so3_size(L), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    wigner_D_all(L, q.rotations[i], d);
    for (std::size_t k = 0; k < d.size(); ++k) acc[k] += q.weights[i] * d[k] * d[k];
  }
  for (int l = 0; l <= L; ++l) {
    for (std::size_t k = so3_block_offset(l); k < so3_block_offset(l + 1); ++k) {
      CHECK(std::abs(acc[k] - pi * pi / (2 * l + 1)) < 1e-6);
    }
  }
}

TEST_CASE("s2 transforms") {
  const int L = 6;
  const QuadratureGrid q = quadrature_s2(L);
  std::vector<double> constant(q.size(), 2.5);
  const S2Coeffs c = s2_fft(q, constant, 1, L);
  CHECK(c(0, 0, 0) == doctest::Approx(2.5 * 2 * std::sqrt(pi)).epsilon(1e-12));
  for (std::size_t k = 1; k < c.data.size(); ++k) CHECK(std::abs(c.data[k]) < 1e-10);

  std::vector<double> y32(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) y32[i] = sh(3, 2, q.points[i]);
  const S2Coeffs u = s2_fft(q, y32, 1, L);
  for (int l = 0; l <= L; ++l) {
    for (int k = -l; k <= l; ++k) {
      CHECK(std::abs(u(0, l, k) - ((l == 3 && k == 2) ? 1.0 : 0.0)) < 1e-9);
    }
  }

  std::mt19937_64 rng(7);
  for (int Lr : {0, 3, 8}) {
    const QuadratureGrid qr = quadrature_s2(Lr);
    const S2Coeffs f = random_s2(Lr, 3, rng);
    const S2Coeffs back = s2_fft(qr, s2_ifft(f, qr.points), 3, Lr);
    CHECK(rel_err(back.data, f.data) < 1e-10);
  }
  CHECK_THROWS_AS(s2_fft(quadrature_s2(3), std::vector<double>(quadrature_s2(3).size()), 1, 4), std::invalid_argument);
}

TEST_CASE("s2 transforms are linear and satisfy Parseval") {
  std::mt19937_64 rng(8);
  const int L = 5;
  const QuadratureGrid q = quadrature_s2(L);
  const S2Coeffs f = random_s2(L, 1, rng);
  const auto v = s2_ifft(f, q.points);
  double energy = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) energy += q.weights[i] * v[i] * v[i];
  for (double c : f.data) ce += c * c;
  CHECK(std::abs(energy - ce) < 1e-8 * ce);

  std::vector<double> a(q.size()), b(q.size()), mix(q.size());
  std::normal_distribution<double> n;
  for (std::size_t i = 0; i < q.size(); ++i) {
    a[i] = n(rng);
    b[i] = n(rng);
    mix[i] = 2.0 * a[i] - 0.5 * b[i];
  }
  const S2Coeffs fa = s2_fft(q, a, 1, L), fb = s2_fft(q, b, 1, L), fm = s2_fft(q, mix, 1, L);
  for (std::size_t k = 0; k < fm.data.size(); ++k) {
    CHECK(std::abs(fm.data[k] - (2.0 * fa.data[k] - 0.5 * fb.data[k])) < 1e-12);
  }
}

TEST_CASE("so3 transforms") {
  const int L = 4;
  const QuadratureGrid q = quadrature_so3(L);
  std::vector<double> constant(q.size(), 1.0);
  const SO3Coeffs c = so3_fft(q, constant, 1, L);
  CHECK(c.block(0, 0)(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 1; k < c.data.size(); ++k) CHECK(std::abs(c.data[k]) < 1e-10);

  std::vector<double> d321(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) d321[i] = wigner_D(3, q.rotations[i])(2 + 3, 1 + 3);
  const SO3Coeffs u = so3_fft(q, d321, 1, L);
  for (int l = 0; l <= L; ++l) {
    for (int m = -l; m <= l; ++m) {
      for (int n = -l; n <= l; ++n) {
        const double expected = (l == 3 && m == 2 && n == 1) ? 1.0 : 0.0;
        CHECK(std::abs(u.block(0, l)(m + l, n + l) - expected) < 1e-9);
      }
    }
  }

  std::mt19937_64 rng(9);
  for (int Lr : {0, 2, 5, 8}) {
    const QuadratureGrid qr = quadrature_so3(Lr);
    const SO3Coeffs f = random_so3(Lr, 2, rng);
    const auto fast = so3_ifft(f, qr);
    const auto dense = so3_ifft(f, qr.rotations);
    CHECK(rel_err(fast, dense) < 1e-12);
    const SO3Coeffs back = so3_fft(qr, fast, 2, Lr);
    CHECK(rel_err(back.data, f.data) < 1e-8);
  }
}

TEST_CASE("so3 Parseval") {
  std::mt19937_64 rng(10);
  const int L = 4;
  const QuadratureGrid q = quadrature_so3(L);
  const SO3Coeffs f = random_so3(L, 1, rng);
  const auto v = so3_ifft(f, q);
  double energy = 0.0, ce = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) energy += q.weights[i] * v[i] * v[i];
  for (int l = 0; l <= L; ++l) ce += pi * pi / (2 * l + 1) * f.block(0, l).squaredNorm();
  CHECK(std::abs(energy - ce) < 1e-8 * ce);
}

TEST_CASE("grid sampler agrees with dense evaluation and its adjoint is the transpose") {
  std::mt19937_64 rng(11);
  const int L = 3;
  const SO3Grid g = healpix_so3(1);
  const SO3Coeffs f = random_so3(L, 2, rng);
  const auto fast = grid_sampler(1, L)->synthesize(f);
  const auto dense = so3_ifft(f, g.rotations);
  CHECK(rel_err(fast, dense) < 1e-12);

  std::vector<double> v(fast.size());
  std::normal_distribution<double> n;
  for (double& x : v) x = n(rng);
  const SO3Coeffs adj = grid_sampler(1, L)->adjoint(v, 2);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) lhs += v[i] * fast[i];
  for (std::size_t k = 0; k < f.data.size(); ++k) rhs += adj.data[k] * f.data[k];
  CHECK(std::abs(lhs - rhs) < 1e-9 * std::abs(lhs));
}

TEST_CASE("coefficient blobs roundtrip") {
  std::mt19937_64 rng(12);
  const S2Coeffs a = random_s2(3, 2, rng);
  std::stringstream s;
  save_coeffs(a, s);
  const S2Coeffs a2 = load_s2_coeffs(s);
  CHECK(a2.data == a.data);
  CHECK(a2.channels == 2);
  const SO3Coeffs b = random_so3(2, 3, rng);
  std::stringstream t;
  save_coeffs(b, t);
  const SO3Coeffs b2 = load_so3_coeffs(t);
  CHECK(b2.data == b.data);
  CHECK(b2.band_limit == 2);
  CHECK(SO3Coeffs(6, 1).data.size() == 455);
  CHECK(S2Coeffs(6, 1).data.size() == 49);
}

TEST_CASE("fault hook perturbs one degree and can be cleared") {
  const RowMatrix before = wigner_d(2, 0.4);
  const unsigned gen = testing::wigner_generation();
  testing::set_wigner_fault(2, 1.5);
  CHECK(testing::wigner_generation() != gen);
  CHECK((wigner_d(2, 0.4) - 1.5 * before).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((wigner_d(1, 0.4) - wigner_d(1, 0.4)).cwiseAbs().maxCoeff() == 0.0);
  testing::clear_wigner_fault();
  CHECK((wigner_d(2, 0.4) - before).cwiseAbs().maxCoeff() == 0.0);
}
