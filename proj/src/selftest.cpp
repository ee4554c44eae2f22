#include "i2s/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>

#include "i2s/equivariant.hpp"
#include "i2s/grids.hpp"
#include "i2s/harmonics.hpp"
#include "i2s/head.hpp"
#include "i2s/model.hpp"

namespace i2s {
namespace {

double rel(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

void fill(std::vector<double>& v, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  for (double& x : v) x = n(rng);
}

double grid_counts() {
  double bad = 0.0;
  for (int r = 0; r <= 3; ++r) {
    if (healpix_s2(r).points.size() != 12u * (1u << (2 * r))) bad += 1.0;
  }
  for (int r = 0; r <= 2; ++r) {
    if (healpix_so3(r).rotations.size() != 72u * (1u << (3 * r))) bad += 1.0;
  }
  return bad;
}

double s2_roundtrip() {
  std::mt19937_64 rng(11);
  const int L = 8;
  S2Coeffs c(L, 2);
  fill(c.data, rng);
  const QuadratureGrid q = quadrature_s2(L);
  const auto samples = s2_ifft(c, q.points);
  return rel(s2_fft(q, samples, 2, L).data, c.data);
}

double so3_roundtrip() {
  std::mt19937_64 rng(12);
  const int L = 6;
  SO3Coeffs c(L, 2);
  fill(c.data, rng);
  const QuadratureGrid q = quadrature_so3(L);
  const auto samples = so3_ifft(c, q);
  return rel(so3_fft(q, samples, 2, L).data, c.data);
}

double wigner_homomorphism() {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Rotation a = sample_uniform(rng), b = sample_uniform(rng);
    for (int l = 0; l <= 8; ++l) {
      const RowMatrix lhs = wigner_D(l, a * b);
      const RowMatrix rhs = wigner_D(l, a) * wigner_D(l, b);
      worst = std::max(worst, (lhs - rhs).norm() / std::sqrt(2.0 * l + 1.0));
    }
  }
  return worst;
}

double s2_conv_equivariance() {
  std::mt19937_64 rng(14);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Rotation g = sample_uniform(rng);
    S2Coeffs f(6, 2), psi(6, 4);
    fill(f.data, rng);
    fill(psi.data, rng);
    worst = std::max(worst, rel(s2_conv(rotate_signal(f, g), psi, 2).data, rotate_signal(s2_conv(f, psi, 2), g).data));
  }
  return worst;
}

double so3_conv_equivariance() {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Rotation g = sample_uniform(rng);
    SO3Coeffs h(6, 2), phi(6, 2);
    fill(h.data, rng);
    fill(phi.data, rng);
    worst = std::max(worst, rel(so3_conv(rotate_signal(h, g), phi, 1).data, rotate_signal(so3_conv(h, phi, 1), g).data));
  }
  return worst;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.band_limit = 2;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.encoder_channels1 = 4;
  cfg.encoder_channels2 = 6;
  cfg.s2_channels = 3;
  cfg.so3_filter_recursion = 2;
  cfg.so3_support_deg = 40.0;
  return cfg;
}

double gradient_check() {
  const ModelConfig cfg = tiny_config();
  Model m(cfg);
  m.initialize(3);
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0.0, 0.4);
  for (auto p : m.mutable_parameters()) {
    for (double& v : p) v = n(rng);
  }
  std::vector<float> img(static_cast<std::size_t>(cfg.image_height) * cfg.image_width * cfg.image_channels);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img) v = u(rng);
  const SO3Grid grid = healpix_so3(0);
  const Network net(m);
  const auto kept = net.projector().train_mask(rng);
  const std::size_t target = 5;
  const auto fwd = net.forward(img, kept, grid);
  const Gradients g = backward(m, fwd.cache, cross_entropy(fwd.logits, target).grad);
  auto loss = [&] { return cross_entropy(forward(m, img, kept, grid).logits, target).loss; };
  const double h = 1e-6;
  double worst = 0.0;
  const auto sizes = m.parameters();
  for (int t = 0; t < 50; ++t) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(0, sizes.size() - 1)(rng);
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, sizes[k].size() - 1)(rng);
    const double orig = m.parameters()[k][i];
    m.mutable_parameters()[k][i] = orig + h;
    const double lp = loss();
    m.mutable_parameters()[k][i] = orig - h;
    const double lm = loss();
    m.mutable_parameters()[k][i] = orig;
    const double fd = (lp - lm) / (2 * h);
    const double r = std::abs(fd - g[k][i]) / std::max({std::abs(fd), std::abs(g[k][i]), 1e-4});
    worst = std::max(worst, r);
  }
  return worst;
}

double uniform_start() {
  ModelConfig cfg;
  cfg.band_limit = 4;
  Model m(cfg);
  m.initialize(1);
  std::mt19937_64 rng(17);
  std::vector<float> img(static_cast<std::size_t>(cfg.image_height) * cfg.image_width * cfg.image_channels);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& v : img) v = u(rng);
  const SO3Grid& grid = cached_so3_grid(2);
  const Network net(m);
  const PoseDistribution dist = softmax_distribution(net.logits(img, net.projector().eval_mask(), grid), grid);
  const double uniform = -std::log(std::numbers::pi * std::numbers::pi);
  return std::abs(log_likelihood(dist, sample_uniform(rng)) - uniform);
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
  struct Spec {
    const char* name;
    double tolerance;
    std::function<double()> fn;
  };
  const std::vector<Spec> specs = {
      {"grid_counts", 0.0, grid_counts},
      {"s2_roundtrip", 1e-8, s2_roundtrip},
      {"so3_roundtrip", 1e-8, so3_roundtrip},
      {"wigner_homomorphism", 1e-10, wigner_homomorphism},
      {"s2_conv_equivariance", 1e-6, s2_conv_equivariance},
      {"so3_conv_equivariance", 1e-6, so3_conv_equivariance},
      {"gradient_check", 1e-3, gradient_check},
      {"uniform_start", 1e-9, uniform_start},
  };
  std::vector<SelftestCheck> out;
  for (const Spec& s : specs) {
    SelftestCheck c;
    c.name = s.name;
    c.tolerance = s.tolerance;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.value = s.fn();
      c.passed = std::isfinite(c.value) && c.value <= s.tolerance;
    } catch (const std::exception& e) {
      c.passed = false;
      c.value = std::nan("");
      c.detail = e.what();
    }
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(std::move(c));
  }
  return out;
}

bool print_selftest(const std::vector<SelftestCheck>& checks, std::ostream& os) {
  bool ok = true;
  os << std::left << std::setw(24) << "check" << std::setw(6) << "result" << std::right << std::setw(12) << "value"
     << std::setw(12) << "tolerance" << std::setw(9) << "seconds" << '\n';
  for (const SelftestCheck& c : checks) {
    ok = ok && c.passed;
    os << std::left << std::setw(24) << c.name << std::setw(6) << (c.passed ? "PASS" : "FAIL") << std::right
       << std::scientific << std::setprecision(2) << std::setw(12) << c.value << std::setw(12) << c.tolerance
       << std::fixed << std::setprecision(2) << std::setw(9) << c.seconds;
    if (!c.detail.empty()) os << "  " << c.detail;
    os << '\n';
  }
  os << (ok ? "selftest passed" : "selftest FAILED") << '\n';
  return ok;
}

}  // namespace i2s
