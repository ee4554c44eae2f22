#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "i2s/equivariant.hpp"
#include "i2s/head.hpp"

using namespace i2s;
using std::numbers::pi;

namespace {

// Truncated delta at the identity, moved to `center`: a peak whose value
// falls with geodesic distance from `center` near the peak.
SO3Coeffs bump(int L, const Rotation& center) {
  SO3Coeffs s(L, 1);
  for (int l = 0; l <= L; ++l) s.block(0, l) = RowMatrix::Identity(2 * l + 1, 2 * l + 1) * ((2.0 * l + 1.0) / (pi * pi));
  return rotate_signal(s, center);
}

}  // namespace

TEST_CASE("query_logits") {
  const SO3Grid& g = cached_so3_grid(1);
  const SO3Coeffs zero(4, 1);
  for (double v : query_logits(zero, g)) CHECK(v == 0.0);
  SO3Coeffs constant(4, 1);
  constant.block(0, 0)(0, 0) = 0.3;
  for (double v : query_logits(constant, g)) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));

  std::mt19937_64 rng(1);
  const SO3Grid& g3 = cached_so3_grid(3);
  for (int t = 0; t < 5; ++t) {
    const Rotation c = sample_uniform(rng);
    const auto logits = query_logits(bump(6, c), g3);
    const std::size_t arg = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    CHECK(arg == nearest_index_exhaustive(g3, c));
  }
  CHECK_THROWS_AS(query_logits(SO3Coeffs(2, 2), g), std::invalid_argument);
}

TEST_CASE("query_logits backward is the transpose") {
  std::mt19937_64 rng(2);
  const SO3Grid& g = cached_so3_grid(2);
  SO3Coeffs s(3, 1);
  std::normal_distribution<double> n;
  for (double& v : s.data) v = n(rng);
  std::vector<double> u(g.rotations.size());
  for (double& v : u) v = n(rng);
  const auto f = query_logits(s, g);
  const SO3Coeffs b = query_logits_backward(u, g, 3);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) lhs += u[i] * f[i];
  for (std::size_t i = 0; i < s.data.size(); ++i) rhs += b.data[i] * s.data[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("softmax distribution") {
  const SO3Grid& g = cached_so3_grid(0);
  const std::vector<double> equal(72, 1.7);
  const PoseDistribution d = softmax_distribution(equal, g);
  double sum = 0.0;
  for (double p : d.probs) {
    CHECK(p == doctest::Approx(1.0 / 72).epsilon(1e-14));
    sum += p;
  }
  CHECK(std::abs(sum - 1.0) < 1e-9);

  std::vector<double> two(72, -1e300);
  two[0] = 0.0;
  two[1] = std::log(3.0);
  const PoseDistribution t = softmax_distribution(two, g);
  CHECK(t.probs[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(t.probs[1] == doctest::Approx(0.75).epsilon(1e-14));

  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  std::vector<double> l(72), shifted(72);
  for (std::size_t i = 0; i < 72; ++i) {
    l[i] = n(rng);
    shifted[i] = l[i] + 123.4;
  }
  const PoseDistribution a = softmax_distribution(l, g), b = softmax_distribution(shifted, g);
  double s = 0.0;
  for (std::size_t i = 0; i < 72; ++i) {
    CHECK(std::abs(a.probs[i] - b.probs[i]) < 1e-12);
    CHECK(a.probs[i] >= 0.0);
    s += a.probs[i];
  }
  CHECK(std::abs(s - 1.0) < 1e-9);
}

TEST_CASE("cross entropy") {
  const SO3Grid& g = cached_so3_grid(0);
  std::mt19937_64 rng(4);
  const std::vector<double> uniform(72, 0.5);
  const CrossEntropy u = cross_entropy(uniform, sample_uniform(rng), g);
  CHECK(u.loss == doctest::Approx(std::log(72.0)).epsilon(1e-14));

  std::normal_distribution<double> n;
  std::vector<double> logits(72);
  for (double& v : logits) v = n(rng);
  const Rotation gt = sample_uniform(rng);
  const CrossEntropy ce = cross_entropy(logits, gt, g);
  CHECK(ce.target == nearest_index_exhaustive(g, gt));
  double gsum = 0.0;
  for (double v : ce.grad) gsum += v;
  CHECK(std::abs(gsum) < 1e-12);
  const double h = 1e-5;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    auto lp = logits, lm = logits;
    lp[i] += h;
    lm[i] -= h;
    const double fd = (cross_entropy(lp, ce.target).loss - cross_entropy(lm, ce.target).loss) / (2 * h);
    CHECK(std::abs(fd - ce.grad[i]) < 1e-6);
  }
  // mass concentrated on the target minimizes the loss among bounded logits
  std::vector<double> peaked(72, 0.0), wrong(72, 0.0);
  peaked[ce.target] = 10.0;
  wrong[(ce.target + 1) % 72] = 10.0;
  CHECK(cross_entropy(peaked, ce.target).loss < cross_entropy(logits, ce.target).loss);
  CHECK(cross_entropy(peaked, ce.target).loss < cross_entropy(wrong, ce.target).loss);
}

TEST_CASE("log likelihood") {
  std::mt19937_64 rng(5);
  for (int rec : {0, 2, 3}) {
    const SO3Grid& g = cached_so3_grid(rec);
    const std::vector<double> flat(g.rotations.size(), 0.0);
    const PoseDistribution d = softmax_distribution(flat, g);
    CHECK(log_likelihood(d, sample_uniform(rng)) == doctest::Approx(-std::log(pi * pi)).epsilon(1e-12));
  }
  CHECK(-std::log(pi * pi) == doctest::Approx(-2.2895).epsilon(1e-4));

  const SO3Grid& g0 = cached_so3_grid(0);
  PoseDistribution delta{&g0, std::vector<double>(72, 0.0)};
  delta.probs[17] = 1.0;
  CHECK(log_likelihood(delta, g0.rotations[17]) == doctest::Approx(std::log(72 / (pi * pi))).epsilon(1e-12));
  CHECK(std::log(72 / (pi * pi)) == doctest::Approx(1.988).epsilon(1e-3));
  CHECK(log_likelihood(delta, g0.rotations[3]) == doctest::Approx(std::log(1e-12 * 72 / (pi * pi))).epsilon(1e-12));
}

TEST_CASE("argmax rotation") {
  const SO3Grid& g = cached_so3_grid(0);
  PoseDistribution d{&g, std::vector<double>(72, 1.0 / 72)};
  CHECK(argmax_index(d) == 0);
  CHECK(argmax_rotation(d) == g.rotations[0]);
  PoseDistribution bi{&g, std::vector<double>(72, 0.0)};
  bi.probs[10] = 0.3;
  bi.probs[50] = 0.7;
  CHECK(argmax_rotation(bi) == g.rotations[50]);
  PoseDistribution delta{&g, std::vector<double>(72, 0.0)};
  delta.probs[33] = 1.0;
  CHECK(argmax_rotation(delta) == g.rotations[33]);
}

TEST_CASE("argmax transfers from the training grid to a finer grid") {
  std::mt19937_64 rng(6);
  const SO3Grid& g3 = cached_so3_grid(3);
  const SO3Grid& g5 = cached_so3_grid(5);
  for (int t = 0; t < 3; ++t) {
    const SO3Coeffs s = bump(6, sample_uniform(rng));
    const auto l3 = query_logits(s, g3);
    const auto l5 = query_logits(s, g5);
    const Rotation a3 = argmax_rotation(softmax_distribution(l3, g3));
    const Rotation a5 = argmax_rotation(softmax_distribution(l5, g5));
    CHECK(geodesic_distance(a3, a5) * 180 / pi < 6.6);
  }
}

TEST_CASE("distribution blobs") {
  const SO3Grid& g = cached_so3_grid(0);
  PoseDistribution d{&g, std::vector<double>(72, 1.0 / 72)};
  std::stringstream s;
  save_distribution(d, s);
  const auto [rec, probs] = load_distribution(s);
  CHECK(rec == 0);
  CHECK(probs.size() == 72);
  CHECK(probs[5] == static_cast<float>(1.0 / 72));
}
