#include "i2s/so3_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace i2s {
namespace {

int sgn(int v) { return (v > 0) - (v < 0); }

}  // namespace

SO3Sampler::SO3Sampler(int band_limit, std::vector<Ring> rings, std::vector<double> gammas)
    : band_limit_(band_limit), rings_(std::move(rings)), gammas_(std::move(gammas)) {
  if (band_limit < 0 || band_limit > kMaxDegree) throw std::out_of_range("sampler band limit out of range");
  const int nb = band_limit + 1;
  for (const Ring& ring : rings_) {
    n_points_ += ring.alphas.size() * gammas_.size();
    std::vector<double> d(so3_size(band_limit));
    for (int l = 0; l <= band_limit; ++l) {
      BlockMap(d.data() + so3_block_offset(l), 2 * l + 1, 2 * l + 1) = wigner_d(l, ring.beta);
    }
    ring_d_.push_back(std::move(d));
    RowMatrix trig(static_cast<Eigen::Index>(ring.alphas.size()), 2 * nb);
    for (std::size_t j = 0; j < ring.alphas.size(); ++j) {
      for (int a = 0; a < nb; ++a) {
        trig(static_cast<Eigen::Index>(j), a) = std::cos(a * ring.alphas[j]);
        trig(static_cast<Eigen::Index>(j), nb + a) = std::sin(a * ring.alphas[j]);
      }
    }
    alpha_trig_.push_back(std::move(trig));
  }
  gamma_trig_.resize(static_cast<Eigen::Index>(gammas_.size()), 2 * nb);
  for (std::size_t k = 0; k < gammas_.size(); ++k) {
    for (int b = 0; b < nb; ++b) {
      gamma_trig_(static_cast<Eigen::Index>(k), b) = std::cos(b * gammas_[k]);
      gamma_trig_(static_cast<Eigen::Index>(k), nb + b) = std::sin(b * gammas_[k]);
    }
  }
}

SO3Sampler SO3Sampler::for_quadrature(const QuadratureGrid& grid, int band_limit) {
  if (grid.kind != QuadratureGrid::Kind::SO3) throw std::invalid_argument("sampler needs an SO3 quadrature grid");
  std::vector<Ring> rings;
  for (double beta : grid.betas) rings.push_back({beta, grid.alphas});
  return SO3Sampler(band_limit, std::move(rings), grid.gammas);
}

SO3Sampler SO3Sampler::for_grid(const SO3Grid& grid, int band_limit) {
  const int nside = 1 << grid.recursion;
  std::vector<Ring> rings;
  for (const HealpixRing& hr : healpix_rings(nside)) {
    Ring ring;
    ring.beta = hr.theta;
    const double dphi = 2.0 * std::numbers::pi / static_cast<double>(hr.count);
    for (std::size_t j = 0; j < hr.count; ++j) ring.alphas.push_back(hr.phi0 + dphi * static_cast<double>(j));
    rings.push_back(std::move(ring));
  }
  std::vector<double> gammas;
  for (std::size_t k = 0; k < grid.n_gamma; ++k) {
    gammas.push_back(2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(grid.n_gamma));
  }
  return SO3Sampler(band_limit, std::move(rings), std::move(gammas));
}

void SO3Sampler::synthesize(const SO3Coeffs& coeffs, std::span<double> out) const {
  if (coeffs.band_limit != band_limit_) throw std::invalid_argument("sampler band limit mismatch");
  if (out.size() != n_points_ * static_cast<std::size_t>(coeffs.channels)) {
    throw std::invalid_argument("sampler output size mismatch");
  }
  const int L = band_limit_;
  const int nb = L + 1;
  const auto ng = static_cast<Eigen::Index>(gammas_.size());
  // value(alpha, gamma) = [cos a alpha | sin a alpha] K [cos b gamma | sin b gamma]^T
  RowMatrix k(2 * nb, 2 * nb), tmp;
  for (int c = 0; c < coeffs.channels; ++c) {
    double* dst = out.data() + static_cast<std::size_t>(c) * n_points_;
    for (std::size_t r = 0; r < rings_.size(); ++r) {
      k.setZero();
      const std::vector<double>& dr = ring_d_[r];
      for (int l = 0; l <= L; ++l) {
        const ConstBlockMap cm = coeffs.block(c, l);
        const ConstBlockMap d(dr.data() + so3_block_offset(l), 2 * l + 1, 2 * l + 1);
        for (int m = -l; m <= l; ++m) {
          const int a = std::abs(m), sm = sgn(m);
          for (int n = -l; n <= l; ++n) {
            const double v = cm(m + l, n + l);
            if (v == 0.0) continue;
            const int b = std::abs(n), sn = sgn(n);
            k(a, b) += v * d(m + l, n + l);
            k(a, nb + b) += v * sn * d(m + l, -n + l);
            k(nb + a, b) -= v * sm * d(-m + l, n + l);
            k(nb + a, nb + b) -= v * sm * sn * d(-m + l, -n + l);
          }
        }
      }
      const RowMatrix& at = alpha_trig_[r];
      tmp.noalias() = at * k;
      Eigen::Map<RowMatrix>(dst, at.rows(), ng).noalias() = tmp * gamma_trig_.transpose();
      dst += at.rows() * ng;
    }
  }
}

std::vector<double> SO3Sampler::synthesize(const SO3Coeffs& coeffs) const {
  std::vector<double> out(n_points_ * static_cast<std::size_t>(coeffs.channels));
  synthesize(coeffs, out);
  return out;
}

SO3Coeffs SO3Sampler::adjoint(std::span<const double> values, int channels) const {
  if (values.size() != n_points_ * static_cast<std::size_t>(channels)) {
    throw std::invalid_argument("sampler input size mismatch");
  }
  const int L = band_limit_;
  const int nb = L + 1;
  const auto ng = static_cast<Eigen::Index>(gammas_.size());
  SO3Coeffs out(L, channels);
  RowMatrix k, tmp;
  for (int c = 0; c < channels; ++c) {
    const double* src = values.data() + static_cast<std::size_t>(c) * n_points_;
    for (std::size_t r = 0; r < rings_.size(); ++r) {
      const RowMatrix& at = alpha_trig_[r];
      tmp.noalias() = Eigen::Map<const RowMatrix>(src, at.rows(), ng) * gamma_trig_;
      k.noalias() = at.transpose() * tmp;
      src += at.rows() * ng;
      const std::vector<double>& dr = ring_d_[r];
      for (int l = 0; l <= L; ++l) {
        BlockMap cm = out.block(c, l);
        const ConstBlockMap d(dr.data() + so3_block_offset(l), 2 * l + 1, 2 * l + 1);
        for (int m = -l; m <= l; ++m) {
          const int a = std::abs(m), sm = sgn(m);
          for (int n = -l; n <= l; ++n) {
            const int b = std::abs(n), sn = sgn(n);
            cm(m + l, n + l) += k(a, b) * d(m + l, n + l) + k(a, nb + b) * sn * d(m + l, -n + l) -
                                k(nb + a, b) * sm * d(-m + l, n + l) - k(nb + a, nb + b) * sm * sn * d(-m + l, -n + l);
          }
        }
      }
    }
  }
  return out;
}

namespace {

struct SamplerCache {
  std::mutex mu;
  std::map<std::pair<int, int>, std::pair<unsigned, std::shared_ptr<const SO3Sampler>>> quad, grid;
};

SamplerCache& sampler_cache() {
  static SamplerCache cache;
  return cache;
}

}  // namespace

std::shared_ptr<const SO3Sampler> quadrature_sampler(int quadrature_band_limit, int band_limit) {
  SamplerCache& cache = sampler_cache();
  const unsigned gen = testing::wigner_generation();
  std::lock_guard lock(cache.mu);
  auto& slot = cache.quad[{quadrature_band_limit, band_limit}];
  if (!slot.second || slot.first != gen) {
    slot.second = std::make_shared<const SO3Sampler>(
        SO3Sampler::for_quadrature(quadrature_so3(quadrature_band_limit), band_limit));
    slot.first = gen;
  }
  return slot.second;
}

std::shared_ptr<const SO3Sampler> grid_sampler(int recursion, int band_limit) {
  SamplerCache& cache = sampler_cache();
  const unsigned gen = testing::wigner_generation();
  std::lock_guard lock(cache.mu);
  auto& slot = cache.grid[{recursion, band_limit}];
  if (!slot.second || slot.first != gen) {
    SO3Grid shape;
    shape.recursion = recursion;
    shape.n_gamma = 6u * (1u << recursion);
    slot.second = std::make_shared<const SO3Sampler>(SO3Sampler::for_grid(shape, band_limit));
    slot.first = gen;
  }
  return slot.second;
}

}  // namespace i2s
