#include "i2s/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace i2s {
namespace {

int conv_out(int n) { return (n - 1) / 2 + 1; }

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void add_into(std::vector<double>& a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

std::vector<int> so3_channel_plan(const ModelConfig& cfg) {
  // channel count entering each SO(3) conv, then the final output
  std::vector<int> plan;
  for (int k = 0; k < cfg.n_so3_convs; ++k) plan.push_back(cfg.s2_channels);
  plan.push_back(1);
  return plan;
}

}  // namespace

void ModelConfig::validate() const {
  require(band_limit >= 0 && band_limit <= 16, "band_limit must be in [0, 16]");
  require(image_height >= 2 && image_width >= 2, "image must be at least 2x2");
  require(image_channels >= 1, "image_channels must be positive");
  require(encoder_channels1 >= 1 && encoder_channels2 >= 1, "encoder channels must be positive");
  require(s2_channels >= 1, "s2_channels must be positive");
  require(n_so3_convs >= 0 && n_so3_convs <= 2, "n_so3_convs must be 0, 1 or 2");
  require(so3_support_deg > 0.0 && so3_support_deg <= 180.0, "so3_support_deg must be in (0, 180]");
  require(so3_filter_recursion >= 0 && so3_filter_recursion <= 4, "so3_filter_recursion must be in [0, 4]");
  require(train_grid_recursion >= 0 && train_grid_recursion <= kMaxSO3Recursion, "train_grid_recursion out of range");
  require(relu_oversample >= 1 && relu_oversample * band_limit <= kMaxQuadratureBandLimit, "relu_oversample out of range");
  require(feature_height() >= 2 && feature_width() >= 2, "encoder output smaller than 2x2");
  const auto& p = projection_config;
  require(p.recursion >= 0 && p.recursion <= 6, "projection recursion must be in [0, 6]");
  require(p.keep >= 1 && static_cast<std::size_t>(p.keep) <= hemisphere(healpix_s2(p.recursion)).points.size(),
          "projection keep exceeds the hemisphere grid");
  require(p.ridge >= 0.0, "projection ridge must be nonnegative");
  require(p.taper_start >= 0.0 && p.taper_start < 1.0, "taper_start must be in [0, 1)");
}

int ModelConfig::feature_height() const { return conv_out(conv_out(image_height)); }
int ModelConfig::feature_width() const { return conv_out(conv_out(image_width)); }

std::size_t expected_parameter_count(const ModelConfig& cfg) {
  const std::size_t c0 = cfg.image_channels, c1 = cfg.encoder_channels1, c2 = cfg.encoder_channels2;
  const std::size_t nc = s2_size(cfg.band_limit);
  std::size_t n = c1 * c0 * 9 + c1 + c2 * c1 * 9 + c2;
  if (cfg.projection == ProjectionKind::Fourier) {
    n += nc * static_cast<std::size_t>(cfg.feature_height()) * cfg.feature_width();
  }
  const std::size_t s2_out = cfg.n_so3_convs == 0 ? 1 : cfg.s2_channels;
  const std::size_t per_filter = cfg.s2_filter == S2Filter::Mode::Fourier ? nc : spatial_filter_grid().points.size();
  n += c2 * s2_out * per_filter;
  if (cfg.n_so3_convs > 0) {
    const SO3Filter probe(cfg.band_limit, 1, 1, cfg.so3_support_deg * std::numbers::pi / 180.0,
                          cfg.so3_filter_recursion);
    const auto plan = so3_channel_plan(cfg);
    for (int k = 0; k < cfg.n_so3_convs; ++k) {
      n += static_cast<std::size_t>(plan[static_cast<std::size_t>(k)]) * plan[static_cast<std::size_t>(k) + 1] *
           probe.support.size();
    }
  }
  return n;
}

Conv2d::Conv2d(int in, int out) : in_channels(in), out_channels(out) {
  weight.assign(static_cast<std::size_t>(in) * out * 9, 0.0);
  bias.assign(static_cast<std::size_t>(out), 0.0);
}

FeatureMap conv2d_forward(const Conv2d& conv, const FeatureMap& x) {
  if (x.channels != conv.in_channels) throw std::invalid_argument("conv2d input channel mismatch");
  FeatureMap y(conv_out(x.height), conv_out(x.width), conv.out_channels);
  for (int o = 0; o < conv.out_channels; ++o) {
    for (int r = 0; r < y.height; ++r) {
      for (int c = 0; c < y.width; ++c) {
        double acc = conv.bias[static_cast<std::size_t>(o)];
        for (int i = 0; i < x.channels; ++i) {
          const double* w = conv.weight.data() + (static_cast<std::size_t>(o) * x.channels + i) * 9;
          for (int dr = 0; dr < 3; ++dr) {
            const int sr = 2 * r - 1 + dr;
            if (sr < 0 || sr >= x.height) continue;
            for (int dc = 0; dc < 3; ++dc) {
              const int sc = 2 * c - 1 + dc;
              if (sc < 0 || sc >= x.width) continue;
              acc += w[dr * 3 + dc] * x.at(i, sr, sc);
            }
          }
        }
        y.at(o, r, c) = acc;
      }
    }
  }
  return y;
}

void conv2d_backward(const Conv2d& conv, const FeatureMap& x, const FeatureMap& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, FeatureMap* grad_x) {
  for (int o = 0; o < conv.out_channels; ++o) {
    for (int r = 0; r < grad_out.height; ++r) {
      for (int c = 0; c < grad_out.width; ++c) {
        const double g = grad_out.at(o, r, c);
        if (g == 0.0) continue;
        grad_bias[static_cast<std::size_t>(o)] += g;
        for (int i = 0; i < x.channels; ++i) {
          const std::size_t base = (static_cast<std::size_t>(o) * x.channels + i) * 9;
          for (int dr = 0; dr < 3; ++dr) {
            const int sr = 2 * r - 1 + dr;
            if (sr < 0 || sr >= x.height) continue;
            for (int dc = 0; dc < 3; ++dc) {
              const int sc = 2 * c - 1 + dc;
              if (sc < 0 || sc >= x.width) continue;
              grad_weight[base + dr * 3 + dc] += g * x.at(i, sr, sc);
              if (grad_x) grad_x->at(i, sr, sc) += g * conv.weight[base + dr * 3 + dc];
            }
          }
        }
      }
    }
  }
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  conv1_ = Conv2d(cfg.image_channels, cfg.encoder_channels1);
  conv2_ = Conv2d(cfg.encoder_channels1, cfg.encoder_channels2);
  if (cfg.projection == ProjectionKind::Fourier) {
    fourier_ = FourierProjection(cfg.band_limit, cfg.feature_height(), cfg.feature_width());
  }
  s2_ = S2Filter(cfg.s2_filter, cfg.band_limit, cfg.encoder_channels2, cfg.n_so3_convs == 0 ? 1 : cfg.s2_channels);
  const auto plan = so3_channel_plan(cfg);
  for (int k = 0; k < cfg.n_so3_convs; ++k) {
    so3_.emplace_back(cfg.band_limit, plan[static_cast<std::size_t>(k)], plan[static_cast<std::size_t>(k) + 1],
                      cfg.so3_support_deg * std::numbers::pi / 180.0, cfg.so3_filter_recursion);
  }
}

void Model::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Conv2d* conv : {&conv1_, &conv2_}) {
    std::normal_distribution<double> n(0.0, std::sqrt(2.0 / (9.0 * conv->in_channels)));
    for (double& w : conv->weight) w = n(rng);
    std::fill(conv->bias.begin(), conv->bias.end(), 0.0);
  }
  if (cfg_.projection == ProjectionKind::Fourier) init_fourier_projection(fourier_, rng);
  init_s2_filter(s2_, rng);
  for (SO3Filter& f : so3_) init_so3_filter(f, rng);
  if (so3_.empty()) {
    std::fill(s2_.params.begin(), s2_.params.end(), 0.0);
  } else {
    std::fill(so3_.back().values.begin(), so3_.back().values.end(), 0.0);
  }
  ++version_;
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names{"conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"};
  if (cfg_.projection == ProjectionKind::Fourier) names.emplace_back("projection.weight");
  names.emplace_back("s2_filter");
  for (std::size_t k = 0; k < so3_.size(); ++k) names.push_back("so3_filter" + std::to_string(k));
  return names;
}

std::vector<std::span<const double>> Model::parameters() const {
  std::vector<std::span<const double>> p{conv1_.weight, conv1_.bias, conv2_.weight, conv2_.bias};
  if (cfg_.projection == ProjectionKind::Fourier) p.emplace_back(fourier_.weights);
  p.emplace_back(s2_.params);
  for (const SO3Filter& f : so3_) p.emplace_back(f.values);
  return p;
}

std::vector<std::span<double>> Model::mutable_parameters() {
  ++version_;
  std::vector<std::span<double>> p{conv1_.weight, conv1_.bias, conv2_.weight, conv2_.bias};
  if (cfg_.projection == ProjectionKind::Fourier) p.emplace_back(fourier_.weights);
  p.emplace_back(s2_.params);
  for (SO3Filter& f : so3_) p.emplace_back(f.values);
  return p;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  for (const auto& p : model.parameters()) g.emplace_back(p.size(), 0.0);
  return g;
}

FeatureMap image_to_feature_map(std::span<const float> image, int height, int width, int channels) {
  if (image.size() != static_cast<std::size_t>(height) * width * channels) {
    throw std::invalid_argument("image size " + std::to_string(image.size()) + " does not match " +
                                std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels));
  }
  FeatureMap fm(height, width, channels);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      for (int k = 0; k < channels; ++k) fm.at(k, r, c) = image[(static_cast<std::size_t>(r) * width + c) * channels + k];
    }
  }
  return fm;
}

Network::Network(const Model& model)
    : model_(&model),
      version_(model.version()),
      projector_(model.config().projection_config, model.config().feature_height(), model.config().feature_width(),
                 model.config().band_limit),
      s2_coeffs_(s2_filter_coeffs(model.s2_filter())),
      relu_band_limit_(model.config().relu_oversample * model.config().band_limit) {
  for (const SO3Filter& f : model.so3_filters()) so3_coeffs_.push_back(so3_filter_coeffs(f));
}

ForwardResult Network::forward(std::span<const float> image, const std::vector<std::size_t>& kept,
                               const SO3Grid& grid) const {
  if (model_->version() != version_) throw std::logic_error("network is stale: model parameters changed");
  const ModelConfig& cfg = model_->config();
  ForwardResult res;
  ForwardCache& c = res.cache;
  c.model_version = version_;
  c.grid = &grid;
  c.input = image_to_feature_map(image, cfg.image_height, cfg.image_width, cfg.image_channels);
  c.act1 = conv2d_forward(model_->conv1(), c.input);
  for (double& v : c.act1.values) v = std::max(v, 0.0);
  c.act2 = conv2d_forward(model_->conv2(), c.act1);
  for (double& v : c.act2.values) v = std::max(v, 0.0);
  c.sphere = cfg.projection == ProjectionKind::Spatial ? projector_.project(c.act2, kept, &c.projection)
                                                         : model_->fourier_projection().project(c.act2);
  SO3Coeffs x = s2_conv(c.sphere, s2_coeffs_, model_->s2_filter().out_channels);
  for (std::size_t k = 0; k < so3_coeffs_.size(); ++k) {
    c.relu_masks.emplace_back();
    c.so3_inputs.push_back(spatial_relu(x, relu_band_limit_, &c.relu_masks.back()));
    x = so3_conv(c.so3_inputs.back(), so3_coeffs_[k], model_->so3_filters()[k].out_channels);
  }
  c.output = std::move(x);
  res.logits = query_logits(c.output, grid);
  return res;
}

std::vector<double> Network::logits(std::span<const float> image, const std::vector<std::size_t>& kept,
                                    const SO3Grid& grid) const {
  return forward(image, kept, grid).logits;
}

Network::Accumulator Network::make_accumulator() const {
  Accumulator a;
  a.params = zero_gradients(*model_);
  a.s2_filter = S2Coeffs(s2_coeffs_.band_limit, s2_coeffs_.channels);
  for (const SO3Coeffs& f : so3_coeffs_) a.so3_filters.emplace_back(f.band_limit, f.channels);
  return a;
}

void Network::backward(const ForwardCache& cache, std::span<const double> grad_logits, Accumulator& acc) const {
  if (cache.model_version != version_ || model_->version() != version_) {
    throw std::logic_error("stale forward cache: model parameters changed since the forward pass");
  }
  if (!cache.grid) throw std::logic_error("forward cache is empty");
  const ModelConfig& cfg = model_->config();
  SO3Coeffs g = query_logits_backward(grad_logits, *cache.grid, cfg.band_limit);
  for (std::size_t k = so3_coeffs_.size(); k-- > 0;) {
    SO3Coeffs g_in, g_filter;
    so3_conv_backward(cache.so3_inputs[k], so3_coeffs_[k], g, &g_in, &g_filter);
    add_into(acc.so3_filters[k].data, g_filter.data);
    g = spatial_relu_backward(g_in, relu_band_limit_, cache.relu_masks[k]);
  }
  S2Coeffs g_sphere, g_s2filter;
  s2_conv_backward(cache.sphere, s2_coeffs_, g, &g_sphere, &g_s2filter);
  add_into(acc.s2_filter.data, g_s2filter.data);

  FeatureMap g_act2(cache.act2.height, cache.act2.width, cache.act2.channels);
  if (cfg.projection == ProjectionKind::Spatial) {
    projector_.backward(cache.projection, g_sphere, g_act2);
  } else {
    model_->fourier_projection().backward(cache.act2, g_sphere, g_act2, acc.params[4]);
  }
  for (std::size_t i = 0; i < g_act2.values.size(); ++i) {
    if (cache.act2.values[i] <= 0.0) g_act2.values[i] = 0.0;
  }
  FeatureMap g_act1(cache.act1.height, cache.act1.width, cache.act1.channels);
  conv2d_backward(model_->conv2(), cache.act1, g_act2, acc.params[2], acc.params[3], &g_act1);
  for (std::size_t i = 0; i < g_act1.values.size(); ++i) {
    if (cache.act1.values[i] <= 0.0) g_act1.values[i] = 0.0;
  }
  conv2d_backward(model_->conv1(), cache.input, g_act1, acc.params[0], acc.params[1], nullptr);
}

void Network::add(Accumulator& a, const Accumulator& b) {
  for (std::size_t k = 0; k < a.params.size(); ++k) add_into(a.params[k], b.params[k]);
  add_into(a.s2_filter.data, b.s2_filter.data);
  for (std::size_t k = 0; k < a.so3_filters.size(); ++k) add_into(a.so3_filters[k].data, b.so3_filters[k].data);
}

Gradients Network::finish(const Accumulator& acc) const {
  Gradients g = acc.params;
  const std::size_t s2_slot = model_->config().projection == ProjectionKind::Fourier ? 5 : 4;
  s2_filter_coeffs_backward(model_->s2_filter(), acc.s2_filter, g[s2_slot]);
  for (std::size_t k = 0; k < so3_coeffs_.size(); ++k) {
    so3_filter_coeffs_backward(model_->so3_filters()[k], acc.so3_filters[k], g[s2_slot + 1 + k]);
  }
  return g;
}

ForwardResult forward(const Model& model, std::span<const float> image, const std::vector<std::size_t>& kept,
                      const SO3Grid& grid) {
  return Network(model).forward(image, kept, grid);
}

Gradients backward(const Model& model, const ForwardCache& cache, std::span<const double> grad_logits) {
  if (cache.model_version != model.version()) {
    throw std::logic_error("stale forward cache: model parameters changed since the forward pass");
  }
  const Network net(model);
  auto acc = net.make_accumulator();
  net.backward(cache, grad_logits, acc);
  return net.finish(acc);
}

}  // namespace i2s
