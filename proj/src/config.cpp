#include "i2s/config.hpp"

#include <stdexcept>

#include "json.hpp"

namespace i2s {
namespace {

using ojson = nlohmann::ordered_json;

template <class T>
void take(const ojson& obj, const char* key, T& dst, std::size_t& used) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  ++used;
  try {
    dst = it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string("config key '") + key + "' has the wrong type");
  }
}

void check_all_used(const ojson& obj, std::size_t used, const char* section) {
  if (used == obj.size()) return;
  std::string unknown;
  for (auto it = obj.begin(); it != obj.end(); ++it) unknown += " " + it.key();
  throw std::invalid_argument(std::string("unknown key in config section '") + section + "' (keys:" + unknown + ")");
}

}  // namespace

std::string projection_name(ProjectionKind p) { return p == ProjectionKind::Spatial ? "spatial" : "fourier"; }

ProjectionKind projection_from_name(const std::string& name) {
  if (name == "spatial") return ProjectionKind::Spatial;
  if (name == "fourier") return ProjectionKind::Fourier;
  throw std::invalid_argument("unknown projection '" + name + "' (valid: spatial, fourier)");
}

std::string filter_mode_name(S2Filter::Mode m) { return m == S2Filter::Mode::Fourier ? "fourier" : "spatial"; }

S2Filter::Mode filter_mode_from_name(const std::string& name) {
  if (name == "fourier") return S2Filter::Mode::Fourier;
  if (name == "spatial") return S2Filter::Mode::Spatial;
  throw std::invalid_argument("unknown s2 filter '" + name + "' (valid: fourier, spatial)");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (eval_grid_recursion < 0 || eval_grid_recursion > kMaxSO3Recursion) {
    throw std::invalid_argument("eval_grid_recursion must be in [0, 5]");
  }
}

std::string to_json(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  ojson j;
  j["model"] = {{"L", m.band_limit},
                {"image_height", m.image_height},
                {"image_width", m.image_width},
                {"image_channels", m.image_channels},
                {"encoder_channels1", m.encoder_channels1},
                {"encoder_channels2", m.encoder_channels2},
                {"s2_channels", m.s2_channels},
                {"n_so3_convs", m.n_so3_convs},
                {"so3_support_deg", m.so3_support_deg},
                {"so3_filter_recursion", m.so3_filter_recursion},
                {"train_grid_recursion", m.train_grid_recursion},
                {"relu_oversample", m.relu_oversample},
                {"projection", projection_name(m.projection)},
                {"s2_filter", filter_mode_name(m.s2_filter)},
                {"projection_recursion", m.projection_config.recursion},
                {"keep", m.projection_config.keep},
                {"taper", m.projection_config.taper},
                {"taper_start", m.projection_config.taper_start},
                {"ridge", m.projection_config.ridge},
                {"eval_keep_all", m.projection_config.eval_keep_all},
                {"eval_seed", m.projection_config.eval_seed}};
  j["train"] = {{"lr", t.lr},
                {"momentum", t.momentum},
                {"batch", t.batch},
                {"epochs", t.epochs},
                {"decay_every", t.decay_every},
                {"decay", t.decay},
                {"seed", t.seed},
                {"max_steps", t.max_steps},
                {"checkpoint_every", t.checkpoint_every}};
  j["eval_grid_recursion"] = cfg.eval_grid_recursion;
  return j.dump();
}

RunConfig run_config_from_json(const std::string& text, const RunConfig& base) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  RunConfig cfg = base;
  std::size_t used = 0;
  if (const auto it = j.find("model"); it != j.end()) {
    ++used;
    if (!it->is_object()) throw std::invalid_argument("config 'model' must be an object");
    ModelConfig& m = cfg.model;
    std::size_t u = 0;
    std::string projection = projection_name(m.projection), filter = filter_mode_name(m.s2_filter);
    take(*it, "L", m.band_limit, u);
    take(*it, "image_height", m.image_height, u);
    take(*it, "image_width", m.image_width, u);
    take(*it, "image_channels", m.image_channels, u);
    take(*it, "encoder_channels1", m.encoder_channels1, u);
    take(*it, "encoder_channels2", m.encoder_channels2, u);
    take(*it, "s2_channels", m.s2_channels, u);
    take(*it, "n_so3_convs", m.n_so3_convs, u);
    take(*it, "so3_support_deg", m.so3_support_deg, u);
    take(*it, "so3_filter_recursion", m.so3_filter_recursion, u);
    take(*it, "train_grid_recursion", m.train_grid_recursion, u);
    take(*it, "relu_oversample", m.relu_oversample, u);
    take(*it, "projection", projection, u);
    take(*it, "s2_filter", filter, u);
    take(*it, "projection_recursion", m.projection_config.recursion, u);
    take(*it, "keep", m.projection_config.keep, u);
    take(*it, "taper", m.projection_config.taper, u);
    take(*it, "taper_start", m.projection_config.taper_start, u);
    take(*it, "ridge", m.projection_config.ridge, u);
    take(*it, "eval_keep_all", m.projection_config.eval_keep_all, u);
    take(*it, "eval_seed", m.projection_config.eval_seed, u);
    check_all_used(*it, u, "model");
    m.projection = projection_from_name(projection);
    m.s2_filter = filter_mode_from_name(filter);
  }
  if (const auto it = j.find("train"); it != j.end()) {
    ++used;
    if (!it->is_object()) throw std::invalid_argument("config 'train' must be an object");
    TrainConfig& t = cfg.train;
    std::size_t u = 0;
    take(*it, "lr", t.lr, u);
    take(*it, "momentum", t.momentum, u);
    take(*it, "batch", t.batch, u);
    take(*it, "epochs", t.epochs, u);
    take(*it, "decay_every", t.decay_every, u);
    take(*it, "decay", t.decay, u);
    take(*it, "seed", t.seed, u);
    take(*it, "max_steps", t.max_steps, u);
    take(*it, "checkpoint_every", t.checkpoint_every, u);
    check_all_used(*it, u, "train");
  }
  take(j, "eval_grid_recursion", cfg.eval_grid_recursion, used);
  check_all_used(j, used, "top level");
  return cfg;
}

}  // namespace i2s
