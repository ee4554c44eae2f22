#pragma once

#include <string>

#include "i2s/model.hpp"
#include "i2s/trainer.hpp"

namespace i2s {

/// Everything that determines a run's artifacts; thread count and paths are
/// not part of it.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int eval_grid_recursion = 5;

  void validate() const;
};

std::string projection_name(ProjectionKind p);
ProjectionKind projection_from_name(const std::string& name);
std::string filter_mode_name(S2Filter::Mode m);
S2Filter::Mode filter_mode_from_name(const std::string& name);

/// Canonical JSON text: fixed key order, compact.
std::string to_json(const RunConfig& cfg);
/// Overlays the keys present in `json` onto `base`; unknown keys and wrongly
/// typed values throw std::invalid_argument.
RunConfig run_config_from_json(const std::string& json, const RunConfig& base = {});

}  // namespace i2s
