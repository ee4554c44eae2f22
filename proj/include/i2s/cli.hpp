#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace i2s {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Subcommands generate | train | eval | viz | selftest. `args` excludes the
/// program name. Relative output paths are resolved against $I2S_OUTPUT_DIR
/// when set; $I2S_CACHE_DIR holds precomputed SO(3) grids.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace i2s
