#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace i2s {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  double value = 0.0;      // measured error or count mismatch
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string detail;
};

/// Fast invariant suite: grid counts, Fourier roundtrips, the Wigner
/// homomorphism, convolution equivariance, a tiny-config gradient check and
/// the uniform initial distribution. Exceptions inside a check count as failures.
std::vector<SelftestCheck> run_selftest();

/// Prints one row per check; returns true when all passed.
bool print_selftest(const std::vector<SelftestCheck>& checks, std::ostream& os);

}  // namespace i2s
