#pragma once

#include "clusterpost/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace clusterpost {

/// Post burn-in parameter draws, one column per draw.
struct SampleChain {
  mat draws;
  real accept_rate = 0;
  real wall_time_seconds = 0;
  /// Full gradient evaluations of the log posterior.
  std::uint64_t grad_evals = 0;
  /// Per-pseudo-point likelihood-gradient terms summed over all gradient evaluations.
  std::uint64_t likelihood_terms = 0;

  Index num_draws() const { return draws.cols(); }
  Index num_params() const { return draws.rows(); }
};

/// CSV, one draw per line, parameters in row-major flattened order.
void write_chain_csv(std::ostream& out, const SampleChain& chain);
void write_chain_csv(const std::filesystem::path& path, const SampleChain& chain);
SampleChain read_chain_csv(std::istream& in);
SampleChain read_chain_csv(const std::filesystem::path& path);

}  // namespace clusterpost
