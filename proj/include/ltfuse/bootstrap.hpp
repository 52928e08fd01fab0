#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ltfuse/data_model.hpp"

namespace ltfuse {

struct BootstrapResult {
  std::optional<double> se; // absent when fewer than two replicates succeeded
  std::size_t replicates = 0;
  std::size_t failed = 0;
  std::vector<std::optional<double>> estimates; // by replicate index
  Warnings warnings;
};

// Stratified bootstrap: replicate b resamples within (g,w) cells with seed derive_seed(seed, b)
// and re-runs `estimate` from scratch. Replicates whose fit fails are skipped and counted.
inline BootstrapResult bootstrap_se(const CombinedSample& sample, std::size_t replicates, std::uint64_t seed,
                                    unsigned threads, const std::function<double(const CombinedSample&)>& estimate) {
  BootstrapResult out;
  out.replicates = replicates;
  out.estimates.assign(replicates, std::nullopt);
  parallel_for(replicates, threads, [&](std::size_t b) {
    const CombinedSample resampled = bootstrap_resample(sample, derive_seed(seed, b));
    try {
      out.estimates[b] = estimate(resampled);
    } catch (const EstimationError&) {
    } catch (const ValidationError&) {
    }
  });
  std::vector<double> ok;
  for (const auto& e : out.estimates)
    if (e) ok.push_back(*e);
  out.failed = replicates - ok.size();
  if (out.failed > 0)
    out.warnings.push_back({"bootstrap_failures", std::to_string(out.failed) + " of " + std::to_string(replicates) +
                                                      " bootstrap replicate(s) failed and were skipped"});
  if (ok.size() >= 2) {
    const double mean = pairwise_mean(ok);
    std::vector<double> sq;
    sq.reserve(ok.size());
    for (double v : ok) sq.push_back((v - mean) * (v - mean));
    out.se = std::sqrt(pairwise_sum(sq) / static_cast<double>(ok.size() - 1));
  }
  return out;
}

} // namespace ltfuse
