#pragma once
// Round-by-round record of an interaction: who acted, what losses were
// posted, what the losses really were, and what the learner played.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cpea/learner.hpp"

namespace cpea {

struct RoundRecord {
  std::uint64_t t = 0;  // 1-indexed
  std::size_t user = 0;
  bool honest = true;
  std::vector<double> posted_losses;
  std::vector<double> true_losses;
  Prediction prediction;
  double expected_loss = 0.0;  // prediction dotted with true_losses
};

struct Trajectory {
  std::vector<RoundRecord> rounds;

  std::size_t num_experts() const {
    return rounds.empty() ? 0 : rounds.front().true_losses.size();
  }
};

inline void validate(const Trajectory& traj) {
  const std::size_t m = traj.num_experts();
  for (std::size_t i = 0; i < traj.rounds.size(); ++i) {
    const RoundRecord& r = traj.rounds[i];
    if (r.t != i + 1)
      throw std::invalid_argument("trajectory: rounds must be numbered contiguously from 1");
    if (r.true_losses.size() != m || r.posted_losses.size() != m ||
        r.prediction.distribution.size() != m)
      throw std::invalid_argument("trajectory: inconsistent expert counts");
    double dot = 0.0;
    for (std::size_t x = 0; x < m; ++x)
      dot += r.prediction.distribution[x] * r.true_losses[x];
    if (std::fabs(dot - r.expected_loss) > 1e-9)
      throw std::invalid_argument("trajectory: recorded expected loss disagrees with the prediction");
  }
}

}  // namespace cpea
