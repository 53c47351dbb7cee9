#pragma once
// Common interface for the collaborative online learners: a prediction is a
// distribution over experts for the acting user's round.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpea {

inline constexpr std::size_t kNoUser = std::size_t(-1);

struct Prediction {
  std::vector<double> distribution;
  std::uint64_t round = 0;
};

class OnlineLearner {
 public:
  virtual ~OnlineLearner() = default;

  virtual std::size_t num_experts() const = 0;
  virtual std::size_t num_users() const = 0;

  virtual Prediction predict(std::size_t u) const = 0;
  virtual void update(std::size_t u, std::span<const double> losses) = 0;

  // Predict-then-update in one call; next_user lets implementations prefold
  // work for the following round without changing any result.
  virtual Prediction step(std::size_t u, std::span<const double> losses,
                          std::size_t next_user = kNoUser) {
    (void)next_user;
    Prediction p = predict(u);
    update(u, losses);
    return p;
  }
};

namespace detail {

inline void check_dimensions(std::size_t experts, std::size_t users,
                             std::uint64_t horizon) {
  if (experts == 0) throw std::invalid_argument("collab: need at least one expert");
  if (users == 0) throw std::invalid_argument("collab: need at least one user");
  if (horizon < 2) throw std::invalid_argument("collab: horizon must be at least 2");
}

inline void check_round_inputs(std::size_t u, std::size_t users,
                               std::span<const double> losses,
                               std::size_t experts) {
  if (u >= users) throw std::out_of_range("collab: user index out of range");
  if (losses.size() != experts)
    throw std::invalid_argument("collab: loss vector has size " +
                                std::to_string(losses.size()) + ", expected " +
                                std::to_string(experts));
  for (double l : losses)
    if (!(std::isfinite(l) && std::fabs(l) <= 1.0))
      throw std::invalid_argument("collab: losses must lie in [-1, 1]");
}

// Mixture loss sum p(x) l(x), evaluated relative to l(0) so that a constant
// loss vector yields exactly that constant.
inline double mixture_loss(std::span<const double> p,
                           std::span<const double> losses) {
  double acc = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) acc += p[x] * (losses[x] - losses[0]);
  return losses[0] + acc;
}

inline Prediction finish_prediction(std::vector<double> w, double total,
                                    std::uint64_t round) {
  if (!(total > 0.0)) throw std::logic_error("collab: prediction normalizer must be positive");
  for (double& v : w) v /= total;
  return Prediction{std::move(w), round};
}

}  // namespace detail

}  // namespace cpea
