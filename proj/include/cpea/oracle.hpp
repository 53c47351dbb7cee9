#pragma once
// Ground-truth computations for evaluating runs: best fixed expert over the
// honest rounds, the best m-way expert assignment, loss variance, regret
// bound right-hand sides, and an exponential-size reference learner that
// keeps one specialist per (expert, user-subset) pair.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpea/learner.hpp"
#include "cpea/mwm.hpp"
#include "cpea/theta.hpp"
#include "cpea/trajectory.hpp"

namespace cpea {

namespace detail {

inline std::vector<char> honest_mask(const Trajectory& traj,
                                     std::span<const std::size_t> honest) {
  std::size_t max_id = 0;
  for (const RoundRecord& r : traj.rounds) max_id = std::max(max_id, r.user);
  for (std::size_t u : honest) max_id = std::max(max_id, u);
  std::vector<char> mask(max_id + 1, 0);
  for (std::size_t u : honest) mask[u] = 1;
  return mask;
}

inline bool next_combination(std::vector<std::size_t>& c, std::size_t n) {
  const std::size_t k = c.size();
  for (std::size_t i = k; i-- > 0;) {
    if (c[i] < n - k + i) {
      ++c[i];
      for (std::size_t j = i + 1; j < k; ++j) c[j] = c[j - 1] + 1;
      return true;
    }
  }
  return false;
}

}  // namespace detail

// Best fixed expert over rounds acted by honest users, on true losses; ties
// break toward the lowest expert index. Empty trajectories or honest sets
// yield expert 0 with value 0.
inline std::pair<std::size_t, double> opt_h(const Trajectory& traj,
                                            std::span<const std::size_t> honest) {
  const std::size_t m = traj.num_experts();
  if (m == 0) return {0, 0.0};
  const std::vector<char> mask = detail::honest_mask(traj, honest);
  std::vector<double> sums(m, 0.0);
  for (const RoundRecord& r : traj.rounds) {
    if (!mask[r.user]) continue;
    for (std::size_t x = 0; x < m; ++x) sums[x] += r.true_losses[x];
  }
  std::size_t best = 0;
  for (std::size_t x = 1; x < m; ++x)
    if (sums[x] < sums[best]) best = x;
  return {best, sums[best]};
}

// Best total honest loss achievable by picking m experts and assigning every
// honest user to one of them. Brute force over expert subsets, using the
// per-user decomposition: each user independently takes the subset's best
// expert for their own rounds.
inline double opt_h_m(const Trajectory& traj,
                      std::span<const std::size_t> honest, std::size_t m) {
  if (m == 0) throw std::invalid_argument("opt_h_m: need m >= 1");
  const std::size_t experts = traj.num_experts();
  if (experts == 0) return 0.0;
  if (m > experts) m = experts;

  double subsets = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    subsets *= double(experts - i) / double(i + 1);
    if (subsets > 1e6)
      throw std::invalid_argument("opt_h_m: instance too large");
  }

  const std::vector<char> mask = detail::honest_mask(traj, honest);
  std::vector<std::vector<double>> per_user;
  std::vector<std::size_t> row_of(mask.size(), std::size_t(-1));
  for (const RoundRecord& r : traj.rounds) {
    if (!mask[r.user]) continue;
    if (row_of[r.user] == std::size_t(-1)) {
      row_of[r.user] = per_user.size();
      per_user.emplace_back(experts, 0.0);
    }
    std::vector<double>& row = per_user[row_of[r.user]];
    for (std::size_t x = 0; x < experts; ++x) row[x] += r.true_losses[x];
  }

  std::vector<std::size_t> pick(m);
  std::iota(pick.begin(), pick.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (const std::vector<double>& row : per_user) {
      double lo = row[pick[0]];
      for (std::size_t i = 1; i < m; ++i) lo = std::min(lo, row[pick[i]]);
      total += lo;
    }
    best = std::min(best, total);
  } while (detail::next_combination(pick, experts));
  return per_user.empty() ? 0.0 : best;
}

// Sum of squared gaps between expert x's true loss and the played mixture's
// expected loss, over honest rounds.
inline double variance_vh(const Trajectory& traj,
                          std::span<const std::size_t> honest, std::size_t x) {
  if (!traj.rounds.empty() && x >= traj.num_experts())
    throw std::out_of_range("variance_vh: expert index out of range");
  const std::vector<char> mask = detail::honest_mask(traj, honest);
  double v = 0.0;
  for (const RoundRecord& r : traj.rounds) {
    if (!mask[r.user]) continue;
    const double d = r.true_losses[x] - r.expected_loss;
    v += d * d;
  }
  return v;
}

// Natural-log binary entropy with the convention 0 ln(1/0) = 0.
inline double binary_entropy(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("binary_entropy: need alpha in [0, 1]");
  auto term = [](double a) { return a > 0.0 ? a * std::log(1.0 / a) : 0.0; };
  return term(alpha) + term(1.0 - alpha);
}

struct BoundInputs {
  double alpha = 0.0;    // honest fraction |H| / N
  double v_h = 0.0;      // squared-gap sum over honest rounds
  double v_not_h = 0.0;  // squared-gap sum over the remaining rounds
  double entropy = 0.0;  // binary_entropy(alpha)
  std::size_t experts = 1;
  std::size_t users = 1;
  std::uint64_t horizon = 1;
};

inline BoundInputs make_bound_inputs(double alpha, double v_h, double v_not_h,
                                     std::size_t experts, std::size_t users,
                                     std::uint64_t horizon) {
  return BoundInputs{alpha, v_h, v_not_h, binary_entropy(alpha),
                     experts, users, horizon};
}

// Regret-bound right-hand sides. All are calibrated by an explicit
// multiplicative constant; the ones stated up to additive sqrt(T log log T)
// terms carry that term explicitly.
enum class BoundKind {
  simple,          // sqrt(T (ln M + N))
  entropy,         // sqrt(alpha T (ln M + N H_b(alpha))) + tilde
  variance_full,   // sqrt(V_H ln M + N (V_H a ln 1/a + V_~H (1-a) ln 1/(1-a))) + tilde
  variance_split,  // sqrt(N (V_H a ln 1/a + V_~H (1-a) ln 1/(1-a))) + tilde
  grouped,         // sqrt(T (m ln M + N ln m)) + tilde
};

inline const char* bound_kind_name(BoundKind kind) {
  switch (kind) {
    case BoundKind::simple: return "simple";
    case BoundKind::entropy: return "entropy";
    case BoundKind::variance_full: return "variance_full";
    case BoundKind::variance_split: return "variance_split";
    case BoundKind::grouped: return "grouped";
  }
  throw std::invalid_argument("bound_kind_name: unknown kind");
}

inline BoundKind bound_kind_from(const std::string& name) {
  if (name == "simple") return BoundKind::simple;
  if (name == "entropy") return BoundKind::entropy;
  if (name == "variance_full") return BoundKind::variance_full;
  if (name == "variance_split") return BoundKind::variance_split;
  if (name == "grouped") return BoundKind::grouped;
  throw std::invalid_argument("bound_kind_from: unknown kind '" + name + "'");
}

inline double bound_rhs(BoundKind kind, const BoundInputs& in, double constant,
                        std::size_t m = 0) {
  if (!(constant > 0.0))
    throw std::invalid_argument("bound_rhs: constant must be positive");
  if (!(in.alpha >= 0.0 && in.alpha <= 1.0))
    throw std::invalid_argument("bound_rhs: need alpha in [0, 1]");
  if (!(in.v_h >= 0.0) || !(in.v_not_h >= 0.0))
    throw std::invalid_argument("bound_rhs: variances must be non-negative");
  if (in.experts == 0 || in.users == 0 || in.horizon == 0)
    throw std::invalid_argument("bound_rhs: counts must be positive");
  if (std::fabs(in.entropy - binary_entropy(in.alpha)) > 1e-12)
    throw std::invalid_argument("bound_rhs: entropy field disagrees with alpha");

  const double t = double(in.horizon);
  const double ln_m = std::log(double(in.experts));
  const double n = double(in.users);
  const double tilde = std::sqrt(t * floored_loglog(std::max(t, 1.0)));
  auto xlog = [](double a) { return a > 0.0 ? a * std::log(1.0 / a) : 0.0; };
  const double split =
      n * (in.v_h * xlog(in.alpha) + in.v_not_h * xlog(1.0 - in.alpha));

  switch (kind) {
    case BoundKind::simple:
      return constant * std::sqrt(t * (ln_m + n));
    case BoundKind::entropy:
      return constant *
             (std::sqrt(in.alpha * t * (ln_m + n * in.entropy)) + tilde);
    case BoundKind::variance_full:
      return constant * (std::sqrt(in.v_h * ln_m + split) + tilde);
    case BoundKind::variance_split:
      return constant * (std::sqrt(split) + tilde);
    case BoundKind::grouped:
      if (m == 0)
        throw std::invalid_argument("bound_rhs: grouped bound requires m");
      return constant *
             (std::sqrt(t * (double(m) * ln_m + n * std::log(double(m)))) +
              tilde);
  }
  throw std::invalid_argument("bound_rhs: unknown kind");
}

// Reference learner with one specialist per (expert, user-subset) pair:
// specialist (x, S) advises expert x and is awake exactly when the acting
// user is in S. Awake specialists are scored on the expert's posted loss;
// sleeping ones receive the played mixture's loss, which multiplies their
// weight by exactly the normalization factor and so freezes their
// renormalized weight.
class SpecialistsReference : public OnlineLearner {
 public:
  SpecialistsReference(std::size_t experts, std::size_t users,
                       std::uint64_t horizon)
      : experts_(experts), users_(users) {
    detail::check_dimensions(experts, users, horizon);
    if (users > 10 || experts * (std::size_t(1) << users) > 100000)
      throw std::invalid_argument("specialists: instance too large");
    subsets_ = std::size_t(1) << users;
    const double rate = std::sqrt(
        (std::log(double(experts)) + double(users) * std::log(2.0)) /
        double(horizon));
    inst_ = std::make_unique<MwmInstance>(experts * subsets_, rate, 1.0);
  }

  std::size_t num_experts() const override { return experts_; }
  std::size_t num_users() const override { return users_; }
  std::size_t subset_count() const { return subsets_; }
  std::uint64_t rounds() const { return rounds_; }
  const MwmInstance& instance() const { return *inst_; }

  Prediction predict(std::size_t u) const override {
    if (u >= users_) throw std::out_of_range("specialists: user index out of range");
    const std::vector<double> a = inst_->weights();
    std::vector<double> w(experts_, 0.0);
    double total = 0.0;
    for (std::size_t x = 0; x < experts_; ++x)
      for (std::size_t s = 0; s < subsets_; ++s)
        if ((s >> u) & 1) {
          w[x] += a[x * subsets_ + s];
          total += a[x * subsets_ + s];
        }
    return detail::finish_prediction(std::move(w), total, rounds_ + 1);
  }

  void update(std::size_t u, std::span<const double> losses) override {
    step(u, losses);
  }

  Prediction step(std::size_t u, std::span<const double> losses,
                  std::size_t next_user = kNoUser) override {
    (void)next_user;
    detail::check_round_inputs(u, users_, losses, experts_);
    Prediction p = predict(u);
    last_prediction_loss_ = detail::mixture_loss(p.distribution, losses);
    std::vector<double> fed(experts_ * subsets_);
    for (std::size_t x = 0; x < experts_; ++x)
      for (std::size_t s = 0; s < subsets_; ++s)
        fed[x * subsets_ + s] =
            ((s >> u) & 1) ? losses[x] : last_prediction_loss_;
    inst_->update(fed);
    ++rounds_;
    return p;
  }

  double last_prediction_loss() const { return last_prediction_loss_; }
  double last_top_loss() const { return inst_->last_expected_loss(); }

 private:
  std::size_t experts_;
  std::size_t users_;
  std::size_t subsets_ = 0;
  std::uint64_t rounds_ = 0;
  double last_prediction_loss_ = 0.0;
  std::unique_ptr<MwmInstance> inst_;
};

}  // namespace cpea
