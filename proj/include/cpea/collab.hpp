#pragma once
// Collaborative regret-minimization learners. Each user round plays a
// distribution over experts built from a top-level weighted-majority instance
// and per-expert participation learners; the participation state decides how
// much of each expert's weight is active for the acting user.
//
// BasicLearner keeps one binary participation learner per (expert, user).
// FullLearner keeps one participation-grid learner per (expert, V) for V
// ranging over powers of two up to the horizon, feeds it a variance-penalized
// relative loss, and groups V values whose learning rates coincide (such
// groups receive bitwise-identical inputs forever, so one instance serves the
// whole group). DoublingLearner wraps a fixed-horizon factory and restarts
// with a doubled horizon whenever the current one is exhausted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#if defined(__linux__)
#include <sys/mman.h>
#endif

#include "cpea/learner.hpp"
#include "cpea/mwm.hpp"
#include "cpea/theta.hpp"

namespace cpea {

namespace detail {

// Zero-filled 2 MiB-aligned buffer of doubles, flagged for transparent huge
// pages so large per-round state walks don't stall on page translation.
class AlignedSlab {
 public:
  AlignedSlab() = default;
  explicit AlignedSlab(std::size_t count) {
    if (count == 0) return;
    bytes_ = (count * sizeof(double) + kAlign - 1) / kAlign * kAlign;
    ptr_ = static_cast<double*>(std::aligned_alloc(kAlign, bytes_));
    if (ptr_ == nullptr) throw std::bad_alloc();
#if defined(__linux__)
    ::madvise(ptr_, bytes_, MADV_HUGEPAGE);
#endif
    std::fill_n(ptr_, bytes_ / sizeof(double), 0.0);
  }
  AlignedSlab(AlignedSlab&& other) noexcept
      : ptr_(other.ptr_), bytes_(other.bytes_) {
    other.ptr_ = nullptr;
    other.bytes_ = 0;
  }
  AlignedSlab& operator=(AlignedSlab&& other) noexcept {
    if (this != &other) {
      std::free(ptr_);
      ptr_ = other.ptr_;
      bytes_ = other.bytes_;
      other.ptr_ = nullptr;
      other.bytes_ = 0;
    }
    return *this;
  }
  AlignedSlab(const AlignedSlab&) = delete;
  AlignedSlab& operator=(const AlignedSlab&) = delete;
  ~AlignedSlab() { std::free(ptr_); }

  double* data() { return ptr_; }

 private:
  static constexpr std::size_t kAlign = std::size_t(1) << 21;
  double* ptr_ = nullptr;
  std::size_t bytes_ = 0;
};

}  // namespace detail

// One binary participation learner per (expert, user): option 1 participates
// in the expert's ranking, option 0 abstains and scores the played mixture.
class BasicLearner : public OnlineLearner {
 public:
  BasicLearner(std::size_t experts, std::size_t users, std::uint64_t horizon)
      : experts_(experts), users_(users), horizon_(horizon) {
    detail::check_dimensions(experts, users, horizon);
    const double top_rate =
        experts == 1 ? 0.25
                     : std::sqrt(std::log(double(experts)) / double(horizon));
    top_ = std::make_unique<MwmInstance>(experts, top_rate, 1.0);
    const double bin_rate = std::sqrt(double(users) / double(horizon));
    binaries_.reserve(experts * users);
    for (std::size_t i = 0; i < experts * users; ++i)
      binaries_.emplace_back(std::vector<double>{0.5, 0.5},
                             std::vector<double>{bin_rate, bin_rate}, 1.0);
  }

  std::size_t num_experts() const override { return experts_; }
  std::size_t num_users() const override { return users_; }
  std::uint64_t horizon() const { return horizon_; }
  std::uint64_t rounds() const { return rounds_; }

  const MwmInstance& top() const { return *top_; }
  const MwmInstance& participation(std::size_t x, std::size_t u) const {
    if (x >= experts_) throw std::out_of_range("collab: expert index out of range");
    if (u >= users_) throw std::out_of_range("collab: user index out of range");
    return binaries_[x * users_ + u];
  }

  // Active share of expert x's weight for user u: the participation
  // learner's output weight on option 1.
  double active_share(std::size_t x, std::size_t u) const {
    return participation(x, u).weight(1);
  }

  Prediction predict(std::size_t u) const override {
    if (u >= users_) throw std::out_of_range("collab: user index out of range");
    std::vector<double> w(experts_);
    double total = 0.0;
    const std::vector<double> a = top_->weights();
    for (std::size_t x = 0; x < experts_; ++x) {
      w[x] = active_share(x, u) * a[x];
      total += w[x];
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
    const double lp = last_prediction_loss_;
    std::vector<double> top_losses(experts_);
    for (std::size_t x = 0; x < experts_; ++x) {
      const double z = active_share(x, u);
      top_losses[x] = lp + z * (losses[x] - lp);
      const double pair[2] = {lp, losses[x]};
      binaries_[x * users_ + u].update(pair);
    }
    top_->update(top_losses);
    ++rounds_;
    return p;
  }

  // Mixture loss of the most recent round, and the top instance's expected
  // loss for the same round; the two agree up to floating-point noise.
  double last_prediction_loss() const { return last_prediction_loss_; }
  double last_top_loss() const { return top_->last_expected_loss(); }

 private:
  std::size_t experts_;
  std::size_t users_;
  std::uint64_t horizon_;
  std::uint64_t rounds_ = 0;
  double last_prediction_loss_ = 0.0;
  std::unique_ptr<MwmInstance> top_;
  std::vector<MwmInstance> binaries_;
};

// Full learner: (expert, V) pairs with V the powers of two up to the horizon.
// Each pair owns a participation-grid learner fed the variance-penalized
// relative loss d + eps_V d^2 with d = l(x) - l(p); the top instance is fed
// the blended loss l(p) + z (l(x) - l(p)).
class FullLearner : public OnlineLearner {
 public:
  FullLearner(std::size_t experts, std::size_t users, std::uint64_t horizon)
      : experts_(experts), users_(users), horizon_(horizon) {
    detail::check_dimensions(experts, users, horizon);
    const double numer =
        std::log(double(experts)) + floored_loglog(double(horizon));
    for (std::uint64_t v = 1; v <= horizon; v *= 2) {
      v_grid_.push_back(v);
      const double rate = std::min(0.25, std::sqrt(numer / double(v)));
      if (group_rate_.empty() || rate != group_rate_.back()) {
        group_rate_.push_back(rate);
        group_mult_.push_back(0);
      }
      group_of_v_.push_back(group_rate_.size() - 1);
      ++group_mult_.back();
    }
    double max_rate = 0.0;
    for (double r : group_rate_) max_rate = std::max(max_rate, r);
    loss_bound_ = 2.0 + 4.0 * max_rate;

    const std::size_t groups = group_rate_.size();
    auto cfg = ThetaGridConfig::make(users, horizon, loss_bound_);
    // All cells pool their state in two slabs laid out so that one round's
    // pass over the cells (weights, acting user's row, next user's row) is
    // three contiguous streams instead of experts*groups scattered blocks.
    const std::size_t cells = experts * groups;
    const std::size_t pitch = (cfg->class_count() + 7) & ~std::size_t(7);
    wt_slab_ = detail::AlignedSlab(cells * pitch);
    z_slab_ = detail::AlignedSlab(cells * pitch * users);
    cells_.reserve(cells);
    for (std::size_t i = 0; i < cells; ++i)
      cells_.emplace_back(cfg, wt_slab_.data() + i * pitch,
                          z_slab_.data() + i * pitch, cells * pitch);

    std::vector<double> weights(experts * groups);
    std::vector<double> rates(experts * groups);
    const double unit = 1.0 / (double(experts) * double(v_grid_.size()));
    for (std::size_t x = 0; x < experts_; ++x)
      for (std::size_t g = 0; g < groups; ++g) {
        weights[x * groups + g] = double(group_mult_[g]) * unit;
        rates[x * groups + g] = group_rate_[g];
      }
    top_ = std::make_unique<MwmInstance>(std::move(weights), std::move(rates), 1.0);
  }

  std::size_t num_experts() const override { return experts_; }
  std::size_t num_users() const override { return users_; }
  std::uint64_t horizon() const { return horizon_; }
  std::uint64_t rounds() const { return rounds_; }
  double loss_bound() const { return loss_bound_; }

  const std::vector<std::uint64_t>& v_grid() const { return v_grid_; }
  std::size_t group_count() const { return group_rate_.size(); }
  std::size_t group_of_v(std::size_t vi) const { return group_of_v_.at(vi); }
  std::size_t group_multiplicity(std::size_t g) const { return group_mult_.at(g); }
  double rate_for_v(std::size_t vi) const { return group_rate_[group_of_v_.at(vi)]; }
  std::size_t pair_count() const { return experts_ * v_grid_.size(); }

  const MwmInstance& top() const { return *top_; }
  const std::vector<ThetaInstance>& cells() const { return cells_; }
  const ThetaInstance& cell(std::size_t x, std::size_t g) const {
    if (x >= experts_) throw std::out_of_range("collab: expert index out of range");
    return cells_.at(x * group_count() + g);
  }
  const ThetaInstance& participation_for_v(std::size_t x, std::size_t vi) const {
    return cell(x, group_of_v_.at(vi));
  }

  // Logical output weight of the (x, V) pair: grouped pairs share the
  // aggregated top weight evenly.
  double top_weight_for_v(std::size_t x, std::size_t vi) const {
    const std::size_t g = group_of_v_.at(vi);
    if (x >= experts_) throw std::out_of_range("collab: expert index out of range");
    return top_->weight(x * group_count() + g) / double(group_mult_[g]);
  }

  Prediction predict(std::size_t u) const override {
    if (u >= users_) throw std::out_of_range("collab: user index out of range");
    const std::size_t groups = group_count();
    std::vector<double> w(experts_, 0.0);
    double total = 0.0;
    const std::vector<double> a = top_->weights();
    for (std::size_t x = 0; x < experts_; ++x) {
      for (std::size_t g = 0; g < groups; ++g) {
        const double v = cells_[x * groups + g].query(u) * a[x * groups + g];
        w[x] += v;
        total += v;
      }
    }
    return detail::finish_prediction(std::move(w), total, rounds_ + 1);
  }

  void update(std::size_t u, std::span<const double> losses) override {
    step(u, losses);
  }

  Prediction step(std::size_t u, std::span<const double> losses,
                  std::size_t next_user = kNoUser) override {
    detail::check_round_inputs(u, users_, losses, experts_);
    const std::size_t groups = group_count();
    const std::vector<double> a = top_->weights();
    std::vector<double> z(experts_ * groups);
    std::vector<double> w(experts_, 0.0);
    double total = 0.0;
    for (std::size_t x = 0; x < experts_; ++x)
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t i = x * groups + g;
        z[i] = cells_[i].query(u);
        const double v = z[i] * a[i];
        w[x] += v;
        total += v;
      }
    Prediction p = detail::finish_prediction(std::move(w), total, rounds_ + 1);

    last_prediction_loss_ = detail::mixture_loss(p.distribution, losses);
    const double lp = last_prediction_loss_;
    std::vector<double> top_losses(experts_ * groups);
    for (std::size_t x = 0; x < experts_; ++x) {
      const double d = losses[x] - lp;
      for (std::size_t g = 0; g < groups; ++g) {
        const std::size_t i = x * groups + g;
        top_losses[i] = lp + z[i] * d;
        // The penalty maps |d| <= 2 into [-2, 3]; the clamp strips rounding
        // overshoot past the participation learners' loss bound.
        const double penalized =
            std::clamp(d + group_rate_[g] * d * d, -2.0, 3.0);
        cells_[i].update_given_query(u, penalized, z[i], next_user);
      }
    }
    top_->update(top_losses);
    ++rounds_;
    return p;
  }

  double last_prediction_loss() const { return last_prediction_loss_; }
  double last_top_loss() const { return top_->last_expected_loss(); }

 private:
  std::size_t experts_;
  std::size_t users_;
  std::uint64_t horizon_;
  std::uint64_t rounds_ = 0;
  double loss_bound_ = 0.0;
  double last_prediction_loss_ = 0.0;
  std::vector<std::uint64_t> v_grid_;
  std::vector<double> group_rate_;
  std::vector<std::uint32_t> group_mult_;
  std::vector<std::size_t> group_of_v_;
  std::unique_ptr<MwmInstance> top_;
  detail::AlignedSlab wt_slab_;
  detail::AlignedSlab z_slab_;
  std::vector<ThetaInstance> cells_;
};

// Horizon-doubling wrapper: starts the wrapped learner with horizon 2 and,
// whenever the next round would exceed the active horizon, discards the
// state and rebuilds with twice the horizon.
class DoublingLearner : public OnlineLearner {
 public:
  using Factory = std::function<std::unique_ptr<OnlineLearner>(std::uint64_t)>;

  static constexpr std::uint64_t kInitialHorizon = 2;

  explicit DoublingLearner(Factory factory)
      : factory_(std::move(factory)), active_(make_active(kInitialHorizon)) {}

  std::size_t num_experts() const override { return active_->num_experts(); }
  std::size_t num_users() const override { return active_->num_users(); }
  std::uint64_t horizon() const { return horizon_; }
  std::uint64_t rounds() const { return rounds_; }
  const std::vector<std::uint64_t>& restarts() const { return restarts_; }
  const OnlineLearner& active() const { return *active_; }

  // Worst-case ratio of the wrapped learner's sqrt-regret constant to the
  // fixed-horizon one, from the geometric sum over doubling epochs.
  static double regret_factor() {
    return (1.0 + std::sqrt(2.0)) / (std::sqrt(2.0) - 1.0);
  }

  Prediction predict(std::size_t u) const override {
    Prediction p = active_->predict(u);
    p.round = rounds_ + 1;
    return p;
  }

  void update(std::size_t u, std::span<const double> losses) override {
    active_->update(u, losses);
    advance();
  }

  Prediction step(std::size_t u, std::span<const double> losses,
                  std::size_t next_user = kNoUser) override {
    Prediction p = active_->step(u, losses, next_user);
    advance();
    p.round = rounds_;
    return p;
  }

 private:
  std::unique_ptr<OnlineLearner> make_active(std::uint64_t horizon) const {
    auto learner = factory_(horizon);
    if (!learner) throw std::invalid_argument("doubling: factory returned null");
    return learner;
  }

  void advance() {
    ++rounds_;
    while (rounds_ + 1 > horizon_) {
      horizon_ *= 2;
      active_ = make_active(horizon_);
      restarts_.push_back(rounds_ + 1);
    }
  }

  Factory factory_;
  std::uint64_t horizon_ = kInitialHorizon;
  std::uint64_t rounds_ = 0;
  std::vector<std::uint64_t> restarts_;
  std::unique_ptr<OnlineLearner> active_;
};

}  // namespace cpea
