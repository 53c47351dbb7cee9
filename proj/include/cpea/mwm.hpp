#pragma once
// Multiplicative-weights mixture with per-expert learning rates and arbitrary
// positive initial weights.
//
// Internal weights w(x) sum to 1; the played distribution ("output weights")
// is A(x) = w(x) eps(x) / sum_y w(y) eps(y).  An update with loss vector l
// first computes L = sum_x A(x) l(x) and then applies
//
//     w(x) <- w(x) * (1 + eps(x) * (L - l(x)))
//
// which conserves the total internal weight exactly (the cross terms cancel
// because L is the A-weighted mean of l).  Rates are clamped to 1/(4c) for
// loss bound c, so update factors stay inside [1/2, 3/2] for in-bound losses
// and every weight remains strictly positive.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpea {

class MwmInstance {
 public:
  // Weights are renormalized to an exact unit total on this cadence; between
  // renormalizations the total only drifts by float rounding.
  static constexpr std::uint64_t kRenormPeriod = std::uint64_t(1) << 12;

  MwmInstance(std::vector<double> initial_weights, std::vector<double> rates,
              double loss_bound)
      : w_(std::move(initial_weights)), eps_(std::move(rates)), c_(loss_bound) {
    if (w_.empty()) throw std::invalid_argument("mwm: need at least one expert");
    if (eps_.size() != w_.size())
      throw std::invalid_argument("mwm: rates/weights size mismatch (" +
                                  std::to_string(eps_.size()) + " vs " +
                                  std::to_string(w_.size()) + ")");
    if (!(std::isfinite(c_) && c_ > 0.0))
      throw std::invalid_argument("mwm: loss bound must be positive and finite");
    double total = 0.0;
    for (double w : w_) {
      if (!(std::isfinite(w) && w > 0.0))
        throw std::invalid_argument("mwm: initial weights must be strictly positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
      throw std::invalid_argument("mwm: initial weights must sum to 1, got " +
                                  std::to_string(total));
    const double cap = 1.0 / (4.0 * c_);
    for (double& e : eps_) {
      if (!(std::isfinite(e) && e > 0.0))
        throw std::invalid_argument("mwm: learning rates must be strictly positive");
      if (e > cap) e = cap;
    }
  }

  // Uniform initial weights.
  MwmInstance(std::size_t num_experts, std::vector<double> rates, double loss_bound)
      : MwmInstance(std::vector<double>(check_count(num_experts),
                                        1.0 / double(num_experts)),
                    std::move(rates), loss_bound) {}

  // Uniform initial weights and one shared rate.
  MwmInstance(std::size_t num_experts, double rate, double loss_bound)
      : MwmInstance(num_experts, std::vector<double>(check_count(num_experts), rate),
                    loss_bound) {}

  std::size_t size() const { return w_.size(); }
  double loss_bound() const { return c_; }
  double rate(std::size_t i) const { return eps_[i]; }
  const std::vector<double>& rates() const { return eps_; }
  double internal_weight(std::size_t i) const { return w_[i]; }
  const std::vector<double>& internal_weights() const { return w_; }
  std::uint64_t updates() const { return updates_; }

  double internal_total() const {
    double s = 0.0;
    for (double w : w_) s += w;
    return s;
  }

  // Output weight of expert i: w(i) eps(i) / sum w eps.
  double weight(std::size_t i) const {
    if (i >= w_.size()) throw std::out_of_range("mwm: expert index out of range");
    return w_[i] * eps_[i] / rated_total();
  }

  // Full output distribution.
  std::vector<double> weights() const {
    std::vector<double> out(w_.size());
    const double norm = rated_total();
    for (std::size_t i = 0; i < w_.size(); ++i) out[i] = w_[i] * eps_[i] / norm;
    return out;
  }

  // Expected loss of the output distribution: sum_x A(x) l(x).
  double expected_loss(std::span<const double> losses) const {
    check_losses(losses);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      num += w_[i] * eps_[i] * losses[i];
      den += w_[i] * eps_[i];
    }
    return num / den;
  }

  void update(std::span<const double> losses) {
    check_losses(losses);
    bool constant = true;
    for (double l : losses)
      if (l != losses[0]) { constant = false; break; }
    if (constant) {
      // Every factor is exactly 1: the expected loss of any distribution over
      // equal losses is that common value, so weights are left untouched.
      last_expected_ = losses[0];
      if (++updates_ % kRenormPeriod == 0) renormalize();
      return;
    }
    const double expected = expected_loss(losses);
    for (std::size_t i = 0; i < w_.size(); ++i) {
      const double factor = 1.0 + eps_[i] * (expected - losses[i]);
      assert(factor > 0.0 && "mwm: losses far outside the loss bound");
      w_[i] *= factor;
    }
    last_expected_ = expected;
    if (++updates_ % kRenormPeriod == 0) renormalize();
  }

  // Expected loss used by the most recent update.
  double last_expected_loss() const { return last_expected_; }

  void renormalize() {
    const double total = internal_total();
    for (double& w : w_) w /= total;
  }

 private:
  static std::size_t check_count(std::size_t n) {
    if (n == 0) throw std::invalid_argument("mwm: need at least one expert");
    return n;
  }

  double rated_total() const {
    double s = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) s += w_[i] * eps_[i];
    return s;
  }

  void check_losses(std::span<const double> losses) const {
    if (losses.size() != w_.size())
      throw std::invalid_argument("mwm: loss vector has size " +
                                  std::to_string(losses.size()) + ", expected " +
                                  std::to_string(w_.size()));
    for (double l : losses)
      if (!std::isfinite(l))
        throw std::invalid_argument("mwm: losses must be finite");
  }

  std::vector<double> w_;
  std::vector<double> eps_;
  double c_;
  std::uint64_t updates_ = 0;
  double last_expected_ = 0.0;
};

}  // namespace cpea
