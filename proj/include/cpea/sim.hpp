#pragma once
// Interaction-model simulation: schedules users, draws true losses from a
// per-cluster quality map, lets dishonest users substitute posted vectors,
// drives a learner round by round, and extracts regret metrics. All draws
// come from streams keyed by (seed, round), so any round is reproducible
// without replaying the ones before it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpea/collab.hpp"
#include "cpea/learner.hpp"
#include "cpea/mwm.hpp"
#include "cpea/oracle.hpp"
#include "cpea/rng.hpp"
#include "cpea/trajectory.hpp"

namespace cpea {

enum class Schedule { round_robin, iid };

enum class AdversaryTag {
  truthful_noise,           // posts the true losses
  alternating_indifferent,  // target expert alternates +/- magnitude, rest 0
  boost_target,             // target always -magnitude, rest +magnitude
  anti_honest,              // posts -magnitude * true losses
};

struct AdversaryConfig {
  AdversaryTag tag = AdversaryTag::truthful_noise;
  std::size_t target = 0;
  std::uint64_t phase = 0;
  double magnitude = 1.0;
};

struct Scenario {
  std::size_t experts = 1;
  std::size_t users = 1;
  std::uint64_t horizon = 2;
  std::vector<std::size_t> honest;
  Schedule schedule = Schedule::round_robin;
  std::vector<double> schedule_weights;  // iid only; one weight per user
  std::vector<std::size_t> cluster_of;   // one cluster id per user
  std::vector<std::vector<double>> cluster_means;  // cluster -> mean per expert
  double noise = 0.0;
  std::vector<std::pair<std::size_t, AdversaryConfig>> adversaries;
  std::uint64_t seed = 0;
};

inline const char* adversary_tag_name(AdversaryTag tag) {
  switch (tag) {
    case AdversaryTag::truthful_noise: return "truthful_noise";
    case AdversaryTag::alternating_indifferent: return "alternating_indifferent";
    case AdversaryTag::boost_target: return "boost_target";
    case AdversaryTag::anti_honest: return "anti_honest";
  }
  throw std::invalid_argument("adversary_tag_name: unknown tag");
}

inline AdversaryTag adversary_tag_from(const std::string& name) {
  if (name == "truthful_noise") return AdversaryTag::truthful_noise;
  if (name == "alternating_indifferent") return AdversaryTag::alternating_indifferent;
  if (name == "boost_target") return AdversaryTag::boost_target;
  if (name == "anti_honest") return AdversaryTag::anti_honest;
  throw std::invalid_argument("adversary_tag_from: unknown tag '" + name + "'");
}

inline void validate_scenario(const Scenario& sc) {
  detail::check_dimensions(sc.experts, sc.users, sc.horizon);
  if (sc.honest.empty())
    throw std::invalid_argument("scenario: honest set must be non-empty");

  std::vector<char> honest_mask(sc.users, 0);
  for (std::size_t u : sc.honest) {
    if (u >= sc.users) throw std::invalid_argument("scenario: honest user out of range");
    if (honest_mask[u]) throw std::invalid_argument("scenario: duplicate honest user");
    honest_mask[u] = 1;
  }

  if (sc.schedule == Schedule::iid) {
    if (sc.schedule_weights.size() != sc.users)
      throw std::invalid_argument("scenario: iid schedule needs one weight per user");
    for (double w : sc.schedule_weights)
      if (!(w > 0.0) || !std::isfinite(w))
        throw std::invalid_argument("scenario: schedule weights must be positive");
  }

  if (sc.cluster_of.size() != sc.users)
    throw std::invalid_argument("scenario: need one cluster id per user");
  if (sc.cluster_means.empty())
    throw std::invalid_argument("scenario: need at least one cluster");
  for (std::size_t c : sc.cluster_of)
    if (c >= sc.cluster_means.size())
      throw std::invalid_argument("scenario: cluster id out of range");
  for (const std::vector<double>& row : sc.cluster_means) {
    if (row.size() != sc.experts)
      throw std::invalid_argument("scenario: cluster means need one entry per expert");
    for (double m : row)
      if (!(std::isfinite(m) && std::fabs(m) <= 1.0))
        throw std::invalid_argument("scenario: mean losses must lie in [-1, 1]");
  }
  if (!(sc.noise >= 0.0) || !std::isfinite(sc.noise))
    throw std::invalid_argument("scenario: noise must be non-negative");

  std::vector<char> covered(sc.users, 0);
  for (const auto& [u, cfg] : sc.adversaries) {
    if (u >= sc.users) throw std::invalid_argument("scenario: adversary user out of range");
    if (honest_mask[u])
      throw std::invalid_argument("scenario: honest users cannot have an adversary strategy");
    if (covered[u]) throw std::invalid_argument("scenario: duplicate adversary entry");
    covered[u] = 1;
    if (cfg.target >= sc.experts)
      throw std::invalid_argument("scenario: adversary target out of range");
    if (!(cfg.magnitude >= 0.0 && cfg.magnitude <= 1.0))
      throw std::invalid_argument("scenario: adversary magnitude must lie in [0, 1]");
  }
  for (std::size_t u = 0; u < sc.users; ++u)
    if (!honest_mask[u] && !covered[u])
      throw std::invalid_argument("scenario: dishonest user " + std::to_string(u) +
                                  " has no adversary strategy");
}

namespace detail {

inline std::vector<char> scenario_honest_mask(const Scenario& sc) {
  std::vector<char> mask(sc.users, 0);
  for (std::size_t u : sc.honest) mask[u] = 1;
  return mask;
}

// Per-round keys: sub-stream 1 draws the acting user, sub-stream 2 the
// true losses.
inline rng::Stream round_stream(const Scenario& sc, std::uint64_t t,
                                std::uint64_t which) {
  return rng::Stream{rng::derive(sc.seed, t, which)};
}

}  // namespace detail

inline std::size_t scheduled_user(const Scenario& sc, std::uint64_t t) {
  if (sc.schedule == Schedule::round_robin)
    return std::size_t((t - 1) % sc.users);
  rng::Stream st = detail::round_stream(sc, t, 1);
  double total = 0.0;
  for (double w : sc.schedule_weights) total += w;
  double point = st.next_unit() * total;
  for (std::size_t u = 0; u + 1 < sc.users; ++u) {
    point -= sc.schedule_weights[u];
    if (point < 0.0) return u;
  }
  return sc.users - 1;
}

inline std::vector<double> true_losses_for(const Scenario& sc, std::uint64_t t,
                                           std::size_t u) {
  rng::Stream st = detail::round_stream(sc, t, 2);
  const std::vector<double>& means = sc.cluster_means[sc.cluster_of[u]];
  std::vector<double> l(sc.experts);
  for (std::size_t x = 0; x < sc.experts; ++x) {
    const double v = means[x] + sc.noise * st.next_symmetric();
    l[x] = std::clamp(v, -1.0, 1.0);
  }
  return l;
}

inline std::vector<double> adversary_post(const AdversaryConfig& cfg,
                                          std::size_t experts, std::uint64_t t,
                                          std::span<const double> true_losses) {
  std::vector<double> v(experts, 0.0);
  switch (cfg.tag) {
    case AdversaryTag::truthful_noise:
      v.assign(true_losses.begin(), true_losses.end());
      break;
    case AdversaryTag::alternating_indifferent:
      v[cfg.target] = ((t + cfg.phase) & 1) ? -cfg.magnitude : cfg.magnitude;
      break;
    case AdversaryTag::boost_target:
      v.assign(experts, cfg.magnitude);
      v[cfg.target] = -cfg.magnitude;
      break;
    case AdversaryTag::anti_honest:
      for (std::size_t x = 0; x < experts; ++x)
        v[x] = -cfg.magnitude * true_losses[x];
      break;
  }
  return v;
}

// Baseline: one independent weighted-majority instance per user, each tuned
// to its expected share of the rounds.
class IndependentBaseline : public OnlineLearner {
 public:
  IndependentBaseline(std::size_t experts, std::size_t users,
                      std::uint64_t horizon, std::span<const double> shares)
      : experts_(experts), users_(users) {
    detail::check_dimensions(experts, users, horizon);
    double total = 0.0;
    for (double s : shares) total += s;
    for (std::size_t u = 0; u < users; ++u) {
      const double share = shares.empty() ? 1.0 / double(users) : shares[u] / total;
      const double t_u = std::max(2.0, std::round(double(horizon) * share));
      instances_.emplace_back(experts, top_rate(experts, t_u), 1.0);
    }
  }

  static double top_rate(std::size_t experts, double rounds) {
    return experts == 1 ? 0.25 : std::sqrt(std::log(double(experts)) / rounds);
  }

  std::size_t num_experts() const override { return experts_; }
  std::size_t num_users() const override { return users_; }
  const MwmInstance& instance(std::size_t u) const { return instances_.at(u); }

  Prediction predict(std::size_t u) const override {
    if (u >= users_) throw std::out_of_range("baseline: user index out of range");
    return Prediction{instances_[u].weights(), rounds_ + 1};
  }

  void update(std::size_t u, std::span<const double> losses) override {
    detail::check_round_inputs(u, users_, losses, experts_);
    instances_[u].update(losses);
    ++rounds_;
  }

 private:
  std::size_t experts_;
  std::size_t users_;
  std::uint64_t rounds_ = 0;
  std::vector<MwmInstance> instances_;
};

// Baseline: one pooled instance updated on every round; optionally
// clairvoyant, updating only on rounds acted by a designated honest set.
class PooledBaseline : public OnlineLearner {
 public:
  PooledBaseline(std::size_t experts, std::size_t users, std::uint64_t horizon,
                 std::vector<char> update_mask = {})
      : experts_(experts), users_(users), update_mask_(std::move(update_mask)) {
    detail::check_dimensions(experts, users, horizon);
    double tuned = double(horizon);
    if (!update_mask_.empty()) {
      std::size_t active = 0;
      for (char c : update_mask_) active += c ? 1 : 0;
      tuned = std::max(2.0, double(horizon) * double(active) / double(users));
    }
    inst_ = std::make_unique<MwmInstance>(
        experts, IndependentBaseline::top_rate(experts, tuned), 1.0);
  }

  std::size_t num_experts() const override { return experts_; }
  std::size_t num_users() const override { return users_; }
  const MwmInstance& instance() const { return *inst_; }

  Prediction predict(std::size_t u) const override {
    if (u >= users_) throw std::out_of_range("baseline: user index out of range");
    return Prediction{inst_->weights(), rounds_ + 1};
  }

  void update(std::size_t u, std::span<const double> losses) override {
    detail::check_round_inputs(u, users_, losses, experts_);
    if (update_mask_.empty() || update_mask_[u]) inst_->update(losses);
    ++rounds_;
  }

 private:
  std::size_t experts_;
  std::size_t users_;
  std::uint64_t rounds_ = 0;
  std::vector<char> update_mask_;
  std::unique_ptr<MwmInstance> inst_;
};

enum class LearnerKind {
  basic,
  full,
  specialists,
  independent,
  pooled,
  clairvoyant,
};

inline const char* learner_kind_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::basic: return "basic";
    case LearnerKind::full: return "full";
    case LearnerKind::specialists: return "specialists";
    case LearnerKind::independent: return "independent";
    case LearnerKind::pooled: return "pooled";
    case LearnerKind::clairvoyant: return "clairvoyant";
  }
  throw std::invalid_argument("learner_kind_name: unknown kind");
}

inline LearnerKind learner_kind_from(const std::string& name) {
  if (name == "basic") return LearnerKind::basic;
  if (name == "full") return LearnerKind::full;
  if (name == "specialists") return LearnerKind::specialists;
  if (name == "independent") return LearnerKind::independent;
  if (name == "pooled") return LearnerKind::pooled;
  if (name == "clairvoyant") return LearnerKind::clairvoyant;
  throw std::invalid_argument("learner_kind_from: unknown kind '" + name + "'");
}

inline std::unique_ptr<OnlineLearner> make_learner(const Scenario& sc,
                                                   LearnerKind kind) {
  switch (kind) {
    case LearnerKind::basic:
      return std::make_unique<BasicLearner>(sc.experts, sc.users, sc.horizon);
    case LearnerKind::full:
      return std::make_unique<FullLearner>(sc.experts, sc.users, sc.horizon);
    case LearnerKind::specialists:
      return std::make_unique<SpecialistsReference>(sc.experts, sc.users,
                                                    sc.horizon);
    case LearnerKind::independent:
      return std::make_unique<IndependentBaseline>(sc.experts, sc.users,
                                                   sc.horizon,
                                                   sc.schedule == Schedule::iid
                                                       ? sc.schedule_weights
                                                       : std::vector<double>{});
    case LearnerKind::pooled:
      return std::make_unique<PooledBaseline>(sc.experts, sc.users, sc.horizon);
    case LearnerKind::clairvoyant:
      return std::make_unique<PooledBaseline>(sc.experts, sc.users, sc.horizon,
                                              detail::scenario_honest_mask(sc));
  }
  throw std::invalid_argument("make_learner: unknown kind");
}

inline Trajectory run_scenario(const Scenario& sc, OnlineLearner& learner) {
  validate_scenario(sc);
  if (learner.num_experts() != sc.experts || learner.num_users() != sc.users)
    throw std::invalid_argument("run_scenario: learner shape does not match the scenario");

  const std::vector<char> mask = detail::scenario_honest_mask(sc);
  std::vector<std::pair<char, AdversaryConfig>> strategy(sc.users, {0, {}});
  for (const auto& [u, cfg] : sc.adversaries) strategy[u] = {1, cfg};

  Trajectory traj;
  traj.rounds.reserve(sc.horizon);
  for (std::uint64_t t = 1; t <= sc.horizon; ++t) {
    RoundRecord r;
    r.t = t;
    r.user = scheduled_user(sc, t);
    r.honest = mask[r.user] != 0;
    r.true_losses = true_losses_for(sc, t, r.user);
    r.posted_losses = r.honest ? r.true_losses
                               : adversary_post(strategy[r.user].second,
                                                sc.experts, t, r.true_losses);
    const std::size_t next =
        t < sc.horizon ? scheduled_user(sc, t + 1) : kNoUser;
    r.prediction = learner.step(r.user, r.posted_losses, next);
    r.expected_loss = 0.0;
    for (std::size_t x = 0; x < sc.experts; ++x)
      r.expected_loss += r.prediction.distribution[x] * r.true_losses[x];
    traj.rounds.push_back(std::move(r));
  }
  return traj;
}

inline Trajectory run_scenario(const Scenario& sc, LearnerKind kind) {
  validate_scenario(sc);
  std::unique_ptr<OnlineLearner> learner = make_learner(sc, kind);
  return run_scenario(sc, *learner);
}

struct MetricsReport {
  std::size_t opt_expert = 0;
  double opt_value = 0.0;
  double honest_loss = 0.0;
  double final_regret = 0.0;
  double prefix_regret = 0.0;  // vs the best-so-far expert at each round
  double opt_m_value = std::numeric_limits<double>::quiet_NaN();
  double final_regret_m = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;
  double entropy = 0.0;
  double v_h = 0.0;
  double v_not_h = 0.0;
  std::vector<double> cum_regret;       // running honest regret, one per round
  std::vector<double> per_user_regret;  // vs the user's own best fixed expert
  std::vector<std::pair<BoundKind, double>> bounds;
};

inline MetricsReport measure(const Trajectory& traj, const Scenario& sc,
                             std::size_t m = 0, double bound_constant = 1.0) {
  validate_scenario(sc);
  if (traj.rounds.size() != sc.horizon)
    throw std::invalid_argument("measure: trajectory length does not match the scenario");
  if (!traj.rounds.empty() && traj.num_experts() != sc.experts)
    throw std::invalid_argument("measure: trajectory expert count does not match");
  for (const RoundRecord& r : traj.rounds)
    if (r.user >= sc.users)
      throw std::invalid_argument("measure: trajectory user out of range");

  MetricsReport rep;
  const auto [best, value] = opt_h(traj, sc.honest);
  rep.opt_expert = best;
  rep.opt_value = value;

  const std::vector<char> mask = detail::scenario_honest_mask(sc);
  std::vector<double> expert_sums(sc.experts, 0.0);
  std::vector<double> user_loss(sc.users, 0.0);
  std::vector<std::vector<double>> user_sums(sc.users);
  double cum = 0.0, cum_prefix = 0.0;
  rep.cum_regret.reserve(traj.rounds.size());
  for (const RoundRecord& r : traj.rounds) {
    if (user_sums[r.user].empty()) user_sums[r.user].assign(sc.experts, 0.0);
    for (std::size_t x = 0; x < sc.experts; ++x)
      user_sums[r.user][x] += r.true_losses[x];
    user_loss[r.user] += r.expected_loss;

    if (mask[r.user]) {
      rep.honest_loss += r.expected_loss;
      cum += r.expected_loss - r.true_losses[best];
      for (std::size_t x = 0; x < sc.experts; ++x)
        expert_sums[x] += r.true_losses[x];
      std::size_t prefix_best = 0;
      for (std::size_t x = 1; x < sc.experts; ++x)
        if (expert_sums[x] < expert_sums[prefix_best]) prefix_best = x;
      cum_prefix += r.expected_loss - r.true_losses[prefix_best];

      const double d_true = r.true_losses[best] - r.expected_loss;
      rep.v_h += d_true * d_true;
    } else {
      double posted_mix = 0.0;
      for (std::size_t x = 0; x < sc.experts; ++x)
        posted_mix += r.prediction.distribution[x] * r.posted_losses[x];
      const double d_posted = r.posted_losses[best] - posted_mix;
      rep.v_not_h += d_posted * d_posted;
    }
    rep.cum_regret.push_back(cum);
  }
  rep.final_regret = rep.honest_loss - rep.opt_value;
  rep.prefix_regret = cum_prefix;

  rep.per_user_regret.assign(sc.users, 0.0);
  for (std::size_t u = 0; u < sc.users; ++u) {
    if (user_sums[u].empty()) continue;
    double lo = user_sums[u][0];
    for (std::size_t x = 1; x < sc.experts; ++x) lo = std::min(lo, user_sums[u][x]);
    rep.per_user_regret[u] = user_loss[u] - lo;
  }

  rep.alpha = double(sc.honest.size()) / double(sc.users);
  rep.entropy = binary_entropy(rep.alpha);
  const BoundInputs in{rep.alpha, rep.v_h,    rep.v_not_h, rep.entropy,
                       sc.experts, sc.users,  sc.horizon};
  rep.bounds.emplace_back(BoundKind::simple,
                          bound_rhs(BoundKind::simple, in, bound_constant));
  rep.bounds.emplace_back(BoundKind::entropy,
                          bound_rhs(BoundKind::entropy, in, bound_constant));
  rep.bounds.emplace_back(BoundKind::variance_full,
                          bound_rhs(BoundKind::variance_full, in, bound_constant));
  rep.bounds.emplace_back(BoundKind::variance_split,
                          bound_rhs(BoundKind::variance_split, in, bound_constant));
  if (m >= 1) {
    rep.opt_m_value = opt_h_m(traj, sc.honest, m);
    rep.final_regret_m = rep.honest_loss - rep.opt_m_value;
    rep.bounds.emplace_back(BoundKind::grouped,
                            bound_rhs(BoundKind::grouped, in, bound_constant, m));
  }
  return rep;
}

}  // namespace cpea
