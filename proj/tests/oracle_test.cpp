#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "cpea/oracle.hpp"
#include "cpea/rng.hpp"

using cpea::BoundInputs;
using cpea::BoundKind;
using cpea::MwmInstance;
using cpea::Prediction;
using cpea::RoundRecord;
using cpea::SpecialistsReference;
using cpea::Trajectory;

namespace {

Trajectory make_trajectory(const std::vector<std::size_t>& users,
                           const std::vector<std::vector<double>>& losses) {
  Trajectory traj;
  for (std::size_t i = 0; i < users.size(); ++i) {
    RoundRecord r;
    r.t = i + 1;
    r.user = users[i];
    r.true_losses = losses[i];
    r.posted_losses = losses[i];
    const std::size_t m = losses[i].size();
    r.prediction = Prediction{std::vector<double>(m, 1.0 / double(m)), i + 1};
    r.expected_loss = 0.0;
    for (std::size_t x = 0; x < m; ++x)
      r.expected_loss += r.prediction.distribution[x] * r.true_losses[x];
    traj.rounds.push_back(std::move(r));
  }
  return traj;
}

}  // namespace

TEST_CASE("trajectory validation") {
  Trajectory traj = make_trajectory({0, 1}, {{0.1, 0.2}, {0.3, 0.4}});
  CHECK_NOTHROW(cpea::validate(traj));

  Trajectory bad_loss = traj;
  bad_loss.rounds[1].expected_loss += 1e-6;
  CHECK_THROWS_AS(cpea::validate(bad_loss), std::invalid_argument);

  Trajectory bad_index = traj;
  bad_index.rounds[1].t = 3;
  CHECK_THROWS_AS(cpea::validate(bad_index), std::invalid_argument);
}

TEST_CASE("best fixed expert over honest rounds") {
  const std::vector<std::size_t> honest{0};
  Trajectory traj =
      make_trajectory({0, 0, 0}, {{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}});
  const auto [x, value] = cpea::opt_h(traj, honest);
  CHECK(x == 1);
  CHECK(value == 1.0);

  Trajectory single = make_trajectory({0, 0}, {{0.4}, {0.5}});
  const auto [sx, sv] = cpea::opt_h(single, honest);
  CHECK(sx == 0);
  CHECK_THAT(sv, Catch::Matchers::WithinULP(0.9, 2));

  const std::vector<std::size_t> empty;
  const auto [ex, ev] = cpea::opt_h(traj, empty);
  CHECK(ex == 0);
  CHECK(ev == 0.0);

  Trajectory tie = make_trajectory({0}, {{0.5, 0.5, 0.7}});
  const auto [tx, tv] = cpea::opt_h(tie, honest);
  CHECK(tx == 0);
  CHECK(tv == 0.5);
}

TEST_CASE("best m-expert assignment") {
  const std::vector<std::size_t> honest{0, 1, 2};
  Trajectory traj = make_trajectory({0, 1, 2}, {{0.2, 0.9, 0.8},
                                                {0.9, 0.1, 0.85},
                                                {0.5, 0.6, 0.05}});

  CHECK_THROWS_AS(cpea::opt_h_m(traj, honest, 0), std::invalid_argument);

  const double m1 = cpea::opt_h_m(traj, honest, 1);
  CHECK_THAT(m1, Catch::Matchers::WithinULP(cpea::opt_h(traj, honest).second, 2));

  const double m2 = cpea::opt_h_m(traj, honest, 2);
  CHECK_THAT(m2, Catch::Matchers::WithinAbs(0.8, 1e-12));

  const double m3 = cpea::opt_h_m(traj, honest, 3);
  CHECK_THAT(m3, Catch::Matchers::WithinAbs(0.2 + 0.1 + 0.05, 1e-12));
  CHECK(cpea::opt_h_m(traj, honest, 7) == m3);
  CHECK(m1 >= m2);
  CHECK(m2 >= m3);

  // Independent cross-check: enumerate every assignment of users to two
  // groups, each group taking its own best expert.
  double best = std::numeric_limits<double>::infinity();
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1)
      for (int a2 = 0; a2 < 2; ++a2) {
        const int assign[3] = {a0, a1, a2};
        double total = 0.0;
        for (int g = 0; g < 2; ++g) {
          double lo = std::numeric_limits<double>::infinity();
          bool used = false;
          for (std::size_t x = 0; x < 3; ++x) {
            double s = 0.0;
            for (std::size_t u = 0; u < 3; ++u)
              if (assign[u] == g) {
                s += traj.rounds[u].true_losses[x];
                used = true;
              }
            lo = std::min(lo, s);
          }
          if (used) total += lo;
        }
        best = std::min(best, total);
      }
  CHECK_THAT(m2, Catch::Matchers::WithinAbs(best, 1e-12));
}

TEST_CASE("guard rejects oversized expert-subset enumerations") {
  std::vector<double> losses(64, 0.5);
  Trajectory traj = make_trajectory({0}, {losses});
  const std::vector<std::size_t> honest{0};
  CHECK_THROWS_WITH(cpea::opt_h_m(traj, honest, 16),
                    Catch::Matchers::ContainsSubstring("instance too large"));
  CHECK_NOTHROW(cpea::opt_h_m(traj, honest, 2));
}

TEST_CASE("squared-gap variance over honest rounds") {
  const std::vector<std::size_t> honest{0};

  Trajectory point;
  for (int i = 0; i < 3; ++i) {
    RoundRecord r;
    r.t = std::uint64_t(i) + 1;
    r.user = 0;
    r.true_losses = {0.3, 0.9};
    r.posted_losses = r.true_losses;
    r.prediction = Prediction{{1.0, 0.0}, std::uint64_t(i) + 1};
    r.expected_loss = 0.3;
    point.rounds.push_back(r);
  }
  CHECK(cpea::variance_vh(point, honest, 0) == 0.0);
  CHECK_THAT(cpea::variance_vh(point, honest, 1),
             Catch::Matchers::WithinAbs(3 * 0.36, 1e-12));

  Trajectory one;
  RoundRecord r;
  r.t = 1;
  r.user = 0;
  r.true_losses = {1.0};
  r.posted_losses = r.true_losses;
  r.prediction = Prediction{{1.0}, 1};
  r.expected_loss = 0.0;
  one.rounds.push_back(r);
  // Deliberately inconsistent prediction/expected pair: the variance only
  // reads the recorded expected loss.
  CHECK(cpea::variance_vh(one, honest, 0) == 1.0);

  cpea::rng::Stream st{314};
  std::vector<std::size_t> users(100);
  std::vector<std::vector<double>> losses(100);
  for (int i = 0; i < 100; ++i) {
    users[i] = st.next_below(3);
    losses[i] = {st.next_unit(), st.next_unit(), st.next_unit()};
  }
  Trajectory rnd = make_trajectory(users, losses);
  const std::vector<std::size_t> h2{0, 2};
  const double forward = cpea::variance_vh(rnd, h2, 1);
  double backward = 0.0;
  for (std::size_t i = rnd.rounds.size(); i-- > 0;) {
    const RoundRecord& rr = rnd.rounds[i];
    if (rr.user != 0 && rr.user != 2) continue;
    const double d = rr.true_losses[1] - rr.expected_loss;
    backward += d * d;
  }
  CHECK_THAT(forward, Catch::Matchers::WithinRel(backward, 1e-12));
  CHECK(forward <= 4.0 * 100);
}

TEST_CASE("binary entropy convention") {
  CHECK(cpea::binary_entropy(0.0) == 0.0);
  CHECK(cpea::binary_entropy(1.0) == 0.0);
  CHECK_THAT(cpea::binary_entropy(0.5), Catch::Matchers::WithinULP(std::log(2.0), 2));
  for (double a : {0.1, 0.25, 0.4}) {
    CHECK_THAT(cpea::binary_entropy(a),
               Catch::Matchers::WithinULP(cpea::binary_entropy(1.0 - a), 4));
    CHECK(cpea::binary_entropy(a) > 0.0);
  }
  CHECK_THROWS_AS(cpea::binary_entropy(-0.1), std::invalid_argument);
  CHECK_THROWS_AS(cpea::binary_entropy(1.1), std::invalid_argument);
}

TEST_CASE("bound right-hand sides match their formulas") {
  const BoundInputs in = cpea::make_bound_inputs(0.5, 100.0, 50.0, 8, 4, 1024);
  const double tilde = std::sqrt(1024.0 * cpea::floored_loglog(1024.0));

  CHECK_THAT(cpea::bound_rhs(BoundKind::simple, in, 1.0),
             Catch::Matchers::WithinULP(std::sqrt(1024.0 * (std::log(8.0) + 4.0)), 4));

  const double tight =
      std::sqrt(0.5 * 1024.0 * (std::log(8.0) + 4.0 * std::log(2.0))) + tilde;
  CHECK_THAT(cpea::bound_rhs(BoundKind::entropy, in, 2.0),
             Catch::Matchers::WithinRel(2.0 * tight, 1e-12));

  const BoundInputs zero = cpea::make_bound_inputs(0.5, 0.0, 0.0, 8, 4, 1024);
  CHECK_THAT(cpea::bound_rhs(BoundKind::variance_full, zero, 3.0),
             Catch::Matchers::WithinRel(3.0 * tilde, 1e-12));
  CHECK_THAT(cpea::bound_rhs(BoundKind::variance_split, zero, 3.0),
             Catch::Matchers::WithinRel(3.0 * tilde, 1e-12));

  const double split = 4.0 * (100.0 * 0.5 * std::log(2.0) + 50.0 * 0.5 * std::log(2.0));
  CHECK_THAT(cpea::bound_rhs(BoundKind::variance_split, in, 1.0),
             Catch::Matchers::WithinRel(std::sqrt(split) + tilde, 1e-12));
  CHECK_THAT(cpea::bound_rhs(BoundKind::variance_full, in, 1.0),
             Catch::Matchers::WithinRel(
                 std::sqrt(100.0 * std::log(8.0) + split) + tilde, 1e-12));

  CHECK_THROWS_AS(cpea::bound_rhs(BoundKind::grouped, in, 1.0),
                  std::invalid_argument);
  CHECK_THAT(cpea::bound_rhs(BoundKind::grouped, in, 1.0, 1),
             Catch::Matchers::WithinRel(std::sqrt(1024.0 * std::log(8.0)) + tilde, 1e-12));
  CHECK_THAT(cpea::bound_rhs(BoundKind::grouped, in, 1.0, 4),
             Catch::Matchers::WithinRel(
                 std::sqrt(1024.0 * (4.0 * std::log(8.0) + 4.0 * std::log(4.0))) + tilde,
                 1e-12));

  CHECK_THROWS_AS(cpea::bound_rhs(BoundKind::simple, in, 0.0), std::invalid_argument);
  BoundInputs bad = in;
  bad.entropy = 0.1;
  CHECK_THROWS_AS(cpea::bound_rhs(BoundKind::simple, bad, 1.0), std::invalid_argument);

  // Degenerate honest fractions keep every kind finite.
  for (double a : {0.0, 1.0}) {
    const BoundInputs edge = cpea::make_bound_inputs(a, 10.0, 10.0, 4, 4, 64);
    for (BoundKind k : {BoundKind::simple, BoundKind::entropy,
                        BoundKind::variance_full, BoundKind::variance_split})
      CHECK(std::isfinite(cpea::bound_rhs(k, edge, 1.0)));
  }
}

TEST_CASE("bound right-hand sides are monotone") {
  auto inputs = [](double vh, double vnh, std::uint64_t t, std::size_t m) {
    return cpea::make_bound_inputs(0.25, vh, vnh, m, 6, t);
  };
  const std::vector<BoundKind> kinds{BoundKind::simple, BoundKind::entropy,
                                     BoundKind::variance_full,
                                     BoundKind::variance_split,
                                     BoundKind::grouped};
  for (BoundKind k : kinds) {
    auto eval = [&](const BoundInputs& in, double c) {
      return cpea::bound_rhs(k, in, c, 2);
    };
    CHECK(eval(inputs(10, 5, 256, 4), 1.0) <= eval(inputs(20, 5, 256, 4), 1.0));
    CHECK(eval(inputs(10, 5, 256, 4), 1.0) <= eval(inputs(10, 9, 256, 4), 1.0));
    CHECK(eval(inputs(10, 5, 256, 4), 1.0) <= eval(inputs(10, 5, 1024, 4), 1.0));
    CHECK(eval(inputs(10, 5, 256, 4), 1.0) <= eval(inputs(10, 5, 256, 9), 1.0));
    CHECK(eval(inputs(10, 5, 256, 4), 1.0) <= eval(inputs(10, 5, 256, 4), 2.5));
  }
}

TEST_CASE("specialists reference guards its size") {
  CHECK_THROWS_WITH(SpecialistsReference(2, 11, 64),
                    Catch::Matchers::ContainsSubstring("instance too large"));
  CHECK_THROWS_WITH(SpecialistsReference(2000, 7, 64),
                    Catch::Matchers::ContainsSubstring("instance too large"));
  CHECK_NOTHROW(SpecialistsReference(97, 10, 64));
}

TEST_CASE("specialists with one user track the plain instance") {
  const std::size_t m = 4;
  const std::uint64_t horizon = 128;
  SpecialistsReference ref(m, 1, horizon);
  const double rate = ref.instance().rate(0);
  MwmInstance plain(m, rate, 1.0);

  cpea::rng::Stream st{606};
  for (int t = 0; t < 50; ++t) {
    std::vector<double> losses(m);
    for (double& l : losses) l = st.next_unit();
    const Prediction p = ref.step(0, losses);
    const std::vector<double> q = plain.weights();
    for (std::size_t x = 0; x < m; ++x)
      CHECK_THAT(p.distribution[x], Catch::Matchers::WithinAbs(q[x], 1e-12));
    plain.update(losses);
  }
}

TEST_CASE("specialists single-expert predictions are the point mass") {
  SpecialistsReference ref(1, 3, 32);
  CHECK(ref.predict(1).distribution == std::vector<double>{1.0});
  const double l[1] = {0.6};
  ref.update(2, l);
  CHECK(ref.predict(0).distribution == std::vector<double>{1.0});
}

TEST_CASE("sleeping specialists keep their renormalized weight") {
  SpecialistsReference ref(2, 3, 64);
  cpea::rng::Stream st{99};
  for (int t = 0; t < 5; ++t) {
    const std::size_t u = st.next_below(3);
    std::vector<double> losses{st.next_unit(), st.next_unit()};

    const std::size_t n = 2 * ref.subset_count();
    std::vector<double> before(n);
    double total_before = ref.instance().internal_total();
    for (std::size_t i = 0; i < n; ++i)
      before[i] = ref.instance().internal_weight(i) / total_before;

    ref.update(u, losses);

    double total_after = ref.instance().internal_total();
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t s = 0; s < ref.subset_count(); ++s)
        if (!((s >> u) & 1)) {
          const std::size_t i = x * ref.subset_count() + s;
          const double after = ref.instance().internal_weight(i) / total_after;
          CHECK_THAT(after, Catch::Matchers::WithinAbs(before[i], 1e-9));
        }
  }
  CHECK_THAT(ref.instance().internal_total(),
             Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("specialists honest regret obeys the explicit weight bound") {
  const std::size_t m = 2, n = 4;
  const std::uint64_t horizon = 256;
  SpecialistsReference ref(m, n, horizon);
  const double rate = ref.instance().rate(0);

  cpea::rng::Stream st{2718};
  double s1 = 0.0, s2 = 0.0;
  for (std::uint64_t t = 0; t < horizon; ++t) {
    const std::size_t u = t % n;
    const bool honest = u < 2;
    std::vector<double> losses(m);
    if (honest) {
      losses[0] = 0.1 + 0.2 * st.next_unit();
      losses[1] = 0.6 + 0.3 * st.next_unit();
    } else {
      losses[0] = (st.next_bits() & 1) ? 1.0 : -1.0;
      losses[1] = -losses[0];
    }
    const Prediction p = ref.step(u, losses);
    if (honest) {
      double lp = 0.0;
      for (std::size_t x = 0; x < m; ++x) lp += p.distribution[x] * losses[x];
      s1 += lp - losses[0];
      s2 += (lp - losses[0]) * (lp - losses[0]);
    }
  }
  const double ln_w1 = std::log(double(m) * double(ref.subset_count()));
  CHECK(s1 <= rate * s2 + ln_w1 / rate + 1e-6);
}
