#pragma once
// Batch experiment harness: a JSON config describes a scenario x learner x
// seed grid plus declared inequalities; replicas run as independent jobs,
// traces and summaries land in the output directory keyed by sorted job ids,
// and re-running the same config reproduces every file byte for byte.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpea/oracle.hpp"
#include "cpea/sim.hpp"

namespace cpea {

struct ScenarioSpec {
  std::string name;
  Scenario scenario;  // seed field is replaced per replica
  std::vector<LearnerKind> learners;     // effective; defaults from the config
  std::vector<std::uint64_t> seeds;      // effective; defaults from the config
  std::size_t m = 0;                     // grouped-benchmark size; 0 skips it
};

enum class CheckKind {
  regret_le_bound,  // honest regret <= bound_rhs(kind, constant)
  regret_ratio,     // learner regret <= factor * baseline learner regret
  regret_diff_le,   // regret here minus regret in baseline scenario <= allowance
};

struct InequalitySpec {
  std::string name;
  CheckKind check = CheckKind::regret_le_bound;
  std::string scenario;
  LearnerKind learner = LearnerKind::full;
  // regret_le_bound
  BoundKind bound = BoundKind::simple;
  double constant = 1.0;
  bool vs_opt_m = false;       // benchmark against opt_h_m instead of opt_h
  bool per_seed = true;        // false: compare means over seeds
  // regret_ratio
  LearnerKind baseline_learner = LearnerKind::independent;
  bool per_user_metric = false;  // mean per-user honest regret vs final regret
  double factor = 1.0;
  // regret_diff_le
  std::string baseline_scenario;
  double allowance = 0.0;
};

struct ExperimentConfig {
  std::vector<ScenarioSpec> scenarios;
  std::vector<LearnerKind> learners;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir = "out";
  double bound_constant = 8.0;
  std::size_t m = 0;  // 0: skip the grouped benchmark
  std::vector<InequalitySpec> inequalities;
};

namespace detail {

inline void require_field(const nlohmann::json& j, const char* key,
                          const std::string& where) {
  if (!j.contains(key))
    throw std::invalid_argument("config: " + where + " needs field '" + key + "'");
}

inline std::vector<std::vector<double>> generate_means(const nlohmann::json& j,
                                                       std::size_t experts) {
  require_field(j, "generator", "means");
  const std::string kind = j.at("generator").get<std::string>();
  const std::size_t clusters =
      kind == "dominant" ? 1 : j.value("clusters", std::size_t(1));
  if (kind != "dominant" && kind != "clustered")
    throw std::invalid_argument("config: unknown means generator '" + kind + "'");
  if (clusters == 0 || clusters > experts)
    throw std::invalid_argument("config: cluster count must lie in [1, experts]");
  const double best = j.value("best", 0.1);
  const double rest = j.value("rest", 0.6);
  std::vector<std::vector<double>> means(clusters,
                                         std::vector<double>(experts, rest));
  for (std::size_t c = 0; c < clusters; ++c)
    means[c][c * (experts / clusters)] = best;
  return means;
}

inline Scenario parse_scenario_body(const nlohmann::json& j) {
  Scenario sc;
  require_field(j, "experts", "scenario");
  require_field(j, "users", "scenario");
  require_field(j, "horizon", "scenario");
  sc.experts = j.at("experts").get<std::size_t>();
  sc.users = j.at("users").get<std::size_t>();
  sc.horizon = j.at("horizon").get<std::uint64_t>();
  sc.noise = j.value("noise", 0.0);

  const std::string schedule = j.value("schedule", std::string("round_robin"));
  if (schedule == "round_robin") {
    sc.schedule = Schedule::round_robin;
  } else if (schedule == "iid") {
    sc.schedule = Schedule::iid;
    require_field(j, "schedule_weights", "iid scenario");
    sc.schedule_weights = j.at("schedule_weights").get<std::vector<double>>();
  } else {
    throw std::invalid_argument("config: unknown schedule '" + schedule + "'");
  }

  if (j.contains("adversaries")) {
    for (const nlohmann::json& a : j.at("adversaries")) {
      AdversaryConfig cfg;
      require_field(a, "tag", "adversary");
      cfg.tag = adversary_tag_from(a.at("tag").get<std::string>());
      cfg.target = a.value("target", std::size_t(0));
      cfg.phase = a.value("phase", std::uint64_t(0));
      cfg.magnitude = a.value("magnitude", 1.0);
      if (a.contains("user") == a.contains("user_range"))
        throw std::invalid_argument(
            "config: adversary needs exactly one of 'user' and 'user_range'");
      if (a.contains("user")) {
        sc.adversaries.emplace_back(a.at("user").get<std::size_t>(), cfg);
      } else {
        const auto range = a.at("user_range").get<std::vector<std::size_t>>();
        if (range.size() != 2 || range[0] >= range[1])
          throw std::invalid_argument(
              "config: 'user_range' must be [first, past-last]");
        for (std::size_t u = range[0]; u < range[1]; ++u)
          sc.adversaries.emplace_back(u, cfg);
      }
    }
  }

  if (j.contains("honest")) {
    sc.honest = j.at("honest").get<std::vector<std::size_t>>();
  } else {
    std::vector<char> dishonest(sc.users, 0);
    for (const auto& [u, cfg] : sc.adversaries)
      if (u < sc.users) dishonest[u] = 1;
    for (std::size_t u = 0; u < sc.users; ++u)
      if (!dishonest[u]) sc.honest.push_back(u);
  }

  if (j.contains("cluster_means") == j.contains("means"))
    throw std::invalid_argument(
        "config: scenario needs exactly one of 'cluster_means' and 'means'");
  if (j.contains("cluster_means"))
    sc.cluster_means =
        j.at("cluster_means").get<std::vector<std::vector<double>>>();
  else
    sc.cluster_means = generate_means(j.at("means"), sc.experts);

  if (j.contains("cluster_of")) {
    sc.cluster_of = j.at("cluster_of").get<std::vector<std::size_t>>();
  } else {
    sc.cluster_of.resize(sc.users);
    for (std::size_t u = 0; u < sc.users; ++u)
      sc.cluster_of[u] = u % sc.cluster_means.size();
  }
  return sc;
}

inline InequalitySpec parse_inequality(const nlohmann::json& j) {
  InequalitySpec q;
  require_field(j, "name", "inequality");
  require_field(j, "check", "inequality");
  require_field(j, "scenario", "inequality");
  require_field(j, "learner", "inequality");
  q.name = j.at("name").get<std::string>();
  q.scenario = j.at("scenario").get<std::string>();
  q.learner = learner_kind_from(j.at("learner").get<std::string>());
  const std::string check = j.at("check").get<std::string>();
  if (check == "regret_le_bound") {
    q.check = CheckKind::regret_le_bound;
    require_field(j, "bound", "regret_le_bound inequality");
    q.bound = bound_kind_from(j.at("bound").get<std::string>());
    q.constant = j.value("constant", 1.0);
    q.vs_opt_m = j.value("benchmark", std::string("opt_h")) == "opt_h_m";
    q.per_seed = j.value("scope", std::string("per_seed")) == "per_seed";
  } else if (check == "regret_ratio") {
    q.check = CheckKind::regret_ratio;
    require_field(j, "baseline_learner", "regret_ratio inequality");
    require_field(j, "factor", "regret_ratio inequality");
    q.baseline_learner =
        learner_kind_from(j.at("baseline_learner").get<std::string>());
    q.factor = j.value("factor", 1.0);
    q.per_user_metric =
        j.value("metric", std::string("final_regret")) == "per_user";
  } else if (check == "regret_diff_le") {
    q.check = CheckKind::regret_diff_le;
    require_field(j, "baseline_scenario", "regret_diff_le inequality");
    require_field(j, "allowance", "regret_diff_le inequality");
    q.baseline_scenario = j.at("baseline_scenario").get<std::string>();
    q.allowance = j.at("allowance").get<double>();
  } else {
    throw std::invalid_argument("config: unknown check '" + check + "'");
  }
  return q;
}

inline bool valid_file_token(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  return true;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig cfg;
  detail::require_field(j, "scenarios", "config");
  detail::require_field(j, "learners", "config");
  detail::require_field(j, "seeds", "config");
  if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
  cfg.bound_constant = j.value("bound_constant", 8.0);
  cfg.m = j.value("m", std::size_t(0));
  if (!(cfg.bound_constant > 0.0))
    throw std::invalid_argument("config: bound_constant must be positive");

  for (const nlohmann::json& l : j.at("learners"))
    cfg.learners.push_back(learner_kind_from(l.get<std::string>()));
  cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  for (const nlohmann::json& s : j.at("scenarios")) {
    detail::require_field(s, "name", "scenario");
    ScenarioSpec spec;
    spec.name = s.at("name").get<std::string>();
    if (!detail::valid_file_token(spec.name))
      throw std::invalid_argument("config: scenario name '" + spec.name +
                                  "' must be [A-Za-z0-9_-]+");
    spec.scenario = detail::parse_scenario_body(s);
    validate_scenario(spec.scenario);
    spec.learners = cfg.learners;
    if (s.contains("learners")) {
      spec.learners.clear();
      for (const nlohmann::json& l : s.at("learners"))
        spec.learners.push_back(learner_kind_from(l.get<std::string>()));
    }
    spec.seeds = s.contains("seeds")
                     ? s.at("seeds").get<std::vector<std::uint64_t>>()
                     : cfg.seeds;
    spec.m = s.value("m", cfg.m);
    cfg.scenarios.push_back(std::move(spec));
  }

  if (cfg.scenarios.empty() || cfg.learners.empty() || cfg.seeds.empty())
    throw std::invalid_argument(
        "config: need at least one scenario, learner, and seed");
  std::set<std::string> names;
  for (const ScenarioSpec& s : cfg.scenarios) {
    if (!names.insert(s.name).second)
      throw std::invalid_argument("config: duplicate scenario name '" + s.name + "'");
    if (s.learners.empty() || s.seeds.empty())
      throw std::invalid_argument("config: scenario '" + s.name +
                                  "' needs at least one learner and seed");
    std::set<std::uint64_t> unique_seeds(s.seeds.begin(), s.seeds.end());
    if (unique_seeds.size() != s.seeds.size())
      throw std::invalid_argument("config: scenario '" + s.name +
                                  "' has a duplicate seed");
  }

  auto spec_by_name = [&](const std::string& name) -> const ScenarioSpec* {
    for (const ScenarioSpec& s : cfg.scenarios)
      if (s.name == name) return &s;
    return nullptr;
  };
  auto has_learner = [](const ScenarioSpec& s, LearnerKind k) {
    for (LearnerKind l : s.learners)
      if (l == k) return true;
    return false;
  };
  if (j.contains("inequalities")) {
    for (const nlohmann::json& q : j.at("inequalities")) {
      InequalitySpec spec = detail::parse_inequality(q);
      const ScenarioSpec* subject = spec_by_name(spec.scenario);
      if (subject == nullptr)
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' references unknown scenario");
      if (!has_learner(*subject, spec.learner))
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' references a learner not in the grid");
      if (spec.check == CheckKind::regret_ratio &&
          !has_learner(*subject, spec.baseline_learner))
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' references a baseline learner not in the grid");
      if (spec.check == CheckKind::regret_diff_le) {
        const ScenarioSpec* base = spec_by_name(spec.baseline_scenario);
        if (base == nullptr)
          throw std::invalid_argument("config: inequality '" + spec.name +
                                      "' references unknown baseline scenario");
        if (!has_learner(*base, spec.learner))
          throw std::invalid_argument("config: inequality '" + spec.name +
                                      "' needs its learner in the baseline scenario");
      }
      if (spec.check == CheckKind::regret_le_bound && !(spec.constant > 0.0))
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' needs a positive constant");
      if (spec.vs_opt_m && subject->m == 0)
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' benchmarks opt_h_m but its scenario sets no m");
      if (spec.bound == BoundKind::grouped && subject->m == 0)
        throw std::invalid_argument("config: inequality '" + spec.name +
                                    "' uses the grouped bound but its scenario sets no m");
      cfg.inequalities.push_back(std::move(spec));
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::invalid_argument("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  in >> j;
  return parse_config(j);
}

struct ReplicaResult {
  std::string scenario;
  LearnerKind learner = LearnerKind::full;
  std::uint64_t seed = 0;
  MetricsReport report;
  double mean_per_user_honest_regret = 0.0;
  bool pass = true;
};

struct InequalityOutcome {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct RunOutcome {
  std::vector<ReplicaResult> results;  // sorted by (scenario, learner, seed)
  std::vector<InequalityOutcome> inequalities;
  bool ok = true;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace(const std::filesystem::path& path, const Trajectory& traj,
                        const MetricsReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("run: cannot write '" + path.string() + "'");
  out << "round,user,honest,expected_loss,cum_honest_regret\n";
  for (std::size_t i = 0; i < traj.rounds.size(); ++i) {
    const RoundRecord& r = traj.rounds[i];
    out << r.t << ',' << r.user << ',' << (r.honest ? 1 : 0) << ','
        << format_double(r.expected_loss) << ','
        << format_double(rep.cum_regret[i]) << '\n';
  }
}

inline double group_mean(const std::vector<const ReplicaResult*>& group,
                         bool per_user_metric) {
  double total = 0.0;
  for (const ReplicaResult* r : group)
    total += per_user_metric ? r->mean_per_user_honest_regret
                             : r->report.final_regret;
  return total / double(group.size());
}

}  // namespace detail

inline RunOutcome run_config(const ExperimentConfig& cfg, std::size_t jobs = 1) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  struct Job {
    std::size_t scenario_index;
    LearnerKind learner;
    std::uint64_t seed;
  };
  std::vector<Job> grid;
  std::vector<std::size_t> order(cfg.scenarios.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cfg.scenarios[a].name < cfg.scenarios[b].name;
  });
  for (std::size_t si : order) {
    std::vector<LearnerKind> learners = cfg.scenarios[si].learners;
    std::sort(learners.begin(), learners.end(),
              [](LearnerKind a, LearnerKind b) {
                return std::string(learner_kind_name(a)) < learner_kind_name(b);
              });
    std::vector<std::uint64_t> seeds = cfg.scenarios[si].seeds;
    std::sort(seeds.begin(), seeds.end());
    for (LearnerKind l : learners)
      for (std::uint64_t seed : seeds) grid.push_back({si, l, seed});
  }

  RunOutcome out;
  out.results.resize(grid.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size() || failed.load()) return;
      try {
        const Job& job = grid[i];
        Scenario sc = cfg.scenarios[job.scenario_index].scenario;
        sc.seed = job.seed;
        const Trajectory traj = run_scenario(sc, job.learner);
        ReplicaResult& res = out.results[i];
        res.scenario = cfg.scenarios[job.scenario_index].name;
        res.learner = job.learner;
        res.seed = job.seed;
        res.report = measure(traj, sc, cfg.scenarios[job.scenario_index].m,
                             cfg.bound_constant);
        double honest_total = 0.0;
        for (std::size_t u : sc.honest)
          honest_total += res.report.per_user_regret[u];
        res.mean_per_user_honest_regret = honest_total / double(sc.honest.size());
        const fs::path trace =
            cfg.out_dir / ("trace_" + res.scenario + "_" +
                           learner_kind_name(job.learner) + "_" +
                           std::to_string(job.seed) + ".csv");
        detail::write_trace(trace, traj, res.report);
        res.report.cum_regret.clear();
        res.report.cum_regret.shrink_to_fit();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(
      1, std::min<std::size_t>(jobs ? jobs : 1, grid.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("run: " + first_error);

  std::map<std::pair<std::string, LearnerKind>, std::vector<const ReplicaResult*>>
      groups;
  for (const ReplicaResult& r : out.results)
    groups[{r.scenario, r.learner}].push_back(&r);

  auto scenario_by_name = [&](const std::string& name) -> const ScenarioSpec& {
    for (const ScenarioSpec& s : cfg.scenarios)
      if (s.name == name) return s;
    throw std::logic_error("run: unknown scenario '" + name + "'");
  };

  std::vector<char> pass_flags(out.results.size(), 1);
  auto replica_index = [&](const ReplicaResult* r) {
    return std::size_t(r - out.results.data());
  };

  for (const InequalitySpec& q : cfg.inequalities) {
    InequalityOutcome verdict{q.name, true, ""};
    const auto subject = groups.find({q.scenario, q.learner});
    if (subject == groups.end())
      throw std::logic_error("run: inequality '" + q.name + "' has no replicas");
    const auto& group = subject->second;
    std::ostringstream note;
    note.precision(6);

    if (q.check == CheckKind::regret_le_bound) {
      const ScenarioSpec& spec = scenario_by_name(q.scenario);
      double lhs_mean = 0.0, rhs_mean = 0.0;
      for (const ReplicaResult* r : group) {
        const MetricsReport& rep = r->report;
        const double regret = q.vs_opt_m ? rep.final_regret_m : rep.final_regret;
        const BoundInputs in{rep.alpha,           rep.v_h,
                             rep.v_not_h,         rep.entropy,
                             spec.scenario.experts, spec.scenario.users,
                             spec.scenario.horizon};
        const double rhs = bound_rhs(q.bound, in, q.constant, spec.m);
        lhs_mean += regret;
        rhs_mean += rhs;
        if (q.per_seed && !(regret <= rhs)) {
          verdict.pass = false;
          pass_flags[replica_index(r)] = 0;
          if (verdict.detail.empty()) {
            note << "seed " << r->seed << ": regret " << regret
                 << " > bound " << rhs;
            verdict.detail = note.str();
          }
        }
      }
      lhs_mean /= double(group.size());
      rhs_mean /= double(group.size());
      if (!q.per_seed && !(lhs_mean <= rhs_mean)) {
        verdict.pass = false;
        note << "mean regret " << lhs_mean << " > mean bound " << rhs_mean;
        verdict.detail = note.str();
      }
      if (verdict.pass) {
        note << "mean regret " << lhs_mean << " vs mean bound " << rhs_mean;
        verdict.detail = note.str();
      }
    } else if (q.check == CheckKind::regret_ratio) {
      const auto base = groups.find({q.scenario, q.baseline_learner});
      if (base == groups.end())
        throw std::logic_error("run: inequality '" + q.name + "' has no baseline");
      const double lhs = detail::group_mean(group, q.per_user_metric);
      const double rhs = detail::group_mean(base->second, q.per_user_metric);
      verdict.pass = lhs <= q.factor * rhs;
      note << "mean " << lhs << (verdict.pass ? " <= " : " > ") << q.factor
           << " * " << rhs;
      verdict.detail = note.str();
    } else {
      const auto base = groups.find({q.baseline_scenario, q.learner});
      if (base == groups.end())
        throw std::logic_error("run: inequality '" + q.name + "' has no baseline");
      const double lhs = detail::group_mean(group, false);
      const double rhs = detail::group_mean(base->second, false);
      verdict.pass = lhs - rhs <= q.allowance;
      note << "mean diff " << (lhs - rhs)
           << (verdict.pass ? " <= " : " > ") << q.allowance;
      verdict.detail = note.str();
    }
    out.ok = out.ok && verdict.pass;
    out.inequalities.push_back(std::move(verdict));
  }
  for (std::size_t i = 0; i < out.results.size(); ++i)
    out.results[i].pass = pass_flags[i] != 0;

  std::ofstream summary(cfg.out_dir / "summaries.jsonl", std::ios::binary);
  if (!summary)
    throw std::runtime_error("run: cannot write summaries.jsonl");
  for (const ReplicaResult& r : out.results) {
    nlohmann::ordered_json line;
    line["scenario"] = r.scenario;
    line["learner"] = learner_kind_name(r.learner);
    line["seed"] = r.seed;
    line["final_regret"] = r.report.final_regret;
    line["opt_h"] = r.report.opt_value;
    if (std::isnan(r.report.opt_m_value))
      line["opt_h_m"] = nullptr;
    else
      line["opt_h_m"] = r.report.opt_m_value;
    line["v_h"] = r.report.v_h;
    nlohmann::ordered_json bounds;
    for (const auto& [kind, value] : r.report.bounds)
      bounds[bound_kind_name(kind)] = value;
    line["bounds"] = std::move(bounds);
    line["pass"] = r.pass;
    summary << line.dump() << '\n';
  }
  return out;
}

inline std::string make_report(const std::filesystem::path& summary_dir) {
  std::ifstream in(summary_dir / "summaries.jsonl");
  if (!in)
    throw std::invalid_argument("report: no summaries.jsonl in '" +
                                summary_dir.string() + "'");
  struct Row {
    std::vector<double> regrets;
    std::map<std::string, std::vector<double>> ratios;
  };
  std::map<std::pair<std::string, std::string>, Row> rows;
  std::string text;
  std::size_t records = 0;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    const nlohmann::json j = nlohmann::json::parse(text);
    Row& row = rows[{j.at("scenario").get<std::string>(),
                     j.at("learner").get<std::string>()}];
    const double regret = j.at("final_regret").get<double>();
    row.regrets.push_back(regret);
    for (const auto& [kind, value] : j.at("bounds").items())
      row.ratios[kind].push_back(regret / value.get<double>());
    ++records;
  }
  if (records == 0)
    throw std::invalid_argument("report: summaries.jsonl is empty");

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
  };
  auto stddev_of = [&](const std::vector<double>& v) {
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / double(v.size()));
  };

  static const char* kKinds[] = {"simple", "entropy", "variance_full",
                                 "variance_split", "grouped"};
  std::string csv = "scenario,learner,seeds,final_regret_mean,final_regret_stddev";
  for (const char* kind : kKinds) {
    csv += std::string(",ratio_") + kind + "_mean,ratio_" + kind + "_stddev";
  }
  csv += '\n';
  for (const auto& [key, row] : rows) {
    csv += key.first + ',' + key.second + ',' +
           std::to_string(row.regrets.size()) + ',' +
           detail::format_double(mean_of(row.regrets)) + ',' +
           detail::format_double(stddev_of(row.regrets));
    for (const char* kind : kKinds) {
      const auto it = row.ratios.find(kind);
      if (it == row.ratios.end()) {
        csv += ",,";
      } else {
        csv += ',' + detail::format_double(mean_of(it->second)) + ',' +
               detail::format_double(stddev_of(it->second));
      }
    }
    csv += '\n';
  }
  return csv;
}

}  // namespace cpea
