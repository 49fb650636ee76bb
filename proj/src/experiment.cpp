#include "circfp/experiment.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <stdexcept>

#include "circfp/parallel.hpp"

namespace circfp {

namespace {

constexpr std::array<std::string_view, 6> kExperimentNames = {"exp1", "exp2", "exp3",
                                                              "exp4", "exp5", "game"};

bool contains(const std::vector<CircuitPurpose>& v, CircuitPurpose p) {
  return std::find(v.begin(), v.end(), p) != v.end();
}

const SiteModel& site_by_id(const SimConfig& sim, std::uint32_t id) {
  for (const auto& s : sim.sites)
    if (s.site_id == id) return s;
  throw std::invalid_argument("unknown site " + std::to_string(id));
}

std::size_t train_count(std::size_t m, double fraction) {
  auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(m)));
  if (m >= 2) n = std::clamp<std::size_t>(n, 1, m - 1);
  return n;
}

FeatureVector last_circuit_features(const PaddedSession& s, std::size_t max_len) {
  const auto circuits = s.circuits();
  return extract_features(to_adversary_view(circuits.back()), max_len);
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string_view experiment_name(ExperimentId id) noexcept {
  return kExperimentNames[static_cast<std::size_t>(id)];
}

std::optional<ExperimentId> parse_experiment(std::string_view s) noexcept {
  auto it = std::find(kExperimentNames.begin(), kExperimentNames.end(), s);
  if (it == kExperimentNames.end()) return std::nullopt;
  return static_cast<ExperimentId>(it - kExperimentNames.begin());
}

std::string scenario_name(const Scenario& s) {
  switch (s.kind) {
    case ScenarioKind::MultiClosed:
      return "multi-closed";
    case ScenarioKind::MultiOpen:
      return "multi-open";
    case ScenarioKind::SingleSite:
      return "single-site:" + std::to_string(s.site);
  }
  return "multi-closed";
}

std::optional<Scenario> parse_scenario(std::string_view s) noexcept {
  if (s == "multi-closed") return Scenario{ScenarioKind::MultiClosed, 0};
  if (s == "multi-open") return Scenario{ScenarioKind::MultiOpen, 0};
  constexpr std::string_view prefix = "single-site:";
  if (s.starts_with(prefix)) {
    std::uint32_t site = 0;
    const auto digits = s.substr(prefix.size());
    auto res = std::from_chars(digits.data(), digits.data() + digits.size(), site);
    if (res.ec != std::errc() || res.ptr != digits.data() + digits.size() || digits.empty())
      return std::nullopt;
    return Scenario{ScenarioKind::SingleSite, site};
  }
  return std::nullopt;
}

void ExperimentSpec::finalize() {
  sim.seed = seed;
  sim.sites = generate_sites(site_gen, seed);
  strategy.rtt = sim.rtt;
}

void ExperimentSpec::validate() const {
  sim.validate();
  strategy.validate();
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  if (scenarios.empty()) throw std::invalid_argument("at least one scenario is required");
  if (classifier_params.tree.max_depth < 1) throw std::invalid_argument("tree max_depth must be >= 1");
  if (classifier_params.tree.min_leaf < 1) throw std::invalid_argument("tree min_leaf must be >= 1");
  if (strategy.rtt != sim.rtt) throw std::invalid_argument("strategy rtt differs from sim rtt");
  if (id == ExperimentId::Exp5PCP) {
    if (!grid || grid->phi.empty() || grid->c.empty())
      throw std::invalid_argument("exp5 requires a non-empty phi x c grid");
    if (strategy.kind != StrategyKind::PCP) throw std::invalid_argument("exp5 requires strategy pcp");
  }
  if (grid) {
    for (double p : grid->phi)
      if (!(p >= 0.0)) throw std::invalid_argument("grid phi values must be >= 0");
    for (double c : grid->c)
      if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("grid c values must lie in [0, 1]");
  }
  if (id == ExperimentId::SecurityGame) {
    if (game.trials < 1) throw std::invalid_argument("game needs at least one trial");
    if (game.k < 1) throw std::invalid_argument("game needs k >= 1");
    site_by_id(sim, game.site);
  }
  for (const auto& s : scenarios)
    if (s.kind == ScenarioKind::SingleSite) site_by_id(sim, s.site);
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
}

ExperimentSpec preset(ExperimentId id) {
  ExperimentSpec s;
  s.id = id;
  s.scenarios = {{ScenarioKind::MultiClosed, 0}, {ScenarioKind::MultiOpen, 0}};
  s.classifiers = {ClassifierKind::DecisionTree, ClassifierKind::NearestNeighbor};
  s.sim.stratified = true;
  switch (id) {
    case ExperimentId::Exp1Vanilla:
    case ExperimentId::Exp2Prop999:
      s.site_gen.n_sites = 100;
      s.sim.n_sessions = 4000;
      s.strategy.kind = id == ExperimentId::Exp1Vanilla ? StrategyKind::None : StrategyKind::Prop999;
      break;
    case ExperimentId::Exp3StrawmanAsymmetric:
    case ExperimentId::Exp4StrawmanIdentical:
      s.site_gen.n_sites = 10;
      s.sim.n_sessions = 3000;
      s.sim.packing = id == ExperimentId::Exp3StrawmanAsymmetric ? PackingMode::Asymmetric
                                                                 : PackingMode::Identical;
      s.strategy.kind = StrategyKind::Strawman;
      break;
    case ExperimentId::Exp5PCP:
      s.site_gen.n_sites = 10;
      s.sim.n_sessions = 3000;
      s.sim.only_site = 0;
      s.strategy.kind = StrategyKind::PCP;
      s.scenarios = {{ScenarioKind::SingleSite, 0}};
      s.classifiers = {ClassifierKind::DecisionTree};
      s.grid = GridSpec{{0.25, 0.5, 1.0, 2.0, 4.0}, {0.5, 0.7, 0.9}};
      break;
    case ExperimentId::SecurityGame:
      s.site_gen.n_sites = 10;
      s.sim.n_sessions = 1;
      s.strategy.kind = StrategyKind::PCP;
      s.scenarios = {{ScenarioKind::SingleSite, 0}};
      s.classifiers = {ClassifierKind::DecisionTree};
      break;
  }
  s.finalize();
  return s;
}

SessionSample observe(const PaddedSession& session, std::size_t max_len) {
  SessionSample out;
  out.session_id = session.base.session_id;
  out.site_id = session.base.site_id;
  out.conn = session.base.connection_type;
  out.dummy_triplets = session.dummy_triplets;
  std::vector<AdversaryView> views;
  for (const auto& c : session.circuits()) {
    views.push_back(to_adversary_view(c));
    out.circuits.push_back({c.purpose, extract_features(views.back(), max_len)});
  }
  out.observed_n = count_triplets(views);
  return out;
}

std::vector<PaddedSession> apply_to_dataset(std::span<const SessionTrace> sessions,
                                            const StrategyConfig& strategy, std::uint64_t seed,
                                            unsigned jobs) {
  std::vector<PaddedSession> out(sessions.size());
  parallel_for(sessions.size(), jobs, [&](std::size_t i) {
    Rng rng = make_rng(seed, {stream::kStrategy, sessions[i].session_id});
    out[i] = apply_strategy(sessions[i], strategy, rng);
  });
  return out;
}

std::vector<PaddedSession> generate_padded(const SimConfig& sim, const StrategyConfig& strategy,
                                           unsigned jobs) {
  const auto plan = plan_sessions(sim);
  std::vector<PaddedSession> out(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const auto vanilla = simulate_planned(sim, plan[i], i);
    Rng rng = make_rng(sim.seed, {stream::kStrategy, i});
    out[i] = apply_strategy(vanilla, strategy, rng);
  });
  return out;
}

std::vector<SessionSample> generate_samples(const SimConfig& sim, const StrategyConfig& strategy,
                                            std::size_t max_len, unsigned jobs) {
  const auto plan = plan_sessions(sim);
  std::vector<SessionSample> out(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) {
    const auto vanilla = simulate_planned(sim, plan[i], i);
    Rng rng = make_rng(sim.seed, {stream::kStrategy, i});
    out[i] = observe(apply_strategy(vanilla, strategy, rng), max_len);
  });
  return out;
}

std::vector<Task> tasks_for(ExperimentId id) {
  using P = CircuitPurpose;
  switch (id) {
    case ExperimentId::Exp1Vanilla:
    case ExperimentId::Exp2Prop999:
      return {{"other-vs-intro", {P::Intro}, {}}, {"other-vs-rend", {P::Rend}, {}}};
    case ExperimentId::Exp3StrawmanAsymmetric:
    case ExperimentId::Exp4StrawmanIdentical:
      return {{"fake-hsdir-vs-hsdir", {P::HSDir}, {P::FakeHSDir}},
              {"fake-intro-vs-intro", {P::Intro}, {P::FakeIntro}},
              {"padded-exit-vs-rend", {P::Rend}, {P::PaddedExit}}};
    case ExperimentId::Exp5PCP:
      return {{"padded-exit-vs-padded-rend", {P::Rend}, {P::PaddedExit}},
              {"fake-hsdir-vs-padded-hsdir", {P::HSDir}, {P::FakeHSDir}},
              {"fake-intro-vs-padded-intro", {P::Intro}, {P::FakeIntro}}};
    case ExperimentId::SecurityGame:
      return {};
  }
  return {};
}

SessionSplit split_sessions(std::span<const SessionSample> samples, const Scenario& scenario,
                            double train_fraction, std::uint64_t seed) {
  std::map<std::uint32_t, std::vector<std::size_t>> by_site;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (scenario.kind == ScenarioKind::SingleSite && samples[i].site_id != scenario.site) continue;
    by_site[samples[i].site_id].push_back(i);
  }
  if (by_site.empty()) throw std::invalid_argument("scenario " + scenario_name(scenario) + " selects no sessions");

  SessionSplit split;
  if (scenario.kind == ScenarioKind::MultiOpen) {
    std::vector<std::uint32_t> sites;
    for (const auto& [site, _] : by_site) sites.push_back(site);
    Rng rng = make_rng(seed, {stream::kSplit, 0});
    std::shuffle(sites.begin(), sites.end(), rng);
    const std::size_t n_train = train_count(sites.size(), train_fraction);
    split.train_sites.assign(sites.begin(), sites.begin() + n_train);
    split.test_sites.assign(sites.begin() + n_train, sites.end());
    std::sort(split.train_sites.begin(), split.train_sites.end());
    std::sort(split.test_sites.begin(), split.test_sites.end());
    std::vector<std::uint32_t> shared;
    std::set_intersection(split.train_sites.begin(), split.train_sites.end(),
                          split.test_sites.begin(), split.test_sites.end(),
                          std::back_inserter(shared));
    if (!shared.empty()) throw std::logic_error("open-world split shares a site");
    for (auto s : split.train_sites) split.train.insert(split.train.end(), by_site[s].begin(), by_site[s].end());
    for (auto s : split.test_sites) split.test.insert(split.test.end(), by_site[s].begin(), by_site[s].end());
  } else {
    for (auto& [site, members] : by_site) {
      for (auto conn : {ConnectionType::Clearnet, ConnectionType::Onion}) {
        std::vector<std::size_t> group;
        for (auto i : members)
          if (samples[i].conn == conn) group.push_back(i);
        Rng rng = make_rng(seed, {stream::kSplit, static_cast<std::uint64_t>(site) + 1,
                                  static_cast<std::uint64_t>(conn)});
        std::shuffle(group.begin(), group.end(), rng);
        const std::size_t n_train = train_count(group.size(), train_fraction);
        split.train.insert(split.train.end(), group.begin(), group.begin() + n_train);
        split.test.insert(split.test.end(), group.begin() + n_train, group.end());
      }
      split.train_sites.push_back(site);
      split.test_sites.push_back(site);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<FeatureVector> task_rows(std::span<const SessionSample> samples,
                                     std::span<const std::size_t> which, const Task& task) {
  std::vector<FeatureVector> rows;
  for (auto i : which) {
    for (const auto& c : samples[i].circuits) {
      int label;
      if (contains(task.positive, c.purpose))
        label = 1;
      else if (task.negative.empty() || contains(task.negative, c.purpose))
        label = 0;
      else
        continue;
      rows.push_back(c.features);
      rows.back().label = label;
    }
  }
  return rows;
}

std::vector<ResultRow> evaluate_tasks(const ExperimentSpec& spec,
                                      std::span<const SessionSample> samples,
                                      std::optional<double> phi, double c) {
  std::vector<ResultRow> rows;
  if (spec.classifiers.empty()) return rows;
  for (const auto& scenario : spec.scenarios) {
    const auto split = split_sessions(samples, scenario, spec.train_fraction, spec.seed);
    for (const auto& task : tasks_for(spec.id)) {
      const auto train = task_rows(samples, split.train, task);
      const auto test = task_rows(samples, split.test, task);
      if (train.empty() || test.empty()) continue;
      for (auto kind : spec.classifiers) {
        const auto model = train_classifier(kind, train, spec.classifier_params);
        rows.push_back({std::string(experiment_name(spec.id)), scenario_name(scenario), task.name,
                        std::string(classifier_name(kind)), phi, c, evaluate(model, test, 1),
                        spec.seed});
      }
    }
  }
  return rows;
}

ResultRow evaluate_bayes(const ExperimentSpec& spec, std::span<const SessionSample> samples,
                         const Scenario& scenario, double phi, double c) {
  std::vector<int> predicted, truth;
  for (const auto& s : samples) {
    if (scenario.kind == ScenarioKind::SingleSite && s.site_id != scenario.site) continue;
    const auto guess = bayes_predict(s.observed_n.value_or(0), phi, c);
    predicted.push_back(guess == ConnectionType::Onion ? 1 : 0);
    truth.push_back(s.conn == ConnectionType::Onion ? 1 : 0);
  }
  return {std::string(experiment_name(spec.id)), scenario_name(scenario),
          "padded-exit-vs-padded-rend", "bayes-n", phi, c,
          evaluate_predictions(predicted, truth, 1, 0), spec.seed};
}

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.id == ExperimentId::SecurityGame)
    throw std::invalid_argument("the security game runs through security_game");
  std::vector<ResultRow> rows;
  if (spec.id == ExperimentId::Exp5PCP) {
    for (double phi : spec.grid->phi) {
      for (double c : spec.grid->c) {
        SimConfig sim = spec.sim;
        sim.user.c = c;
        StrategyConfig strategy = spec.strategy;
        strategy.phi = phi;
        const auto samples = generate_samples(sim, strategy, spec.max_len, spec.jobs);
        rows.push_back(evaluate_bayes(spec, samples, spec.scenarios.front(), phi, c));
        auto learned = evaluate_tasks(spec, samples, phi, c);
        rows.insert(rows.end(), learned.begin(), learned.end());
      }
    }
    return rows;
  }
  const auto samples = generate_samples(spec.sim, spec.strategy, spec.max_len, spec.jobs);
  std::optional<double> phi;
  if (spec.strategy.kind == StrategyKind::PCP) phi = spec.strategy.phi;
  return evaluate_tasks(spec, samples, phi, spec.sim.user.c);
}

void write_results_csv(std::ostream& os, std::span<const ResultRow> rows,
                       const std::string& manifest_hash) {
  os << kResultsHeader << '\n';
  for (const auto& r : rows) {
    os << r.experiment << ',' << r.scenario << ',' << r.task << ',' << r.classifier << ','
       << (r.phi ? format_number(*r.phi) : "-") << ',' << format_number(r.c) << ','
       << format_number(r.report.accuracy) << ',' << format_number(r.report.tpr) << ','
       << format_number(r.report.fpr) << ','
       << (r.report.precision ? format_number(*r.report.precision) : "-") << ','
       << format_number(r.report.leakage) << ',' << r.report.n_train << ',' << r.report.n_test
       << ',' << r.seed << ',' << manifest_hash << '\n';
  }
}

GameResult security_game(const ExperimentSpec& spec, std::uint32_t k) {
  spec.validate();
  if (k < 1) throw std::invalid_argument("game needs k >= 1");
  if (spec.game.trials < 1) throw std::invalid_argument("game needs at least one trial");
  const SiteModel& site = site_by_id(spec.sim, spec.game.site);
  const ClassifierKind kind =
      spec.classifiers.empty() ? ClassifierKind::DecisionTree : spec.classifiers.front();

  auto trace = [&](std::uint64_t trial, std::uint64_t i, ConnectionType conn) {
    const std::uint64_t sid = trial * (static_cast<std::uint64_t>(k) + 1) + i;
    Rng rng = make_rng(spec.seed, {stream::kGame, trial, i});
    const auto vanilla = simulate_session(spec.sim, site, conn, rng, sid);
    Rng srng = make_rng(spec.seed, {stream::kGame, trial, i, 1});
    auto f = last_circuit_features(apply_strategy(vanilla, spec.strategy, srng), spec.max_len);
    f.label = conn == ConnectionType::Onion ? 1 : 0;
    return f;
  };

  std::vector<std::uint8_t> won(spec.game.trials, 0);
  parallel_for(spec.game.trials, spec.jobs, [&](std::size_t t) {
    std::vector<FeatureVector> learning;
    learning.reserve(k);
    for (std::uint32_t i = 0; i < k; ++i)
      learning.push_back(trace(t, i, i % 2 == 0 ? ConnectionType::Clearnet : ConnectionType::Onion));
    const auto model = train_classifier(kind, learning, spec.classifier_params);
    Rng coin = make_rng(spec.seed, {stream::kGame, t, k, 2});
    const bool b = std::bernoulli_distribution(0.5)(coin);
    const auto challenge = trace(t, k, b ? ConnectionType::Onion : ConnectionType::Clearnet);
    won[t] = model.predict(challenge) == challenge.label;
  });

  GameResult r;
  r.trials = spec.game.trials;
  for (auto w : won) r.wins += w;
  const double n = r.trials;
  const double p = r.wins / n;
  r.win_rate = p;
  const double z = 1.959963984540054;
  const double denom = 1 + z * z / n;
  const double centre = (p + z * z / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
  r.ci_low = std::max(0.0, centre - half);
  r.ci_high = std::min(1.0, centre + half);
  return r;
}

void write_game_csv(std::ostream& os, const ExperimentSpec& spec, const GameResult& r,
                    const std::string& manifest_hash) {
  os << "experiment,strategy,phi,k,trials,wins,win_rate,ci_low,ci_high,seed,manifest\n";
  os << experiment_name(spec.id) << ',' << strategy_name(spec.strategy.kind) << ','
     << (spec.strategy.kind == StrategyKind::PCP ? format_number(spec.strategy.phi) : "-") << ','
     << spec.game.k << ',' << r.trials << ',' << r.wins << ',' << format_number(r.win_rate) << ','
     << format_number(r.ci_low) << ',' << format_number(r.ci_high) << ',' << spec.seed << ','
     << manifest_hash << '\n';
}

}  // namespace circfp
