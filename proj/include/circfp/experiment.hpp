#pragma once
/** @file experiment.hpp
 *  @brief Experiment orchestration: datasets, train/test splits, tasks and the security game. */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circfp/classifier.hpp"
#include "circfp/strategies.hpp"

namespace circfp {

enum class ExperimentId : std::uint8_t {
  Exp1Vanilla,
  Exp2Prop999,
  Exp3StrawmanAsymmetric,
  Exp4StrawmanIdentical,
  Exp5PCP,
  SecurityGame,
};

std::string_view experiment_name(ExperimentId id) noexcept;
std::optional<ExperimentId> parse_experiment(std::string_view s) noexcept;

enum class ScenarioKind : std::uint8_t { MultiClosed, MultiOpen, SingleSite };

struct Scenario {
  ScenarioKind kind = ScenarioKind::MultiClosed;
  std::uint32_t site = 0;

  bool operator==(const Scenario&) const = default;
};

std::string scenario_name(const Scenario& s);
std::optional<Scenario> parse_scenario(std::string_view s) noexcept;

struct GridSpec {
  std::vector<double> phi;
  std::vector<double> c;
};

struct GameSpec {
  std::uint32_t k = 20;         ///< learning traces per trial
  std::uint32_t trials = 2000;
  std::uint32_t site = 0;
};

struct ExperimentSpec {
  ExperimentId id = ExperimentId::Exp1Vanilla;
  std::vector<Scenario> scenarios;
  SiteGenParams site_gen;
  SimConfig sim;  ///< sites are generated from site_gen and the seed
  StrategyConfig strategy;
  std::vector<ClassifierKind> classifiers;
  ClassifierParams classifier_params;
  std::size_t max_len = 120;
  double train_fraction = 0.75;
  std::optional<GridSpec> grid;
  GameSpec game;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  unsigned jobs = 1;

  /// Regenerates sim.sites and copies seed/rtt into the nested configs.
  void finalize();
  void validate() const;
};

/// Defaults for each experiment before any config file is applied.
ExperimentSpec preset(ExperimentId id);

/// One circuit as the adversary sees it, with ground truth kept aside.
struct CircuitSample {
  CircuitPurpose purpose = CircuitPurpose::Exit;
  FeatureVector features;
};

struct SessionSample {
  std::uint64_t session_id = 0;
  std::uint32_t site_id = 0;
  ConnectionType conn = ConnectionType::Clearnet;
  std::uint32_t dummy_triplets = 0;
  std::optional<std::uint32_t> observed_n;
  std::vector<CircuitSample> circuits;
};

SessionSample observe(const PaddedSession& session, std::size_t max_len);

/// Vanilla sessions with the strategy applied; strategy randomness comes from its own substream.
std::vector<PaddedSession> generate_padded(const SimConfig& sim, const StrategyConfig& strategy,
                                           unsigned jobs);

std::vector<PaddedSession> apply_to_dataset(std::span<const SessionTrace> sessions,
                                            const StrategyConfig& strategy, std::uint64_t seed,
                                            unsigned jobs);

/// generate_padded followed by observe, without keeping the traces.
std::vector<SessionSample> generate_samples(const SimConfig& sim, const StrategyConfig& strategy,
                                            std::size_t max_len, unsigned jobs);

/// Binary circuit task; label 1 for positive purposes. An empty negative list means "all others".
struct Task {
  std::string name;
  std::vector<CircuitPurpose> positive;
  std::vector<CircuitPurpose> negative;
};

std::vector<Task> tasks_for(ExperimentId id);

struct SessionSplit {
  std::vector<std::size_t> train;  ///< indices into the sample vector
  std::vector<std::size_t> test;
  std::vector<std::uint32_t> train_sites;
  std::vector<std::uint32_t> test_sites;
};

/// Open world splits by site; closed world and single site split sessions within each site,
/// separately per connection type so train and test keep the site's class balance.
/// Throws std::logic_error if an open-world split shares a site.
SessionSplit split_sessions(std::span<const SessionSample> samples, const Scenario& scenario,
                            double train_fraction, std::uint64_t seed);

std::vector<FeatureVector> task_rows(std::span<const SessionSample> samples,
                                     std::span<const std::size_t> which, const Task& task);

struct ResultRow {
  std::string experiment;
  std::string scenario;
  std::string task;
  std::string classifier;
  std::optional<double> phi;
  double c = 0.0;
  ClassifierReport report;
  std::uint64_t seed = 0;
};

std::vector<ResultRow> evaluate_tasks(const ExperimentSpec& spec,
                                      std::span<const SessionSample> samples,
                                      std::optional<double> phi, double c);

/// Bayes-on-N over every session, positive class = onion.
ResultRow evaluate_bayes(const ExperimentSpec& spec, std::span<const SessionSample> samples,
                         const Scenario& scenario, double phi, double c);

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec);

inline constexpr const char* kResultsHeader =
    "experiment,scenario,task,classifier,phi,c,accuracy,tpr,fpr,precision,leakage,n_train,"
    "n_test,seed,manifest";

void write_results_csv(std::ostream& os, std::span<const ResultRow> rows,
                       const std::string& manifest_hash);

struct GameResult {
  std::uint32_t trials = 0;
  std::uint32_t wins = 0;
  double win_rate = 0.0;
  double ci_low = 0.0;   ///< 95% Wilson interval
  double ci_high = 0.0;
};

/// Learning / challenge / response rounds against the configured strategy on game.site.
GameResult security_game(const ExperimentSpec& spec, std::uint32_t k);

void write_game_csv(std::ostream& os, const ExperimentSpec& spec, const GameResult& r,
                    const std::string& manifest_hash);

/// Shortest round-trip decimal rendering used by every writer.
std::string format_number(double v);

}  // namespace circfp
