#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "circfp/analytics.hpp"
#include "circfp/config.hpp"
#include "circfp/experiment.hpp"
#include "circfp/manifest.hpp"
#include "circfp/trace_io.hpp"

namespace fs = std::filesystem;
using namespace circfp;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> jobs;
  bool force = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ExperimentSpec load_spec(const Globals& g, std::optional<ExperimentId> id) {
  ExperimentSpec spec = g.config.empty() ? parse_config("", "<defaults>", id) : load_config(g.config, id);
  if (g.seed) spec.seed = *g.seed;
  if (g.jobs) spec.jobs = *g.jobs;
  if (g.out) spec.output_dir = *g.out;
  spec.finalize();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("command line: ") + e.what());
  }
  return spec;
}

void prepare_output(const fs::path& dir, const std::vector<std::string>& names, bool force) {
  fs::create_directories(dir);
  for (const auto& n : names) {
    if (fs::exists(dir / n) && !force)
      throw UsageError((dir / n).string() + " exists; pass --force to overwrite");
  }
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  return os;
}

void finish(const fs::path& dir, const ExperimentSpec& spec, RunManifest& manifest,
            std::vector<std::string> names) {
  write_manifest(dir, manifest, canonical_config(spec), names);
  for (const auto& n : names) std::cout << (dir / n).string() << '\n';
}

std::vector<SessionSample> observe_all(std::span<const PaddedSession> sessions, std::size_t max_len) {
  std::vector<SessionSample> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) out.push_back(observe(s, max_len));
  return out;
}

int cmd_simulate(const Globals& g) {
  const auto spec = load_spec(g, std::nullopt);
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {kTraceFile, kIndexFile, kManifestFile}, g.force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  const auto vanilla = simulate_dataset(spec.sim, spec.jobs);
  std::vector<PaddedSession> sessions;
  sessions.reserve(vanilla.size());
  for (const auto& s : vanilla) sessions.push_back(passthrough(s));
  save_dataset(dir, manifest.hash(), sessions);
  finish(dir, spec, manifest, {kTraceFile, kIndexFile});
  return 0;
}

int cmd_defend(const Globals& g, const fs::path& in) {
  const auto spec = load_spec(g, std::nullopt);
  const auto loaded = load_dataset(in);
  std::vector<SessionTrace> vanilla;
  vanilla.reserve(loaded.size());
  for (const auto& s : loaded) {
    if (!s.added_circuits.empty() || s.dummy_triplets != 0 || s.delay_added != 0.0)
      throw UsageError(in.string() + ": session " + std::to_string(s.base.session_id) +
                       " already carries a defense");
    vanilla.push_back(s.base);
  }
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {kTraceFile, kIndexFile, kManifestFile}, g.force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  const auto padded = apply_to_dataset(vanilla, spec.strategy, spec.seed, spec.jobs);
  save_dataset(dir, manifest.hash(), padded);
  finish(dir, spec, manifest, {kTraceFile, kIndexFile});
  return 0;
}

int cmd_attack(const Globals& g, const fs::path& in) {
  const auto spec = load_spec(g, std::nullopt);
  const auto tasks = tasks_for(spec.id);
  if (tasks.empty()) throw UsageError("experiment " + std::string(experiment_name(spec.id)) + " has no circuit tasks");
  const auto sessions = load_dataset(in);
  const auto samples = observe_all(sessions, spec.max_len);
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {"results.csv", "features.csv", kManifestFile}, g.force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  std::optional<double> phi;
  if (spec.strategy.kind == StrategyKind::PCP) phi = spec.strategy.phi;
  const auto rows = evaluate_tasks(spec, samples, phi, spec.sim.user.c);
  {
    auto os = open_out(dir / "results.csv");
    write_results_csv(os, rows, manifest.hash());
  }
  {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto features = task_rows(samples, all, tasks.front());
    auto os = open_out(dir / "features.csv");
    write_feature_csv(os, features, spec.max_len);
  }
  finish(dir, spec, manifest, {"results.csv", "features.csv"});
  return 0;
}

int cmd_analytic(const Globals& g) {
  const auto spec = load_spec(g, ExperimentId::Exp5PCP);
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {"curves.csv", kManifestFile}, g.force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  const auto points = analytic_curve(spec.grid->phi, spec.grid->c);
  {
    auto os = open_out(dir / "curves.csv");
    write_curve_csv(os, points);
  }
  finish(dir, spec, manifest, {"curves.csv"});
  return 0;
}

int run_game(const ExperimentSpec& spec, bool force) {
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {"game.csv", kManifestFile}, force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  const auto result = security_game(spec, spec.game.k);
  {
    auto os = open_out(dir / "game.csv");
    write_game_csv(os, spec, result, manifest.hash());
  }
  finish(dir, spec, manifest, {"game.csv"});
  return 0;
}

int cmd_experiment(const Globals& g, const std::string& name) {
  const auto id = parse_experiment(name);
  if (!id) throw UsageError("unknown experiment '" + name + "'");
  const auto spec = load_spec(g, *id);
  if (spec.id == ExperimentId::SecurityGame) return run_game(spec, g.force);
  const fs::path dir = spec.output_dir;
  prepare_output(dir, {"results.csv", kManifestFile}, g.force);
  auto manifest = make_manifest(spec.seed, canonical_config(spec));
  const auto rows = run_experiment(spec);
  {
    auto os = open_out(dir / "results.csv");
    write_results_csv(os, rows, manifest.hash());
  }
  finish(dir, spec, manifest, {"results.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circuit fingerprinting simulator for onion-service padding defenses"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "YAML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the configured seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  std::string in_dir;
  std::string experiment_id;
  auto* simulate = app.add_subcommand("simulate", "Generate vanilla traces");
  auto* defend = app.add_subcommand("defend", "Apply the configured strategy to a dataset");
  defend->add_option("--in", in_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* attack = app.add_subcommand("attack", "Train and evaluate classifiers on a dataset");
  attack->add_option("--in", in_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  auto* analytic = app.add_subcommand("analytic", "Emit the closed-form accuracy curves");
  auto* experiment = app.add_subcommand("experiment", "Run an experiment end to end");
  experiment->add_option("id", experiment_id, "exp1..exp5 or game")->required();
  auto* game = app.add_subcommand("game", "Run the security game");
  for (auto* sub : {simulate, defend, attack, analytic, experiment, game}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return cmd_simulate(g);
    if (*defend) return cmd_defend(g, in_dir);
    if (*attack) return cmd_attack(g, in_dir);
    if (*analytic) return cmd_analytic(g);
    if (*experiment) return cmd_experiment(g, experiment_id);
    if (*game) return run_game(load_spec(g, ExperimentId::SecurityGame), g.force);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
