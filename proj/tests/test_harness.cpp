#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "circfp/config.hpp"
#include "circfp/experiment.hpp"
#include "circfp/manifest.hpp"
#include "circfp/trace_io.hpp"

using namespace circfp;
namespace fs = std::filesystem;

namespace {

ExperimentSpec tiny(ExperimentId id, std::uint32_t sessions = 300) {
  auto spec = preset(id);
  spec.site_gen.n_sites = std::min<std::uint32_t>(spec.site_gen.n_sites, 8);
  spec.sim.n_sessions = sessions;
  spec.finalize();
  return spec;
}

std::string results_text(const ExperimentSpec& spec) {
  std::ostringstream os;
  const auto rows = run_experiment(spec);
  write_results_csv(os, rows, make_manifest(spec.seed, canonical_config(spec)).hash());
  return os.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("circfp_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(CIRCFP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config overrides presets and fills lambda estimate") {
  const auto spec = parse_config(R"(
experiment: exp5
seed: 42
user: {lambda_u: 8, c: 0.7}
sim: {n_sessions: 500, rtt: 0.001, lifetime_exit: {kind: uniform, lo: 100, hi: 200}}
grid: {phi: [1, 2], c: [0.9]}
adversary: {classifiers: [], use_duration: false, tree: {max_depth: 7}}
)",
                                 "inline");
  CHECK(spec.id == ExperimentId::Exp5PCP);
  CHECK(spec.seed == 42);
  CHECK(spec.sim.seed == 42);
  CHECK(spec.sim.user.lambda_u == 8.0);
  CHECK(spec.strategy.lambda_u_estimate == 8.0);
  CHECK(spec.strategy.rtt == 0.001);
  CHECK(spec.sim.lifetime_exit == DelayDistribution::uniform(100, 200));
  CHECK(spec.grid->phi == std::vector<double>{1, 2});
  CHECK(spec.classifiers.empty());
  CHECK_FALSE(spec.classifier_params.use_duration);
  CHECK(spec.classifier_params.tree.max_depth == 7);
  CHECK(spec.classifier_params.tree.min_leaf == 5);
  CHECK(spec.sim.only_site == 0u);
  CHECK(spec.sim.sites.size() == 10);
}

TEST_CASE("config errors carry file, line and column") {
  auto message = [](const std::string& text) {
    try {
      parse_config(text, "run.yaml");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("seed: 1\nsim:\n  n_sesions: 5\n") == "run.yaml:3:3: unknown key 'n_sesions' in sim");
  CHECK(message("seed: many\n").starts_with("run.yaml:1:7: invalid value 'many'"));
  CHECK(message("strategy: {kind: magic}\n").starts_with("run.yaml:1:18: unknown strategy"));
  CHECK(message("sim: {rtt: -1}\n").starts_with("run.yaml: "));
  CHECK(message("experiment: exp5\ngrid: {phi: []}\n").starts_with("run.yaml:2:13:"));
  CHECK(message("scenarios: [somewhere]\n").starts_with("run.yaml:1:13: unknown scenario"));
  CHECK(message("sim: [1, 2\n").starts_with("run.yaml:"));
  CHECK_THROWS_AS(parse_config("experiment: exp2\n", "x", ExperimentId::Exp1Vanilla), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/run.yaml"), ConfigError);
}

TEST_CASE("canonical config round trip and hashing") {
  const auto a = parse_config("experiment: exp3\nseed: 5\n", "a");
  const auto b = parse_config("seed: 5\nexperiment: exp3\nsites: {count: 10}\n", "b");
  CHECK(canonical_config(a) == canonical_config(b));
  const auto c = parse_config("experiment: exp3\nseed: 6\n", "c");
  CHECK(make_manifest(5, canonical_config(a)).hash() == make_manifest(5, canonical_config(b)).hash());
  CHECK(make_manifest(5, canonical_config(a)).hash() != make_manifest(6, canonical_config(c)).hash());
  CHECK(make_manifest(5, canonical_config(a)).hash().size() == 16);
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("machine specs round trip through yaml") {
  StrategyConfig cfg;
  for (const auto& m : {prop999_intro_machine(cfg), prop999_rend_machine(cfg),
                        pcp_role_machine(RequestKind::HsdirFetch, cfg)}) {
    const auto text = machine_to_yaml(m);
    CHECK(machine_from_yaml(text, "machine.yaml") == m);
  }
  CHECK_THROWS_AS(machine_from_yaml("name: x\nstates: []\nbogus: 1\n", "m"), ConfigError);
  CHECK_THROWS_AS(machine_from_yaml(
                      "name: x\nstart_state: a\nstates: [{id: a}]\n"
                      "transitions: [{from: a, event: TimerFired, to: b}]\n",
                      "m"),
                  ConfigError);
}

TEST_CASE("trace files round trip") {
  auto spec = tiny(ExperimentId::Exp5PCP, 60);
  const auto padded = generate_padded(spec.sim, spec.strategy, 1);
  std::ostringstream traces, index;
  write_trace_jsonl(traces, "run", padded);
  write_session_index(index, padded);
  std::istringstream ti(traces.str()), ii(index.str());
  CHECK(read_dataset(ti, ii) == padded);

  const std::string first = traces.str().substr(0, traces.str().find('\n'));
  CHECK(first.starts_with("{\"run_id\":\"run\",\"session_id\":0,\"circuit_id\":"));
  CHECK(first.find("\"dir\":\"-1\",\"cmd\":\"EXTEND2\",\"pad\":0}") != std::string::npos);
  CHECK(traces.str().find('\r') == std::string::npos);

  const auto dir = scratch("roundtrip");
  save_dataset(dir, "run", padded);
  CHECK(load_dataset(dir) == padded);
  std::vector<PaddedSession> none;
  CHECK_THROWS(save_dataset(dir, "run", none));
  fs::remove_all(dir);
}

TEST_CASE("malformed trace files report the line") {
  std::istringstream traces("{\"run_id\":\"r\"}\n"), index("");
  try {
    read_dataset(traces, index, "data");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  CHECK_THROWS(load_dataset("/nonexistent/dir"));
}

TEST_CASE("open world splits never share a site; closed world never shares a session") {
  const auto spec = tiny(ExperimentId::Exp1Vanilla, 400);
  const auto samples = generate_samples(spec.sim, spec.strategy, spec.max_len, 1);
  const auto open = split_sessions(samples, {ScenarioKind::MultiOpen, 0}, 0.75, 3);
  CHECK(open.train_sites.size() == 6);
  CHECK(open.test_sites.size() == 2);
  std::set<std::uint32_t> train_sites;
  for (auto i : open.train) train_sites.insert(samples[i].site_id);
  for (auto i : open.test) CHECK(train_sites.count(samples[i].site_id) == 0);
  CHECK(open.train.size() + open.test.size() == samples.size());

  const auto closed = split_sessions(samples, {ScenarioKind::MultiClosed, 0}, 0.75, 3);
  std::set<std::size_t> train(closed.train.begin(), closed.train.end());
  for (auto i : closed.test) CHECK(train.count(i) == 0);
  std::map<std::pair<std::uint32_t, ConnectionType>, std::size_t> per_group, train_group;
  for (const auto& s : samples) ++per_group[{s.site_id, s.conn}];
  for (auto i : closed.train) ++train_group[{samples[i].site_id, samples[i].conn}];
  for (const auto& [group, n] : per_group)
    CHECK(train_group[group] == static_cast<std::size_t>(std::llround(0.75 * n)));
  CHECK(closed.train.size() + closed.test.size() == samples.size());

  CHECK_THROWS_AS(split_sessions(samples, {ScenarioKind::SingleSite, 99}, 0.75, 3), std::invalid_argument);
}

TEST_CASE("results are byte-identical for equal config and seed") {
  auto spec = tiny(ExperimentId::Exp4StrawmanIdentical, 200);
  const auto a = results_text(spec);
  spec.jobs = 3;
  CHECK(results_text(spec) == a);
  CHECK(a.starts_with(std::string(kResultsHeader) + "\n"));
  std::istringstream lines(a);
  std::string line;
  std::getline(lines, line);
  const auto hash = make_manifest(spec.seed, canonical_config(spec)).hash();
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.ends_with("," + hash));
  }
  CHECK(rows == 2 * 3 * 2);
}

TEST_CASE("tasks per experiment") {
  CHECK(tasks_for(ExperimentId::Exp1Vanilla).size() == 2);
  CHECK(tasks_for(ExperimentId::Exp3StrawmanAsymmetric).size() == 3);
  CHECK(tasks_for(ExperimentId::Exp5PCP).front().name == "padded-exit-vs-padded-rend");
  CHECK(tasks_for(ExperimentId::SecurityGame).empty());
}

TEST_CASE("experiment 5 default dataset has 1500 circuits per class") {
  const auto spec = preset(ExperimentId::Exp5PCP);
  const auto samples = generate_samples(spec.sim, spec.strategy, spec.max_len, 1);
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (const auto& task : tasks_for(ExperimentId::Exp5PCP)) {
    const auto rows = task_rows(samples, all, task);
    const auto positives = std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.label == 1; });
    CHECK(positives == 1500);
    CHECK(rows.size() - positives == 1500);
  }
}

TEST_CASE("security game") {
  auto spec = preset(ExperimentId::SecurityGame);
  spec.game.trials = 300;

  SUBCASE("vanilla traces are recognised") {
    spec.strategy.kind = StrategyKind::None;
    const auto r = security_game(spec, 20);
    CHECK(r.win_rate >= 0.95);
    CHECK(r.ci_low <= r.win_rate);
    CHECK(r.ci_high >= r.win_rate - 1e-12);
  }
  SUBCASE("pcp at phi = 1 stays near the balanced-prior optimum") {
    const auto r = security_game(spec, 20);
    CHECK(r.trials == 300);
    CHECK(r.win_rate <= 0.77);
  }
  SUBCASE("degenerate games are rejected") {
    CHECK_THROWS_AS(security_game(spec, 0), std::invalid_argument);
    spec.game.trials = 0;
    CHECK_THROWS_AS(security_game(spec, 20), std::invalid_argument);
  }
}

TEST_CASE("command line exit codes and overwrite protection") {
  const auto dir = scratch("cli");
  const auto cfg = dir / "run.yaml";
  std::ofstream(cfg) << "experiment: exp1\nsim: {n_sessions: 50}\nsites: {count: 5}\n";
  const auto bad = dir / "bad.yaml";
  std::ofstream(bad) << "sim:\n  nope: 1\n";
  const std::string out = (dir / "out").string();

  CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out) == 0);
  CHECK(fs::exists(dir / "out" / kTraceFile));
  CHECK(fs::exists(dir / "out" / kManifestFile));
  CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out) == 1);
  CHECK(run_cli("simulate --config " + cfg.string() + " --out " + out + " --force") == 0);
  CHECK(run_cli("attack --config " + cfg.string() + " --in " + out + " --out " + (dir / "atk").string()) == 0);
  CHECK(fs::exists(dir / "atk" / "results.csv"));
  CHECK(fs::exists(dir / "atk" / "features.csv"));
  CHECK(run_cli("simulate --config " + bad.string() + " --out " + (dir / "x").string()) == 2);
  CHECK(run_cli("analytic --out " + (dir / "curves").string()) == 0);
  CHECK(fs::exists(dir / "curves" / "curves.csv"));
  fs::remove_all(dir);
}

TEST_CASE("shipped default config spells out the experiment 5 preset") {
  const auto spec = load_config(std::string(CIRCFP_SOURCE_DIR) + "/config/default.yaml");
  CHECK(canonical_config(spec) == canonical_config(preset(ExperimentId::Exp5PCP)));
}
