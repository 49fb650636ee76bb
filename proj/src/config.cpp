#include "circfp/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

namespace circfp {

namespace {

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node& node, const std::string& msg) const {
    const auto m = node.Mark();
    if (m.is_null()) throw ConfigError(source_ + ": " + msg);
    throw ConfigError(source_ + ":" + std::to_string(m.line + 1) + ":" +
                      std::to_string(m.column + 1) + ": " + msg);
  }

  void expect_map(const YAML::Node& node, const std::string& what) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
  }

  void check_keys(const YAML::Node& node, const std::string& what,
                  std::initializer_list<std::string_view> allowed) const {
    expect_map(node, what);
    for (const auto& kv : node) {
      const auto key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        fail(kv.first, "unknown key '" + key + "' in " + what);
    }
  }

  template <class T>
  T scalar(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    try {
      return node.as<T>();
    } catch (const YAML::BadConversion&) {
      fail(node, "invalid value '" + node.Scalar() + "' for " + what);
    }
  }

  template <class T>
  void set(const YAML::Node& parent, const char* key, T& out, const std::string& what) const {
    if (const auto n = parent[key]) out = scalar<T>(n, what + "." + key);
  }

  DelayDistribution distribution(const YAML::Node& node, const std::string& what) const {
    check_keys(node, what, {"kind", "value", "rate", "lo", "hi"});
    const auto need = [&](const char* key) {
      const auto n = node[key];
      if (!n) fail(node, what + " needs '" + key + "'");
      return scalar<double>(n, what + "." + key);
    };
    const auto kind_node = node["kind"];
    if (!kind_node) fail(node, what + " needs 'kind'");
    const auto kind = scalar<std::string>(kind_node, what + ".kind");
    try {
      if (kind == "fixed") return DelayDistribution::fixed(need("value"));
      if (kind == "exponential") return DelayDistribution::exponential(need("rate"));
      if (kind == "uniform") return DelayDistribution::uniform(need("lo"), need("hi"));
    } catch (const std::invalid_argument& e) {
      fail(node, what + ": " + e.what());
    }
    fail(kind_node, "unknown distribution kind '" + kind + "'");
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

void apply(const Reader& r, const YAML::Node& root, ExperimentSpec& spec, bool& lambda_estimate_set) {
  r.set(root, "seed", spec.seed, "seed");
  r.set(root, "jobs", spec.jobs, "jobs");
  r.set(root, "train_fraction", spec.train_fraction, "train_fraction");
  if (const auto n = root["output_dir"]) spec.output_dir = r.scalar<std::string>(n, "output_dir");
  if (const auto n = root["scenarios"]) {
    if (!n.IsSequence() || n.size() == 0) r.fail(n, "scenarios must be a non-empty list");
    spec.scenarios.clear();
    for (const auto& item : n) {
      const auto name = r.scalar<std::string>(item, "scenarios");
      const auto s = parse_scenario(name);
      if (!s) r.fail(item, "unknown scenario '" + name + "'");
      spec.scenarios.push_back(*s);
    }
  }

  if (const auto u = root["user"]) {
    r.check_keys(u, "user", {"lambda_u", "c"});
    r.set(u, "lambda_u", spec.sim.user.lambda_u, "user");
    r.set(u, "c", spec.sim.user.c, "user");
  }

  if (const auto s = root["sim"]) {
    r.check_keys(s, "sim", {"n_sessions", "rtt", "packing", "stratified", "scheduling_fingerprint",
                            "only_site", "lifetime_exit", "rend_idle"});
    r.set(s, "n_sessions", spec.sim.n_sessions, "sim");
    r.set(s, "rtt", spec.sim.rtt, "sim");
    r.set(s, "stratified", spec.sim.stratified, "sim");
    r.set(s, "scheduling_fingerprint", spec.sim.scheduling_fingerprint, "sim");
    if (const auto n = s["packing"]) {
      const auto v = r.scalar<std::string>(n, "sim.packing");
      if (v == "identical")
        spec.sim.packing = PackingMode::Identical;
      else if (v == "asymmetric")
        spec.sim.packing = PackingMode::Asymmetric;
      else
        r.fail(n, "unknown packing '" + v + "'");
    }
    if (const auto n = s["only_site"]) {
      if (n.IsNull())
        spec.sim.only_site.reset();
      else
        spec.sim.only_site = r.scalar<std::uint32_t>(n, "sim.only_site");
    }
    if (const auto n = s["lifetime_exit"]) spec.sim.lifetime_exit = r.distribution(n, "sim.lifetime_exit");
    if (const auto n = s["rend_idle"]) spec.sim.rend_idle = r.distribution(n, "sim.rend_idle");
  }

  if (const auto s = root["sites"]) {
    r.check_keys(s, "sites", {"count", "min_cells", "max_cells", "min_bursts", "max_bursts",
                              "inflation_mean", "inflation_sd"});
    r.set(s, "count", spec.site_gen.n_sites, "sites");
    r.set(s, "min_cells", spec.site_gen.min_cells, "sites");
    r.set(s, "max_cells", spec.site_gen.max_cells, "sites");
    r.set(s, "min_bursts", spec.site_gen.min_bursts, "sites");
    r.set(s, "max_bursts", spec.site_gen.max_bursts, "sites");
    r.set(s, "inflation_mean", spec.site_gen.inflation_mean, "sites");
    r.set(s, "inflation_sd", spec.site_gen.inflation_sd, "sites");
  }

  if (const auto s = root["strategy"]) {
    r.check_keys(s, "strategy", {"kind", "phi", "lambda_u_estimate", "prop999_lifetime",
                                 "prop999_intro_padding"});
    if (const auto n = s["kind"]) {
      const auto v = r.scalar<std::string>(n, "strategy.kind");
      const auto k = parse_strategy(v);
      if (!k) r.fail(n, "unknown strategy '" + v + "'");
      spec.strategy.kind = *k;
    }
    r.set(s, "phi", spec.strategy.phi, "strategy");
    if (const auto n = s["lambda_u_estimate"]) {
      spec.strategy.lambda_u_estimate = r.scalar<double>(n, "strategy.lambda_u_estimate");
      lambda_estimate_set = true;
    }
    if (const auto n = s["prop999_lifetime"])
      spec.strategy.prop999_lifetime = r.distribution(n, "strategy.prop999_lifetime");
    if (const auto n = s["prop999_intro_padding"]) {
      if (!n.IsSequence() || n.size() != 2) r.fail(n, "strategy.prop999_intro_padding must be [lo, hi]");
      spec.strategy.prop999_intro_padding.lo = r.scalar<std::uint32_t>(n[0], "prop999_intro_padding");
      spec.strategy.prop999_intro_padding.hi = r.scalar<std::uint32_t>(n[1], "prop999_intro_padding");
    }
  }

  if (const auto a = root["adversary"]) {
    r.check_keys(a, "adversary", {"max_len", "classifiers", "use_duration", "tree"});
    r.set(a, "max_len", spec.max_len, "adversary");
    r.set(a, "use_duration", spec.classifier_params.use_duration, "adversary");
    if (const auto n = a["classifiers"]) {
      if (!n.IsSequence()) r.fail(n, "adversary.classifiers must be a list");
      spec.classifiers.clear();
      for (const auto& item : n) {
        const auto v = r.scalar<std::string>(item, "adversary.classifiers");
        const auto k = parse_classifier(v);
        if (!k) r.fail(item, "unknown classifier '" + v + "'");
        spec.classifiers.push_back(*k);
      }
    }
    if (const auto t = a["tree"]) {
      r.check_keys(t, "adversary.tree", {"max_depth", "min_leaf"});
      r.set(t, "max_depth", spec.classifier_params.tree.max_depth, "adversary.tree");
      r.set(t, "min_leaf", spec.classifier_params.tree.min_leaf, "adversary.tree");
    }
  }

  if (const auto g = root["grid"]) {
    r.check_keys(g, "grid", {"phi", "c"});
    GridSpec grid = spec.grid.value_or(GridSpec{});
    const auto list = [&](const char* key, std::vector<double>& out) {
      const auto n = g[key];
      if (!n) return;
      if (!n.IsSequence() || n.size() == 0) r.fail(n, std::string("grid.") + key + " must be a non-empty list");
      out.clear();
      for (const auto& item : n) out.push_back(r.scalar<double>(item, std::string("grid.") + key));
    };
    list("phi", grid.phi);
    list("c", grid.c);
    spec.grid = grid;
  }

  if (const auto g = root["game"]) {
    r.check_keys(g, "game", {"k", "trials", "site"});
    r.set(g, "k", spec.game.k, "game");
    r.set(g, "trials", spec.game.trials, "game");
    r.set(g, "site", spec.game.site, "game");
  }
}

}  // namespace

ExperimentSpec parse_config(const std::string& text, const std::string& source,
                            std::optional<ExperimentId> experiment) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  Reader r(source);
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  r.check_keys(root, "config", {"experiment", "seed", "jobs", "output_dir", "scenarios",
                                "train_fraction", "user", "sim", "sites", "strategy", "adversary",
                                "grid", "game"});

  ExperimentId id = experiment.value_or(ExperimentId::Exp1Vanilla);
  if (const auto n = root["experiment"]) {
    const auto v = r.scalar<std::string>(n, "experiment");
    const auto parsed = parse_experiment(v);
    if (!parsed) r.fail(n, "unknown experiment '" + v + "'");
    if (experiment && *experiment != *parsed)
      r.fail(n, "config is for " + v + " but " + std::string(experiment_name(*experiment)) +
                    " was requested");
    id = *parsed;
  }

  ExperimentSpec spec = preset(id);
  bool lambda_estimate_set = false;
  apply(r, root, spec, lambda_estimate_set);
  if (!lambda_estimate_set) spec.strategy.lambda_u_estimate = spec.sim.user.lambda_u;
  try {
    spec.site_gen.validate();
    spec.finalize();
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return spec;
}

ExperimentSpec load_config(const std::filesystem::path& path, std::optional<ExperimentId> experiment) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string(), experiment);
}

namespace {

nlohmann::ordered_json dist_json(const DelayDistribution& d) {
  switch (d.kind) {
    case DelayDistribution::Kind::Fixed:
      return {{"kind", "fixed"}, {"value", d.a}};
    case DelayDistribution::Kind::Exponential:
      return {{"kind", "exponential"}, {"rate", d.a}};
    case DelayDistribution::Kind::Uniform:
      return {{"kind", "uniform"}, {"lo", d.a}, {"hi", d.b}};
  }
  return {};
}

}  // namespace

std::string canonical_config(const ExperimentSpec& spec) {
  nlohmann::ordered_json j;
  j["experiment"] = experiment_name(spec.id);
  j["seed"] = spec.seed;
  j["train_fraction"] = spec.train_fraction;
  auto& scen = j["scenarios"] = nlohmann::ordered_json::array();
  for (const auto& s : spec.scenarios) scen.push_back(scenario_name(s));
  j["user"] = {{"lambda_u", spec.sim.user.lambda_u}, {"c", spec.sim.user.c}};
  nlohmann::ordered_json sim;
  sim["n_sessions"] = spec.sim.n_sessions;
  sim["rtt"] = spec.sim.rtt;
  sim["packing"] = spec.sim.packing == PackingMode::Identical ? "identical" : "asymmetric";
  sim["stratified"] = spec.sim.stratified;
  sim["scheduling_fingerprint"] = spec.sim.scheduling_fingerprint;
  sim["only_site"] = spec.sim.only_site ? nlohmann::ordered_json(*spec.sim.only_site) : nullptr;
  sim["lifetime_exit"] = dist_json(spec.sim.lifetime_exit);
  sim["rend_idle"] = dist_json(spec.sim.rend_idle);
  j["sim"] = sim;
  const auto& g = spec.site_gen;
  j["sites"] = {{"count", g.n_sites},           {"min_cells", g.min_cells},
                {"max_cells", g.max_cells},     {"min_bursts", g.min_bursts},
                {"max_bursts", g.max_bursts},   {"inflation_mean", g.inflation_mean},
                {"inflation_sd", g.inflation_sd}};
  nlohmann::ordered_json st;
  st["kind"] = strategy_name(spec.strategy.kind);
  st["phi"] = spec.strategy.phi;
  st["lambda_u_estimate"] = spec.strategy.lambda_u_estimate;
  st["prop999_lifetime"] = dist_json(spec.strategy.prop999_lifetime);
  st["prop999_intro_padding"] = {spec.strategy.prop999_intro_padding.lo,
                                 spec.strategy.prop999_intro_padding.hi};
  j["strategy"] = st;
  nlohmann::ordered_json adv;
  adv["max_len"] = spec.max_len;
  auto& cls = adv["classifiers"] = nlohmann::ordered_json::array();
  for (auto k : spec.classifiers) cls.push_back(classifier_name(k));
  adv["use_duration"] = spec.classifier_params.use_duration;
  adv["tree"] = {{"max_depth", spec.classifier_params.tree.max_depth},
                 {"min_leaf", spec.classifier_params.tree.min_leaf}};
  j["adversary"] = adv;
  if (spec.grid) j["grid"] = {{"phi", spec.grid->phi}, {"c", spec.grid->c}};
  j["game"] = {{"k", spec.game.k}, {"trials", spec.game.trials}, {"site", spec.game.site}};
  return j.dump();
}

}  // namespace circfp

namespace circfp {

namespace {

void emit_distribution(YAML::Emitter& out, const DelayDistribution& d) {
  out << YAML::Flow << YAML::BeginMap;
  switch (d.kind) {
    case DelayDistribution::Kind::Fixed:
      out << YAML::Key << "kind" << YAML::Value << "fixed" << YAML::Key << "value" << YAML::Value
          << format_number(d.a);
      break;
    case DelayDistribution::Kind::Exponential:
      out << YAML::Key << "kind" << YAML::Value << "exponential" << YAML::Key << "rate"
          << YAML::Value << format_number(d.a);
      break;
    case DelayDistribution::Kind::Uniform:
      out << YAML::Key << "kind" << YAML::Value << "uniform" << YAML::Key << "lo" << YAML::Value
          << format_number(d.a) << YAML::Key << "hi" << YAML::Value << format_number(d.b);
      break;
  }
  out << YAML::EndMap;
}

}  // namespace

std::string machine_to_yaml(const MachineSpec& m) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << m.name;
  out << YAML::Key << "start_state" << YAML::Value << m.start_state;
  out << YAML::Key << "rtt" << YAML::Value << format_number(m.rtt);
  out << YAML::Key << "applies_to" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (auto p : m.applies_to) out << std::string(purpose_name(p));
  out << YAML::EndSeq;
  if (m.hold_open) {
    out << YAML::Key << "hold_open" << YAML::Value;
    emit_distribution(out, *m.hold_open);
  }
  out << YAML::Key << "states" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : m.states) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << s.id;
    if (const auto* req = std::get_if<RequestKind>(&s.pattern)) {
      out << YAML::Key << "request" << YAML::Value << std::string(request_name(*req));
    } else if (const auto* cells = std::get_if<std::vector<RawPaddingCell>>(&s.pattern)) {
      out << YAML::Key << "cells" << YAML::Value << YAML::BeginSeq;
      for (const auto& c : *cells)
        out << YAML::Flow << YAML::BeginSeq << format_number(c.offset_rtt)
            << (c.direction == CellDirection::Outgoing ? "out" : "in")
            << std::string(command_name(c.command)) << YAML::EndSeq;
      out << YAML::EndSeq;
    }
    out << YAML::Key << "delay" << YAML::Value;
    emit_distribution(out, s.delay);
    out << YAML::Key << "repeat" << YAML::Value << s.repeat;
    if (s.max_emissions)
      out << YAML::Key << "max_emissions" << YAML::Value << YAML::Flow << YAML::BeginSeq
          << s.max_emissions->lo << s.max_emissions->hi << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "transitions" << YAML::Value << YAML::BeginSeq;
  for (const auto& [key, to] : m.transitions)
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value << key.first
        << YAML::Key << "event" << YAML::Value << std::string(event_name(key.second)) << YAML::Key
        << "to" << YAML::Value << to << YAML::EndMap;
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

MachineSpec machine_from_yaml(const std::string& text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ":" +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  Reader r(source);
  r.check_keys(root, "machine", {"name", "start_state", "rtt", "applies_to", "hold_open", "states",
                                 "transitions"});
  MachineSpec m;
  r.set(root, "name", m.name, "machine");
  r.set(root, "start_state", m.start_state, "machine");
  r.set(root, "rtt", m.rtt, "machine");
  if (const auto n = root["applies_to"]) {
    if (!n.IsSequence()) r.fail(n, "applies_to must be a list");
    for (const auto& item : n) {
      const auto v = r.scalar<std::string>(item, "applies_to");
      const auto p = parse_purpose(v);
      if (!p) r.fail(item, "unknown circuit purpose '" + v + "'");
      m.applies_to.push_back(*p);
    }
  }
  if (const auto n = root["hold_open"]) m.hold_open = r.distribution(n, "hold_open");
  if (const auto states = root["states"]) {
    if (!states.IsSequence()) r.fail(states, "states must be a list");
    for (const auto& sn : states) {
      r.check_keys(sn, "state", {"id", "request", "cells", "delay", "repeat", "max_emissions"});
      MachineStateSpec s;
      r.set(sn, "id", s.id, "state");
      if (const auto n = sn["request"]) {
        const auto v = r.scalar<std::string>(n, "state.request");
        const auto k = parse_request(v);
        if (!k) r.fail(n, "unknown request kind '" + v + "'");
        s.pattern = *k;
      } else if (const auto cells = sn["cells"]) {
        if (!cells.IsSequence()) r.fail(cells, "cells must be a list");
        std::vector<RawPaddingCell> raw;
        for (const auto& cn : cells) {
          if (!cn.IsSequence() || cn.size() != 3) r.fail(cn, "a cell is [offset_rtt, out|in, command]");
          RawPaddingCell c;
          c.offset_rtt = r.scalar<double>(cn[0], "cell offset");
          const auto dir = r.scalar<std::string>(cn[1], "cell direction");
          if (dir == "out")
            c.direction = CellDirection::Outgoing;
          else if (dir == "in")
            c.direction = CellDirection::Incoming;
          else
            r.fail(cn[1], "cell direction must be out or in");
          const auto cmd = r.scalar<std::string>(cn[2], "cell command");
          const auto parsed = parse_command(cmd);
          if (!parsed) r.fail(cn[2], "unknown relay command '" + cmd + "'");
          c.command = *parsed;
          raw.push_back(c);
        }
        s.pattern = std::move(raw);
      }
      if (const auto n = sn["delay"]) s.delay = r.distribution(n, "state.delay");
      r.set(sn, "repeat", s.repeat, "state");
      if (const auto n = sn["max_emissions"]) {
        if (!n.IsSequence() || n.size() != 2) r.fail(n, "max_emissions must be [lo, hi]");
        s.max_emissions = CountRange{r.scalar<std::uint32_t>(n[0], "max_emissions"),
                                     r.scalar<std::uint32_t>(n[1], "max_emissions")};
      }
      m.states.push_back(std::move(s));
    }
  }
  if (const auto trans = root["transitions"]) {
    if (!trans.IsSequence()) r.fail(trans, "transitions must be a list");
    for (const auto& tn : trans) {
      r.check_keys(tn, "transition", {"from", "event", "to"});
      const auto ev = r.scalar<std::string>(tn["event"], "transition.event");
      const auto e = parse_event(ev);
      if (!e) r.fail(tn["event"], "unknown machine event '" + ev + "'");
      m.transitions[{r.scalar<std::string>(tn["from"], "transition.from"), *e}] =
          r.scalar<std::string>(tn["to"], "transition.to");
    }
  }
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return m;
}

}  // namespace circfp
