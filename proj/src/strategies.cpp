#include "circfp/strategies.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace circfp {

namespace {

constexpr double kForever = std::numeric_limits<double>::infinity();

void sort_cells(std::vector<Cell>& cells) {
  std::stable_sort(cells.begin(), cells.end(),
                   [](const Cell& a, const Cell& b) { return a.time < b.time; });
}

std::vector<Cell> after_prologue(const CircuitTrace& c) {
  if (c.cells.size() < kPrologueCells) return {};
  return {c.cells.begin() + kPrologueCells, c.cells.end()};
}

const CircuitTrace& find_purpose(const SessionTrace& s, CircuitPurpose p) {
  for (const auto& c : s.circuits)
    if (c.purpose == p) return c;
  throw std::invalid_argument("session " + std::to_string(s.session_id) + " has no " +
                              std::string(purpose_name(p)) + " circuit");
}

void require_vanilla(const SessionTrace& s) {
  const std::size_t want = s.connection_type == ConnectionType::Clearnet ? 1 : 3;
  if (s.circuits.size() != want)
    throw std::invalid_argument("session " + std::to_string(s.session_id) + " is not vanilla");
}

MachineSpec counting_machine(std::string name, MachineEvent counted, int count,
                             std::vector<MachineStateSpec> tail) {
  MachineSpec m;
  m.name = std::move(name);
  for (int i = 0; i < count; ++i) {
    m.states.push_back({"seen" + std::to_string(i), std::monostate{}});
    const std::string next = i + 1 < count ? "seen" + std::to_string(i + 1) : tail.front().id;
    m.transitions[{"seen" + std::to_string(i), counted}] = next;
  }
  for (auto& s : tail) m.states.push_back(std::move(s));
  m.start_state = "seen0";
  return m;
}

}  // namespace

std::string_view strategy_name(StrategyKind k) noexcept {
  switch (k) {
    case StrategyKind::None:
      return "none";
    case StrategyKind::Prop999:
      return "prop999";
    case StrategyKind::Strawman:
      return "strawman";
    case StrategyKind::PCP:
      return "pcp";
  }
  return "none";
}

std::optional<StrategyKind> parse_strategy(std::string_view s) noexcept {
  for (auto k : {StrategyKind::None, StrategyKind::Prop999, StrategyKind::Strawman, StrategyKind::PCP})
    if (strategy_name(k) == s) return k;
  return std::nullopt;
}

void StrategyConfig::validate() const {
  if (!(phi >= 0.0)) throw std::invalid_argument("phi must be >= 0");
  if (!(lambda_u_estimate > 0.0)) throw std::invalid_argument("lambda_u_estimate must be > 0");
  if (!(rtt > 0.0)) throw std::invalid_argument("strategy rtt must be > 0");
  if (prop999_intro_padding.lo > prop999_intro_padding.hi)
    throw std::invalid_argument("prop999 intro padding range is empty");
  prop999_lifetime.validate();
}

std::vector<CircuitTrace> PaddedSession::circuits() const {
  std::vector<CircuitTrace> all = base.circuits;
  all.insert(all.end(), added_circuits.begin(), added_circuits.end());
  std::stable_sort(all.begin(), all.end(), [](const CircuitTrace& a, const CircuitTrace& b) {
    return a.circuit_id < b.circuit_id;
  });
  return all;
}

PaddedSession passthrough(const SessionTrace& session) {
  PaddedSession p;
  p.base = session;
  return p;
}

MachineSpec prop999_intro_machine(const StrategyConfig& config) {
  MachineStateSpec request{"pad_request",
                           std::vector<RawPaddingCell>{{0.0, CellDirection::Outgoing, RelayCommand::Data}},
                           DelayDistribution::fixed(0.0)};
  MachineStateSpec response{"pad_response",
                            std::vector<RawPaddingCell>{{0.0, CellDirection::Incoming, RelayCommand::Data}},
                            DelayDistribution::fixed(kDataSpacing), true, config.prop999_intro_padding};
  auto m = counting_machine("prop999-intro", MachineEvent::RealCellSent, 4,
                            {std::move(request), std::move(response)});
  m.transitions[{"pad_request", MachineEvent::TimerFired}] = "pad_response";
  m.applies_to = {CircuitPurpose::Intro};
  m.rtt = config.rtt;
  m.hold_open = config.prop999_lifetime;
  return m;
}

MachineSpec prop999_rend_machine(const StrategyConfig& config) {
  MachineStateSpec pair{"pad_pair",
                        std::vector<RawPaddingCell>{{0.0, CellDirection::Outgoing, RelayCommand::Begin},
                                                    {0.5, CellDirection::Incoming, RelayCommand::Connected}},
                        DelayDistribution::fixed(0.0)};
  auto m = counting_machine("prop999-rend", MachineEvent::RealCellReceived, 3, {std::move(pair)});
  m.states.push_back({"idle", std::monostate{}});
  m.transitions[{"pad_pair", MachineEvent::TimerFired}] = "idle";
  m.applies_to = {CircuitPurpose::Rend};
  m.rtt = config.rtt;
  m.hold_open = config.prop999_lifetime;
  return m;
}

MachineSpec pcp_role_machine(RequestKind kind, const StrategyConfig& config) {
  MachineSpec m;
  m.name = "pcp-" + std::string(request_name(kind));
  m.rtt = config.rtt;
  m.start_state = "build";
  m.states.push_back({"build", std::monostate{}});
  m.states.push_back({"half", std::monostate{}});
  m.states.push_back({"dummies", kind, DelayDistribution::exponential(config.lambda_d()), true});
  m.states.push_back({"done", std::monostate{}});
  m.transitions[{"build", MachineEvent::RealCellReceived}] = "half";
  m.transitions[{"half", MachineEvent::RealCellReceived}] = "dummies";
  for (const char* s : {"build", "half", "dummies"})
    m.transitions[{s, MachineEvent::ConnectionArrived}] = "done";
  return m;
}

PaddedSession apply_prop999(const SessionTrace& session, const StrategyConfig& config, Rng& rng) {
  config.validate();
  require_vanilla(session);
  PaddedSession out = passthrough(session);
  if (session.connection_type == ConnectionType::Clearnet) return out;
  const MachineSpec intro = prop999_intro_machine(config);
  const MachineSpec rend = prop999_rend_machine(config);
  for (auto& c : out.base.circuits) {
    Rng sub(rng());
    if (intro.applies(c.purpose))
      c = run_machine(intro, c, kForever, sub);
    else if (rend.applies(c.purpose))
      c = run_machine(rend, c, kForever, sub);
  }
  return out;
}

PaddedSession apply_strawman(const SessionTrace& session, const StrategyConfig& config, Rng&) {
  config.validate();
  require_vanilla(session);
  PaddedSession out = passthrough(session);
  if (session.connection_type == ConnectionType::Onion) return out;

  const double r = config.rtt;
  const CircuitTrace& exit = find_purpose(session, CircuitPurpose::Exit);
  const double t0 = session.arrival;

  CircuitTrace fake_hsdir;
  fake_hsdir.circuit_id = circuit_id_for(session.session_id, CircuitSlot::HsdirRole);
  fake_hsdir.purpose = CircuitPurpose::FakeHSDir;
  fake_hsdir.created_at = t0;
  fake_hsdir.cells = circuit_prologue(t0, r);
  auto fetch = dummy_request(RequestKind::HsdirFetch, t0 + prologue_span(r), r);
  fake_hsdir.cells.insert(fake_hsdir.cells.end(), fetch.begin(), fetch.end());
  fake_hsdir.closed_at = fake_hsdir.last_time();

  const double t1 = fake_hsdir.last_time();
  CircuitTrace fake_intro;
  fake_intro.circuit_id = circuit_id_for(session.session_id, CircuitSlot::IntroRole);
  fake_intro.purpose = CircuitPurpose::FakeIntro;
  fake_intro.created_at = t1;
  fake_intro.cells = circuit_prologue(t1, r);
  auto intro = dummy_request(RequestKind::IntroHandshake, t1 + prologue_span(r), r);
  fake_intro.cells.insert(fake_intro.cells.end(), intro.begin(), intro.end());
  fake_intro.closed_at = fake_intro.last_time();

  // The exit circuit is built after the fake fetch, like a rendezvous circuit, and the dummy
  // rendezvous handshake runs before BEGIN.
  const double build_shift = t1 - exit.created_at;
  const double rend_span = request_span(RequestKind::RendHandshake, r);
  CircuitTrace padded = exit;
  padded.purpose = CircuitPurpose::PaddedExit;
  padded.created_at = t1;
  padded.cells.clear();
  for (std::size_t i = 0; i < exit.cells.size() && i < kPrologueCells; ++i) {
    Cell c = exit.cells[i];
    c.time += build_shift;
    padded.cells.push_back(c);
  }
  auto rend = dummy_request(RequestKind::RendHandshake, t1 + prologue_span(r), r);
  padded.cells.insert(padded.cells.end(), rend.begin(), rend.end());
  for (Cell c : after_prologue(exit)) {
    c.time += build_shift + rend_span;
    padded.cells.push_back(c);
  }
  sort_cells(padded.cells);
  out.delay_added = build_shift + rend_span;
  padded.closed_at = std::max(exit.closed_at + out.delay_added, padded.last_time());

  out.base.circuits = {std::move(padded)};
  out.added_circuits = {std::move(fake_hsdir), std::move(fake_intro)};
  out.dummy_triplets = 1;
  return out;
}

PaddedSession apply_pcp(const SessionTrace& session, const StrategyConfig& config, Rng& rng) {
  config.validate();
  require_vanilla(session);
  const double r = config.rtt;
  const bool onion = session.connection_type == ConnectionType::Onion;
  const std::uint64_t triplet_seed = rng();

  struct Role {
    RequestKind kind;
    CircuitSlot slot;
    CircuitPurpose purpose;
    const CircuitTrace* real;
  };
  std::vector<Role> roles;
  if (onion) {
    roles = {{RequestKind::HsdirFetch, CircuitSlot::HsdirRole, CircuitPurpose::HSDir,
              &find_purpose(session, CircuitPurpose::HSDir)},
             {RequestKind::IntroHandshake, CircuitSlot::IntroRole, CircuitPurpose::Intro,
              &find_purpose(session, CircuitPurpose::Intro)},
             {RequestKind::RendHandshake, CircuitSlot::ExitRendRole, CircuitPurpose::Rend,
              &find_purpose(session, CircuitPurpose::Rend)}};
  } else {
    roles = {{RequestKind::HsdirFetch, CircuitSlot::HsdirRole, CircuitPurpose::FakeHSDir, nullptr},
             {RequestKind::IntroHandshake, CircuitSlot::IntroRole, CircuitPurpose::FakeIntro, nullptr},
             {RequestKind::RendHandshake, CircuitSlot::ExitRendRole, CircuitPurpose::PaddedExit,
              &find_purpose(session, CircuitPurpose::Exit)}};
  }

  const TimedEvent arrival{session.arrival, MachineEvent::ConnectionArrived};
  PaddedSession out = passthrough(session);
  out.base.circuits.clear();
  std::optional<std::uint64_t> fired;
  for (const auto& role : roles) {
    CircuitTrace c;
    c.circuit_id = circuit_id_for(session.session_id, role.slot);
    c.purpose = role.purpose;
    c.created_at = 0.0;
    c.cells = circuit_prologue(0.0, r);
    if (role.real != nullptr) {
      auto rest = after_prologue(*role.real);
      c.cells.insert(c.cells.end(), rest.begin(), rest.end());
      c.closed_at = role.real->closed_at;
    } else {
      c.closed_at = session.arrival;
    }
    c.closed_at = std::max(c.closed_at, c.last_time());

    if (config.lambda_d() > 0.0) {
      Rng stream(triplet_seed);
      auto run = run_machine_detailed(pcp_role_machine(role.kind, config), c, kForever, stream,
                                      std::span(&arrival, 1));
      c = std::move(run.trace);
      if (fired && *fired != run.final_state.patterns)
        throw std::logic_error("role machines fired different triplet counts");
      fired = run.final_state.patterns;
    }
    if (role.real != nullptr)
      out.base.circuits.push_back(std::move(c));
    else
      out.added_circuits.push_back(std::move(c));
  }
  out.dummy_triplets = static_cast<std::uint32_t>(fired.value_or(0));
  out.delay_added = 0.0;
  return out;
}

PaddedSession apply_strategy(const SessionTrace& session, const StrategyConfig& config, Rng& rng) {
  switch (config.kind) {
    case StrategyKind::None:
      return passthrough(session);
    case StrategyKind::Prop999:
      return apply_prop999(session, config, rng);
    case StrategyKind::Strawman:
      return apply_strawman(session, config, rng);
    case StrategyKind::PCP:
      return apply_pcp(session, config, rng);
  }
  return passthrough(session);
}

}  // namespace circfp
