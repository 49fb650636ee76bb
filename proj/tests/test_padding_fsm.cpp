#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "circfp/padding_fsm.hpp"
#include "circfp/strategies.hpp"

using namespace circfp;

namespace {

MachineSpec poisson_machine(double rate, PaddingPattern pattern) {
  MachineSpec m;
  m.name = "poisson";
  m.start_state = "idle";
  m.states.push_back({"idle", std::monostate{}});
  m.states.push_back({"pad", std::move(pattern), DelayDistribution::exponential(rate), true});
  m.transitions[{"idle", MachineEvent::CircuitCreated}] = "pad";
  return m;
}

PaddingPattern one_data_cell() {
  return std::vector<RawPaddingCell>{{0.0, CellDirection::Incoming, RelayCommand::Data}};
}

CircuitTrace intro_circuit() {
  CircuitTrace t;
  t.circuit_id = 1;
  t.purpose = CircuitPurpose::Intro;
  t.created_at = 0.5;
  t.cells = circuit_prologue(0.5, 0.01);
  const auto req = real_request(RequestKind::IntroHandshake, 0.52, 0.01);
  t.cells.insert(t.cells.end(), req.begin(), req.end());
  t.closed_at = t.last_time();
  return t;
}

std::vector<Cell> real_cells(const CircuitTrace& t) {
  std::vector<Cell> out;
  for (const auto& c : t.cells)
    if (!c.is_padding) out.push_back(c);
  return out;
}

}  // namespace

TEST_CASE("delay distribution validation") {
  CHECK_THROWS_AS(DelayDistribution::exponential(0.0), std::invalid_argument);
  CHECK_THROWS_AS(DelayDistribution::uniform(2.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(DelayDistribution::fixed(-1.0), std::invalid_argument);
  CHECK_NOTHROW(DelayDistribution::uniform(1.0, 1.0));
}

TEST_CASE("delay distribution sample ranges") {
  Rng rng = make_rng(3, {});
  const auto u = DelayDistribution::uniform(2.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.sample(rng);
    CHECK(x >= 2.0);
    CHECK(x <= 3.0);
  }
  CHECK(DelayDistribution::fixed(0.25).sample(rng) == 0.25);
}

TEST_CASE("event names round trip") {
  for (int i = 0; i < 6; ++i) {
    const auto e = static_cast<MachineEvent>(i);
    CHECK(parse_event(event_name(e)) == e);
  }
}

TEST_CASE("undefined transition is a no-op") {
  const auto m = poisson_machine(2.0, one_data_cell());
  Rng rng = make_rng(1, {});
  const auto s0 = initial_state(m);
  const auto res = step(m, s0, MachineEvent::RealCellSent, 1.0, rng);
  CHECK(res.state == s0);
  CHECK(res.cells.empty());
}

TEST_CASE("timer on a rendezvous pattern state emits a dummy rendezvous handshake") {
  MachineSpec m;
  m.name = "rv";
  m.start_state = "rv";
  m.states.push_back({"rv", RequestKind::RendHandshake, DelayDistribution::fixed(1.0), false});
  MachineState s = initial_state(m);
  s.pending_timer = 3.0;
  Rng rng = make_rng(1, {});
  const auto res = step(m, s, MachineEvent::TimerFired, 3.0, rng);
  REQUIRE(res.cells.size() == 3);
  CHECK(res.cells.front().time == 3.0);
  CHECK(direction_string(res.cells) == "-++");
  for (const auto& c : res.cells) CHECK(c.is_padding);
  CHECK(res.state.emitted == 3);
  CHECK(res.state.patterns == 1);
}

TEST_CASE("repeating exponential state re-arms its timer with mean 1/rate") {
  const double rate = 8.0;
  const auto m = poisson_machine(rate, one_data_cell());
  Rng rng = make_rng(11, {});
  auto s = step(m, initial_state(m), MachineEvent::CircuitCreated, 0.0, rng).state;
  REQUIRE(s.pending_timer.has_value());
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double now = *s.pending_timer;
    auto res = step(m, s, MachineEvent::TimerFired, now, rng);
    REQUIRE(res.state.pending_timer.has_value());
    CHECK(*res.state.pending_timer >= now);
    sum += *res.state.pending_timer - now;
    s = std::move(res.state);
  }
  CHECK(std::abs(sum / n - 1.0 / rate) < 0.02 / rate);
}

TEST_CASE("budgeted repeat stops after the drawn number of patterns") {
  MachineSpec m = poisson_machine(100.0, one_data_cell());
  m.states[1].max_emissions = CountRange{5, 5};
  CircuitTrace t;
  t.closed_at = 1e9;
  Rng rng = make_rng(5, {});
  const auto run = run_machine_detailed(m, t, 1e9, rng);
  CHECK(run.final_state.patterns == 5);
  CHECK(run.trace.cells.size() == 5);
}

TEST_CASE("run_machine with no states is the identity") {
  MachineSpec empty;
  const auto t = intro_circuit();
  Rng rng = make_rng(1, {});
  CHECK(run_machine(empty, t, 100.0, rng) == t);
}

TEST_CASE("prop999 intro machine holds the circuit open for its lifetime draw") {
  StrategyConfig cfg;
  cfg.rtt = 0.01;
  const auto m = prop999_intro_machine(cfg);
  const auto t = intro_circuit();
  Rng rng = make_rng(77, {});
  Rng oracle = make_rng(77, {});
  const double expected = t.created_at + cfg.prop999_lifetime.sample(oracle);
  const auto out = run_machine(m, t, 1e9, rng);
  CHECK(out.closed_at == expected);
  CHECK(out.closed_at >= t.created_at + 600.0);
  CHECK(out.closed_at <= t.created_at + 660.0);
  std::size_t padding = out.cells.size() - t.cells.size();
  CHECK(padding >= 1 + cfg.prop999_intro_padding.lo);
  CHECK(padding <= 1 + cfg.prop999_intro_padding.hi);
}

TEST_CASE("run_machine is deterministic and never moves real cells") {
  const auto m = poisson_machine(50.0, RequestKind::IntroHandshake);
  const auto t = intro_circuit();
  Rng a = make_rng(9, {});
  Rng b = make_rng(9, {});
  const auto x = run_machine(m, t, 2.0, a);
  const auto y = run_machine(m, t, 2.0, b);
  CHECK(x == y);
  CHECK(x.cells.size() > t.cells.size());
  CHECK(real_cells(x) == t.cells);
  for (std::size_t i = 1; i < x.cells.size(); ++i) CHECK(x.cells[i - 1].time <= x.cells[i].time);
}

TEST_CASE("stop_time before creation is rejected") {
  const auto m = poisson_machine(1.0, one_data_cell());
  const auto t = intro_circuit();
  Rng rng = make_rng(1, {});
  CHECK_THROWS_AS(run_machine(m, t, 0.0, rng), std::invalid_argument);
}

TEST_CASE("dangling transitions fail validation") {
  auto m = poisson_machine(1.0, one_data_cell());
  m.transitions[{"pad", MachineEvent::ConnectionArrived}] = "nowhere";
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  auto n = poisson_machine(1.0, one_data_cell());
  n.start_state = "missing";
  CHECK_THROWS_AS(n.validate(), std::invalid_argument);
}

TEST_CASE("repeating machine emits rate times duration patterns on average") {
  const double rate = 5.0, horizon = 10.0;
  const auto m = poisson_machine(rate, one_data_cell());
  CircuitTrace t;
  t.closed_at = horizon;
  const int runs = 10000;
  double total = 0.0;
  for (int i = 0; i < runs; ++i) {
    Rng rng = make_rng(2024, {static_cast<std::uint64_t>(i)});
    total += run_machine_detailed(m, t, horizon, rng).final_state.patterns;
  }
  const double expected = rate * horizon;
  CHECK(std::abs(total / runs - expected) < 0.03 * expected);
}

TEST_CASE("ConnectionArrived stops pcp role machines") {
  StrategyConfig cfg;
  cfg.phi = 2.0;
  cfg.rtt = 0.001;
  const auto m = pcp_role_machine(RequestKind::RendHandshake, cfg);
  CircuitTrace t;
  t.purpose = CircuitPurpose::Preemptive;
  t.created_at = 0.0;
  t.cells = circuit_prologue(0.0, cfg.rtt);
  t.closed_at = 10.0;
  const TimedEvent arrive{5.0, MachineEvent::ConnectionArrived};
  Rng rng = make_rng(4, {});
  const auto run = run_machine_detailed(m, t, 1e9, rng, std::span(&arrive, 1));
  CHECK(run.final_state.current == "done");
  CHECK(run.final_state.emitted == 3 * run.final_state.patterns);
  CHECK(run.trace.cells.size() == 4 + run.final_state.emitted);
}
