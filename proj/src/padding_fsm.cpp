#include "circfp/padding_fsm.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>

namespace circfp {

namespace {

constexpr std::array<std::string_view, 6> kEventNames = {
    "CircuitCreated",    "RealCellSent",  "RealCellReceived",
    "TimerFired",        "ConnectionArrived", "CircuitClosed",
};

std::vector<Cell> pattern_cells(const MachineSpec& spec, const PaddingPattern& pattern,
                                double now) {
  if (const auto* kind = std::get_if<RequestKind>(&pattern))
    return dummy_request(*kind, now, spec.rtt);
  std::vector<Cell> cells;
  if (const auto* raw = std::get_if<std::vector<RawPaddingCell>>(&pattern)) {
    cells.reserve(raw->size());
    for (const auto& c : *raw)
      cells.push_back({now + c.offset_rtt * spec.rtt, c.direction, c.command, true});
    std::stable_sort(cells.begin(), cells.end(),
                     [](const Cell& a, const Cell& b) { return a.time < b.time; });
  }
  return cells;
}

bool has_timer_exit(const MachineSpec& spec, const std::string& id) {
  return spec.transitions.contains({id, MachineEvent::TimerFired});
}

void enter(const MachineSpec& spec, MachineState& state, const std::string& target, double now,
           Rng& rng) {
  state.current = target;
  state.pending_timer.reset();
  state.budget.reset();
  const auto* s = spec.find(target);
  if (s == nullptr) return;
  if (s->max_emissions) {
    std::uniform_int_distribution<std::uint32_t> dist(s->max_emissions->lo, s->max_emissions->hi);
    state.budget = dist(rng);
  }
  const bool emits = !std::holds_alternative<std::monostate>(s->pattern);
  if ((emits || has_timer_exit(spec, target)) && state.budget.value_or(1) > 0)
    state.pending_timer = now + s->delay.sample(rng);
}

}  // namespace

DelayDistribution DelayDistribution::fixed(double seconds) {
  DelayDistribution d{Kind::Fixed, seconds, 0.0};
  d.validate();
  return d;
}

DelayDistribution DelayDistribution::exponential(double rate) {
  DelayDistribution d{Kind::Exponential, rate, 0.0};
  d.validate();
  return d;
}

DelayDistribution DelayDistribution::uniform(double lo, double hi) {
  DelayDistribution d{Kind::Uniform, lo, hi};
  d.validate();
  return d;
}

double DelayDistribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Fixed:
      return a;
    case Kind::Exponential:
      return std::exponential_distribution<double>(a)(rng);
    case Kind::Uniform:
      if (a == b) return a;
      return std::uniform_real_distribution<double>(a, b)(rng);
  }
  return a;
}

double DelayDistribution::mean() const noexcept {
  switch (kind) {
    case Kind::Fixed:
      return a;
    case Kind::Exponential:
      return 1.0 / a;
    case Kind::Uniform:
      return 0.5 * (a + b);
  }
  return a;
}

void DelayDistribution::validate() const {
  switch (kind) {
    case Kind::Fixed:
      if (!(a >= 0.0)) throw std::invalid_argument("fixed delay must be >= 0");
      break;
    case Kind::Exponential:
      if (!(a > 0.0)) throw std::invalid_argument("exponential rate must be > 0");
      break;
    case Kind::Uniform:
      if (!(a >= 0.0) || !(a <= b)) throw std::invalid_argument("uniform needs 0 <= lo <= hi");
      break;
  }
}

std::string_view event_name(MachineEvent e) noexcept {
  return kEventNames[static_cast<std::size_t>(e)];
}

std::optional<MachineEvent> parse_event(std::string_view s) noexcept {
  auto it = std::find(kEventNames.begin(), kEventNames.end(), s);
  if (it == kEventNames.end()) return std::nullopt;
  return static_cast<MachineEvent>(it - kEventNames.begin());
}

const MachineStateSpec* MachineSpec::find(const std::string& id) const noexcept {
  for (const auto& s : states)
    if (s.id == id) return &s;
  return nullptr;
}

bool MachineSpec::applies(CircuitPurpose p) const noexcept {
  return applies_to.empty() || std::find(applies_to.begin(), applies_to.end(), p) != applies_to.end();
}

void MachineSpec::validate() const {
  if (states.empty()) return;
  if (!(rtt > 0.0)) throw std::invalid_argument("machine '" + name + "': rtt must be positive");
  for (std::size_t i = 0; i < states.size(); ++i) {
    states[i].delay.validate();
    if (states[i].max_emissions && states[i].max_emissions->lo > states[i].max_emissions->hi)
      throw std::invalid_argument("machine '" + name + "': state '" + states[i].id +
                                  "' has an empty emission range");
    for (std::size_t j = 0; j < i; ++j)
      if (states[j].id == states[i].id)
        throw std::invalid_argument("machine '" + name + "': duplicate state '" + states[i].id + "'");
  }
  if (find(start_state) == nullptr)
    throw std::invalid_argument("machine '" + name + "': unknown start state '" + start_state + "'");
  for (const auto& [key, target] : transitions) {
    if (find(key.first) == nullptr)
      throw std::invalid_argument("machine '" + name + "': transition from unknown state '" +
                                  key.first + "'");
    if (find(target) == nullptr)
      throw std::invalid_argument("machine '" + name + "': transition to unknown state '" +
                                  target + "'");
  }
  if (hold_open) hold_open->validate();
}

MachineState initial_state(const MachineSpec& spec) {
  MachineState s;
  s.current = spec.start_state;
  return s;
}

StepResult step(const MachineSpec& spec, MachineState state, MachineEvent event, double now,
                Rng& rng) {
  StepResult out;
  const auto* cur = spec.find(state.current);
  if (cur == nullptr) {
    out.state = std::move(state);
    return out;
  }
  if (event == MachineEvent::TimerFired) {
    if (!state.pending_timer) {
      out.state = std::move(state);
      return out;
    }
    out.cells = pattern_cells(spec, cur->pattern, now);
    state.pending_timer.reset();
    if (!out.cells.empty()) {
      state.emitted += out.cells.size();
      ++state.patterns;
    }
    if (state.budget && *state.budget > 0) --*state.budget;
    auto it = spec.transitions.find({state.current, MachineEvent::TimerFired});
    if (it != spec.transitions.end()) {
      enter(spec, state, it->second, now, rng);
    } else if (cur->repeat && state.budget.value_or(1) > 0) {
      state.pending_timer = now + cur->delay.sample(rng);
    }
    out.state = std::move(state);
    return out;
  }
  auto it = spec.transitions.find({state.current, event});
  if (it != spec.transitions.end()) enter(spec, state, it->second, now, rng);
  out.state = std::move(state);
  return out;
}

MachineRun run_machine_detailed(const MachineSpec& spec, const CircuitTrace& trace,
                                double stop_time, Rng& rng, std::span<const TimedEvent> external) {
  if (spec.states.empty()) return {trace, {}};
  spec.validate();
  if (stop_time < trace.created_at)
    throw std::invalid_argument("stop_time precedes circuit creation");

  double closed = trace.closed_at;
  if (spec.hold_open) closed = std::max(closed, trace.created_at + spec.hold_open->sample(rng));

  std::vector<TimedEvent> events;
  events.reserve(trace.cells.size() + external.size() + 2);
  events.push_back({trace.created_at, MachineEvent::CircuitCreated});
  for (const auto& c : trace.cells) {
    if (c.is_padding) continue;
    events.push_back({c.time, c.direction == CellDirection::Outgoing ? MachineEvent::RealCellSent
                                                                     : MachineEvent::RealCellReceived});
  }
  events.insert(events.end(), external.begin(), external.end());
  events.push_back({closed, MachineEvent::CircuitClosed});
  std::stable_sort(events.begin(), events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.time < b.time; });

  MachineState state = initial_state(spec);
  std::vector<Cell> emitted;
  double busy_until = -std::numeric_limits<double>::infinity();
  auto place = [&](std::vector<Cell>& cells) {
    if (cells.empty()) return;
    const double shift = std::max(0.0, busy_until - cells.front().time);
    for (auto& c : cells) c.time += shift;
    busy_until = cells.back().time;
    emitted.insert(emitted.end(), cells.begin(), cells.end());
  };

  std::size_t i = 0;
  const double inf = std::numeric_limits<double>::infinity();
  while (true) {
    const double te = i < events.size() ? events[i].time : inf;
    if (state.pending_timer && *state.pending_timer < te) {
      const double t = *state.pending_timer;
      if (t > stop_time) break;
      auto res = step(spec, std::move(state), MachineEvent::TimerFired, t, rng);
      state = std::move(res.state);
      place(res.cells);
      continue;
    }
    if (i >= events.size() || te > stop_time) break;
    const auto ev = events[i++];
    auto res = step(spec, std::move(state), ev.event, ev.time, rng);
    state = std::move(res.state);
    place(res.cells);
    if (ev.event == MachineEvent::CircuitClosed) break;
  }

  CircuitTrace out = inject_cells(trace, emitted);
  out.closed_at = std::max({out.closed_at, closed, out.last_time()});
  return {std::move(out), std::move(state)};
}

CircuitTrace run_machine(const MachineSpec& spec, const CircuitTrace& trace, double stop_time,
                         Rng& rng, std::span<const TimedEvent> external) {
  return run_machine_detailed(spec, trace, stop_time, rng, external).trace;
}

}  // namespace circfp
