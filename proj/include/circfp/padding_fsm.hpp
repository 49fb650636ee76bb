#pragma once
/** @file padding_fsm.hpp
 *  @brief Per-circuit padding state machines and their timeline driver. */

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "circfp/cell.hpp"
#include "circfp/rng.hpp"

namespace circfp {

struct DelayDistribution {
  enum class Kind : std::uint8_t { Fixed, Exponential, Uniform };

  Kind kind = Kind::Fixed;
  double a = 0.0;  ///< Fixed: seconds; Exponential: rate; Uniform: lo
  double b = 0.0;  ///< Uniform: hi

  static DelayDistribution fixed(double seconds);
  static DelayDistribution exponential(double rate);
  static DelayDistribution uniform(double lo, double hi);

  double sample(Rng& rng) const;
  double mean() const noexcept;
  /// Throws std::invalid_argument when parameters violate rate > 0, lo <= hi, fixed >= 0.
  void validate() const;

  bool operator==(const DelayDistribution&) const = default;
};

enum class MachineEvent : std::uint8_t {
  CircuitCreated,
  RealCellSent,
  RealCellReceived,
  TimerFired,
  ConnectionArrived,
  CircuitClosed,
};

std::string_view event_name(MachineEvent e) noexcept;
std::optional<MachineEvent> parse_event(std::string_view s) noexcept;

/// One cell of a raw padding pattern, offset measured in round trips.
struct RawPaddingCell {
  double offset_rtt = 0.0;
  CellDirection direction = CellDirection::Outgoing;
  RelayCommand command = RelayCommand::Data;

  bool operator==(const RawPaddingCell&) const = default;
};

using PaddingPattern = std::variant<std::monostate, RequestKind, std::vector<RawPaddingCell>>;

struct CountRange {
  std::uint32_t lo = 1;
  std::uint32_t hi = 1;
  bool operator==(const CountRange&) const = default;
};

struct MachineStateSpec {
  std::string id;
  PaddingPattern pattern;
  DelayDistribution delay = DelayDistribution::fixed(0.0);
  bool repeat = false;
  std::optional<CountRange> max_emissions;  ///< per visit; drawn on entry

  bool operator==(const MachineStateSpec&) const = default;
};

struct MachineSpec {
  std::string name;
  std::vector<MachineStateSpec> states;
  std::map<std::pair<std::string, MachineEvent>, std::string> transitions;
  std::string start_state;
  std::vector<CircuitPurpose> applies_to;  ///< empty = every purpose
  double rtt = 0.0005;                     ///< timing of emitted patterns
  std::optional<DelayDistribution> hold_open;  ///< keep the circuit open until created_at + draw

  const MachineStateSpec* find(const std::string& id) const noexcept;
  bool applies(CircuitPurpose p) const noexcept;
  /// Throws std::invalid_argument on dangling transition targets or a missing start state.
  void validate() const;

  bool operator==(const MachineSpec&) const = default;
};

struct MachineState {
  std::string current;
  std::optional<double> pending_timer;
  std::uint64_t emitted = 0;   ///< padding cells
  std::uint64_t patterns = 0;  ///< padding patterns
  std::optional<std::uint32_t> budget;

  bool operator==(const MachineState&) const = default;
};

struct StepResult {
  MachineState state;
  std::vector<Cell> cells;
};

MachineState initial_state(const MachineSpec& spec);

StepResult step(const MachineSpec& spec, MachineState state, MachineEvent event, double now,
                Rng& rng);

struct TimedEvent {
  double time = 0.0;
  MachineEvent event = MachineEvent::ConnectionArrived;
};

struct MachineRun {
  CircuitTrace trace;
  MachineState final_state;
};

/// Drives the machine over the trace. Non-timer events at a timestamp are handled before a
/// timer due at the same timestamp. A pattern emitted while an earlier one is still in flight
/// is queued behind it, so patterns never overlap. hold_open is drawn before anything else.
MachineRun run_machine_detailed(const MachineSpec& spec, const CircuitTrace& trace,
                                double stop_time, Rng& rng,
                                std::span<const TimedEvent> external = {});

CircuitTrace run_machine(const MachineSpec& spec, const CircuitTrace& trace, double stop_time,
                         Rng& rng, std::span<const TimedEvent> external = {});

}  // namespace circfp
