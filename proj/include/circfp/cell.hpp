#pragma once
/** @file cell.hpp
 *  @brief Cells, circuit traces and the fixed protocol cell patterns. */

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace circfp {

enum class CellDirection : std::uint8_t { Outgoing, Incoming };

/// Feature-space encoding: -1 outgoing, +1 incoming.
constexpr int direction_sign(CellDirection d) noexcept {
  return d == CellDirection::Outgoing ? -1 : 1;
}

enum class RelayCommand : std::uint8_t {
  Extend2,
  Extended,
  Begin,
  BeginDir,
  Connected,
  Data,
  End,
  EstablishRend,
  RendEstablished,
  Rend2,
  Introduce1,
  IntroAck,
  AppData,
};

std::string_view command_name(RelayCommand c) noexcept;
std::optional<RelayCommand> parse_command(std::string_view s) noexcept;

struct Cell {
  double time = 0.0;
  CellDirection direction = CellDirection::Outgoing;
  RelayCommand command = RelayCommand::AppData;
  bool is_padding = false;  ///< ground truth only

  bool operator==(const Cell&) const = default;
};

enum class CircuitPurpose : std::uint8_t {
  Exit,
  HSDir,
  Intro,
  Rend,
  FakeHSDir,
  FakeIntro,
  PaddedExit,
  Preemptive,
};

std::string_view purpose_name(CircuitPurpose p) noexcept;
std::optional<CircuitPurpose> parse_purpose(std::string_view s) noexcept;

using CircuitId = std::uint64_t;

struct CircuitTrace {
  CircuitId circuit_id = 0;
  CircuitPurpose purpose = CircuitPurpose::Exit;
  std::vector<Cell> cells;  ///< sorted by time, ties in insertion order
  double created_at = 0.0;
  double closed_at = 0.0;

  /// Last cell time minus first cell time; 0 for fewer than two cells.
  double duration() const noexcept;
  /// Time of the last cell, or created_at when empty.
  double last_time() const noexcept;

  bool operator==(const CircuitTrace&) const = default;
};

enum class RequestKind : std::uint8_t { HsdirFetch, IntroHandshake, RendHandshake };
enum class HandshakeKind : std::uint8_t { ExitCircuit, RendCircuit };

std::string_view request_name(RequestKind k) noexcept;
std::optional<RequestKind> parse_request(std::string_view s) noexcept;

/// Spacing of back-to-back DATA cells inside one directory reply.
inline constexpr double kDataSpacing = 0.001;

/// Number of cells in the two-hop circuit build (two EXTEND2/EXTENDED pairs).
inline constexpr std::size_t kPrologueCells = 4;

/// Client-side cell order of a full exit (6 cells) or rendezvous (9 cells) circuit setup.
std::vector<Cell> circuit_handshake(HandshakeKind kind, double base_time, double rtt);

/// Dummy request pattern, every cell flagged as padding.
std::vector<Cell> dummy_request(RequestKind kind, double base_time, double rtt);

/// The same pattern carrying real traffic.
std::vector<Cell> real_request(RequestKind kind, double base_time, double rtt);

/// Two EXTEND2/EXTENDED round trips: the build of a two-hop circuit.
std::vector<Cell> circuit_prologue(double base_time, double rtt);

/// Time from the first to the last cell of a request pattern.
double request_span(RequestKind kind, double rtt) noexcept;

/// Time needed to build a two-hop circuit.
constexpr double prologue_span(double rtt) noexcept { return 2.0 * rtt; }

/// Merges cells into a trace. Existing cells keep their times and come first on ties.
/// Throws std::invalid_argument for cells timed before created_at.
CircuitTrace inject_cells(CircuitTrace trace, std::span<const Cell> cells);

/// "-+-+" rendering of the direction sequence.
std::string direction_string(std::span<const Cell> cells);

}  // namespace circfp
