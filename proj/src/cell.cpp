#include "circfp/cell.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace circfp {

namespace {

constexpr std::array<std::string_view, 13> kCommandNames = {
    "EXTEND2",        "EXTENDED",         "BEGIN", "BEGIN_DIR",  "CONNECTED", "DATA",     "END",
    "ESTABLISH_REND", "REND_ESTABLISHED", "REND2", "INTRODUCE1", "INTRO_ACK", "APP_DATA",
};

constexpr std::array<std::string_view, 8> kPurposeNames = {
    "Exit", "HSDir", "Intro", "Rend", "FakeHSDir", "FakeIntro", "PaddedExit", "Preemptive",
};

constexpr std::array<std::string_view, 3> kRequestNames = {"HsdirFetch", "IntroHandshake",
                                                           "RendHandshake"};

constexpr auto kOut = CellDirection::Outgoing;
constexpr auto kIn = CellDirection::Incoming;

void require_rtt(double rtt) {
  if (!(rtt > 0.0)) throw std::invalid_argument("rtt must be positive");
}

void append_request(std::vector<Cell>& out, RequestKind kind, double b, double r, bool pad) {
  auto add = [&](double t, CellDirection d, RelayCommand c) { out.push_back({t, d, c, pad}); };
  switch (kind) {
    case RequestKind::HsdirFetch: {
      add(b, kOut, RelayCommand::Extend2);
      add(b + r, kIn, RelayCommand::Extended);
      add(b + r, kOut, RelayCommand::BeginDir);
      add(b + r, kOut, RelayCommand::Data);
      add(b + 2 * r, kIn, RelayCommand::Connected);
      for (int i = 1; i <= 31; ++i) add(b + 2 * r + i * kDataSpacing, kIn, RelayCommand::Data);
      add(b + 2 * r + 32 * kDataSpacing, kIn, RelayCommand::End);
      break;
    }
    case RequestKind::IntroHandshake:
      add(b, kOut, RelayCommand::Extend2);
      add(b + r, kIn, RelayCommand::Extended);
      add(b + r, kOut, RelayCommand::Introduce1);
      add(b + 2 * r, kIn, RelayCommand::IntroAck);
      break;
    case RequestKind::RendHandshake:
      add(b, kOut, RelayCommand::EstablishRend);
      add(b + r, kIn, RelayCommand::RendEstablished);
      add(b + 2 * r, kIn, RelayCommand::Rend2);
      break;
  }
}

template <std::size_t N>
std::optional<std::size_t> find_name(const std::array<std::string_view, N>& names,
                                     std::string_view s) noexcept {
  auto it = std::find(names.begin(), names.end(), s);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

}  // namespace

std::string_view command_name(RelayCommand c) noexcept {
  return kCommandNames[static_cast<std::size_t>(c)];
}

std::optional<RelayCommand> parse_command(std::string_view s) noexcept {
  if (auto i = find_name(kCommandNames, s)) return static_cast<RelayCommand>(*i);
  return std::nullopt;
}

std::string_view purpose_name(CircuitPurpose p) noexcept {
  return kPurposeNames[static_cast<std::size_t>(p)];
}

std::optional<CircuitPurpose> parse_purpose(std::string_view s) noexcept {
  if (auto i = find_name(kPurposeNames, s)) return static_cast<CircuitPurpose>(*i);
  return std::nullopt;
}

std::string_view request_name(RequestKind k) noexcept {
  return kRequestNames[static_cast<std::size_t>(k)];
}

std::optional<RequestKind> parse_request(std::string_view s) noexcept {
  if (auto i = find_name(kRequestNames, s)) return static_cast<RequestKind>(*i);
  return std::nullopt;
}

double CircuitTrace::duration() const noexcept {
  if (cells.size() < 2) return 0.0;
  return cells.back().time - cells.front().time;
}

double CircuitTrace::last_time() const noexcept {
  return cells.empty() ? created_at : cells.back().time;
}

std::vector<Cell> circuit_prologue(double base_time, double rtt) {
  require_rtt(rtt);
  const double b = base_time, r = rtt;
  return {
      {b, kOut, RelayCommand::Extend2, false},
      {b + r, kIn, RelayCommand::Extended, false},
      {b + r, kOut, RelayCommand::Extend2, false},
      {b + 2 * r, kIn, RelayCommand::Extended, false},
  };
}

std::vector<Cell> circuit_handshake(HandshakeKind kind, double base_time, double rtt) {
  auto cells = circuit_prologue(base_time, rtt);
  const double r = rtt;
  double t = base_time + 2 * r;
  if (kind == HandshakeKind::RendCircuit) {
    append_request(cells, RequestKind::RendHandshake, t, r, false);
    t += 2 * r;
  }
  cells.push_back({t, kOut, RelayCommand::Begin, false});
  cells.push_back({t + r, kIn, RelayCommand::Connected, false});
  return cells;
}

std::vector<Cell> dummy_request(RequestKind kind, double base_time, double rtt) {
  require_rtt(rtt);
  std::vector<Cell> cells;
  append_request(cells, kind, base_time, rtt, true);
  return cells;
}

std::vector<Cell> real_request(RequestKind kind, double base_time, double rtt) {
  require_rtt(rtt);
  std::vector<Cell> cells;
  append_request(cells, kind, base_time, rtt, false);
  return cells;
}

double request_span(RequestKind kind, double rtt) noexcept {
  return kind == RequestKind::HsdirFetch ? 2 * rtt + 32 * kDataSpacing : 2 * rtt;
}

CircuitTrace inject_cells(CircuitTrace trace, std::span<const Cell> cells) {
  if (cells.empty()) return trace;
  for (const auto& c : cells) {
    if (c.time < trace.created_at)
      throw std::invalid_argument("injected cell at t=" + std::to_string(c.time) +
                                  " precedes circuit creation at t=" +
                                  std::to_string(trace.created_at));
  }
  trace.cells.insert(trace.cells.end(), cells.begin(), cells.end());
  std::stable_sort(trace.cells.begin(), trace.cells.end(),
                   [](const Cell& a, const Cell& b) { return a.time < b.time; });
  trace.closed_at = std::max(trace.closed_at, trace.cells.back().time);
  return trace;
}

std::string direction_string(std::span<const Cell> cells) {
  std::string s;
  s.reserve(cells.size());
  for (const auto& c : cells) s.push_back(c.direction == kOut ? '-' : '+');
  return s;
}

}  // namespace circfp
