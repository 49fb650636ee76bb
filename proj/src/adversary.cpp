#include "circfp/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <ostream>
#include <stdexcept>

#include "circfp/analytics.hpp"

namespace circfp {

namespace {

void put_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

AdversaryView to_adversary_view(const CircuitTrace& trace) {
  AdversaryView v;
  v.circuit_id = trace.circuit_id;
  v.events.reserve(trace.cells.size());
  for (const auto& c : trace.cells)
    v.events.push_back({c.time, static_cast<std::int8_t>(direction_sign(c.direction))});
  return v;
}

std::string serialize_view(const AdversaryView& view) {
  std::string s = "{\"circuit_id\":" + std::to_string(view.circuit_id) + ",\"events\":[";
  for (std::size_t i = 0; i < view.events.size(); ++i) {
    if (i) s.push_back(',');
    s.push_back('[');
    put_double(s, view.events[i].time);
    s.push_back(',');
    s += std::to_string(view.events[i].dir);
    s.push_back(']');
  }
  s += "]}";
  return s;
}

FeatureVector extract_features(const AdversaryView& view, std::size_t max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  FeatureVector f;
  if (view.events.size() >= 2)
    f.duration = std::round((view.events.back().time - view.events.front().time) * 1e6) / 1e6;
  f.cell_seq.assign(max_len, 0);
  const std::size_t n = std::min(max_len, view.events.size());
  for (std::size_t i = 0; i < n; ++i) f.cell_seq[i] = view.events[i].dir;
  return f;
}

std::optional<std::uint32_t> count_triplets(std::span<const AdversaryView> session_views) {
  if (session_views.size() < 3) return std::nullopt;
  const auto last = std::max_element(
      session_views.begin(), session_views.end(),
      [](const AdversaryView& a, const AdversaryView& b) { return a.circuit_id < b.circuit_id; });
  const auto& ev = last->events;
  static constexpr std::int8_t kPrologue[] = {-1, 1, -1, 1};
  if (ev.size() < kPrologueCells) return std::nullopt;
  for (std::size_t i = 0; i < kPrologueCells; ++i)
    if (ev[i].dir != kPrologue[i]) return std::nullopt;
  std::uint32_t n = 0;
  for (std::size_t i = kPrologueCells; i + 2 < ev.size(); i += 3) {
    if (ev[i].dir != -1 || ev[i + 1].dir != 1 || ev[i + 2].dir != 1) break;
    ++n;
  }
  return n;
}

ConnectionType bayes_predict(std::uint32_t n, double phi, double c) {
  if (!(phi >= 0.0)) throw std::invalid_argument("phi must be >= 0");
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("c must lie in [0, 1]");
  if (n == 0) return ConnectionType::Clearnet;
  const double p = PcpParams::p_of(phi);
  return c >= 1.0 - c * (1.0 - p) ? ConnectionType::Clearnet : ConnectionType::Onion;
}

void write_feature_csv(std::ostream& os, std::span<const FeatureVector> rows, std::size_t max_len) {
  std::string line = "label,duration";
  for (std::size_t i = 1; i <= max_len; ++i) line += ",s" + std::to_string(i);
  line.push_back('\n');
  os << line;
  for (const auto& r : rows) {
    if (r.cell_seq.size() != max_len)
      throw std::invalid_argument("feature vector length differs from max_len");
    line = std::to_string(r.label);
    line.push_back(',');
    put_double(line, r.duration);
    for (auto v : r.cell_seq) {
      line.push_back(',');
      line += std::to_string(v);
    }
    line.push_back('\n');
    os << line;
  }
}

}  // namespace circfp
