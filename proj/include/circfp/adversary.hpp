#pragma once
/** @file adversary.hpp
 *  @brief What a relay-level observer sees, and the features derived from it. */

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "circfp/cell.hpp"
#include "circfp/traffic.hpp"

namespace circfp {

struct ViewEvent {
  double time = 0.0;
  std::int8_t dir = -1;  // -1 outgoing, +1 incoming

  bool operator==(const ViewEvent&) const = default;
};

struct AdversaryView {
  CircuitId circuit_id = 0;
  std::vector<ViewEvent> events;

  bool operator==(const AdversaryView&) const = default;
};

struct FeatureVector {
  double duration = 0.0;
  std::vector<std::int8_t> cell_seq;
  int label = 0;

  bool operator==(const FeatureVector&) const = default;
};

AdversaryView to_adversary_view(const CircuitTrace& trace);

/// One JSON line: {"circuit_id":..,"events":[[t,dir],...]}.
std::string serialize_view(const AdversaryView& view);

/// Duration is rounded to whole microseconds.
FeatureVector extract_features(const AdversaryView& view, std::size_t max_len);

/// Number of rendezvous-shaped (-,+,+) blocks right after the two-hop prologue of the
/// session's last-created circuit. Empty when the session has fewer than three circuits or
/// that circuit does not start with the prologue.
std::optional<std::uint32_t> count_triplets(std::span<const AdversaryView> session_views);

ConnectionType bayes_predict(std::uint32_t n, double phi, double c);

/// Header "label,duration,s1,...,s<max_len>" then one row per vector.
void write_feature_csv(std::ostream& os, std::span<const FeatureVector> rows, std::size_t max_len);

}  // namespace circfp
