#include <doctest.h>

#include <cmath>
#include <sstream>

#include "circfp/adversary.hpp"
#include "circfp/strategies.hpp"

using namespace circfp;

namespace {

CircuitTrace trace_of(std::vector<Cell> cells, CircuitId id = 1) {
  CircuitTrace t;
  t.circuit_id = id;
  t.created_at = cells.empty() ? 0.0 : cells.front().time;
  t.cells = std::move(cells);
  t.closed_at = t.last_time();
  return t;
}

std::vector<std::int8_t> prefix(const FeatureVector& f, std::size_t n) {
  return {f.cell_seq.begin(), f.cell_seq.begin() + n};
}

double geometric(std::uint64_t k, double phi) {
  const double p = 1.0 / (1.0 + phi);
  return p * std::pow(1.0 - p, static_cast<double>(k));
}

// Joint law of (connection, N): N = D for clearnet, D + 1 for onion.
double joint(bool onion, std::uint64_t n, double phi, double c) {
  if (!onion) return c * geometric(n, phi);
  return n == 0 ? 0.0 : (1.0 - c) * geometric(n - 1, phi);
}

}  // namespace

TEST_CASE("dummy and real rendezvous handshakes give identical views") {
  const auto d = trace_of(dummy_request(RequestKind::RendHandshake, 1.0, 0.01));
  const auto r = trace_of(real_request(RequestKind::RendHandshake, 1.0, 0.01));
  CHECK(to_adversary_view(d) == to_adversary_view(r));
  CHECK(serialize_view(to_adversary_view(d)) == serialize_view(to_adversary_view(r)));
}

TEST_CASE("empty circuit gives an empty view") {
  CircuitTrace t;
  t.circuit_id = 9;
  const auto v = to_adversary_view(t);
  CHECK(v.circuit_id == 9);
  CHECK(v.events.empty());
  const auto f = extract_features(v, 5);
  CHECK(f.duration == 0.0);
  CHECK(f.cell_seq == std::vector<std::int8_t>(5, 0));
}

TEST_CASE("views keep every cell's time and direction") {
  Rng rng = make_rng(8, {});
  std::uniform_int_distribution<int> len(0, 60), cmd(0, 12), coin(0, 1);
  std::exponential_distribution<double> gap(100.0);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<Cell> cells;
    double t = 0.0;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      t += gap(rng);
      cells.push_back({t, coin(rng) ? CellDirection::Incoming : CellDirection::Outgoing,
                       static_cast<RelayCommand>(cmd(rng)), coin(rng) == 1});
    }
    const auto trace = trace_of(cells, trial);
    const auto v = to_adversary_view(trace);
    REQUIRE(v.events.size() == cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      CHECK(v.events[i].time == cells[i].time);
      CHECK(v.events[i].dir == direction_sign(cells[i].direction));
    }
  }
}

TEST_CASE("serialized views carry no commands or padding flags") {
  auto cells = dummy_request(RequestKind::HsdirFetch, 0.0, 0.01);
  const auto intro = real_request(RequestKind::IntroHandshake, 1.0, 0.01);
  cells.insert(cells.end(), intro.begin(), intro.end());
  const auto text = serialize_view(to_adversary_view(trace_of(cells)));
  for (int i = 0; i < 13; ++i)
    CHECK(text.find(command_name(static_cast<RelayCommand>(i))) == std::string::npos);
  CHECK(text.find("pad") == std::string::npos);
  CHECK(text.find("true") == std::string::npos);
  CHECK(text.starts_with("{\"circuit_id\":1,\"events\":[["));
}

TEST_CASE("feature extraction") {
  const auto exit = extract_features(
      to_adversary_view(trace_of(circuit_handshake(HandshakeKind::ExitCircuit, 0.0, 0.1))), 120);
  CHECK(exit.cell_seq.size() == 120);
  CHECK(prefix(exit, 7) == std::vector<std::int8_t>{-1, 1, -1, 1, -1, 1, 0});
  CHECK(exit.duration == doctest::Approx(0.3));

  const auto rend = extract_features(
      to_adversary_view(trace_of(circuit_handshake(HandshakeKind::RendCircuit, 0.0, 0.1))), 120);
  CHECK(prefix(rend, 10) == std::vector<std::int8_t>{-1, 1, -1, 1, -1, 1, 1, -1, 1, 0});

  const auto single = extract_features(
      to_adversary_view(trace_of({{4.0, CellDirection::Incoming, RelayCommand::Data, false}})), 3);
  CHECK(single.duration == 0.0);
  CHECK(single.cell_seq == std::vector<std::int8_t>{1, 0, 0});

  const auto cut = extract_features(
      to_adversary_view(trace_of(circuit_handshake(HandshakeKind::RendCircuit, 0.0, 0.1))), 2);
  CHECK(cut.cell_seq == std::vector<std::int8_t>{-1, 1});

  CHECK_THROWS_AS(extract_features(AdversaryView{}, 0), std::invalid_argument);
}

TEST_CASE("durations are rounded to microseconds") {
  AdversaryView v;
  v.events = {{0.1, -1}, {0.1 + 0.2 + 1e-12, 1}};
  CHECK(extract_features(v, 2).duration == 0.2);
  v.events = {{1.0, -1}, {1.0000004, 1}};
  CHECK(extract_features(v, 2).duration == 0.0);
}

TEST_CASE("count_triplets needs a full session with a prologue") {
  const auto exit = to_adversary_view(trace_of(circuit_handshake(HandshakeKind::ExitCircuit, 0.0, 0.1)));
  CHECK_FALSE(count_triplets(std::span(&exit, 1)).has_value());

  std::vector<AdversaryView> views(3);
  views[0].circuit_id = 1;
  views[1].circuit_id = 2;
  views[2] = to_adversary_view(trace_of(dummy_request(RequestKind::RendHandshake, 0.0, 0.1), 3));
  CHECK_FALSE(count_triplets(views).has_value());

  auto cells = circuit_prologue(0.0, 0.1);
  for (int k = 0; k < 4; ++k) {
    const auto rv = dummy_request(RequestKind::RendHandshake, 0.3 + k, 0.1);
    cells.insert(cells.end(), rv.begin(), rv.end());
  }
  const auto tail = circuit_handshake(HandshakeKind::ExitCircuit, 10.0, 0.1);
  cells.insert(cells.end(), tail.begin() + 4, tail.end());
  views[2] = to_adversary_view(trace_of(cells, 3));
  CHECK(count_triplets(views) == 4u);

  // Only the highest circuit id counts.
  std::swap(views[0], views[2]);
  CHECK(count_triplets(views) == 4u);
}

TEST_CASE("vanilla onion sessions show one rendezvous block") {
  SimConfig cfg;
  SiteGenParams p;
  p.n_sites = 3;
  cfg.sites = generate_sites(p, 2);
  Rng rng = make_rng(3, {});
  for (int i = 0; i < 20; ++i) {
    const auto s = simulate_session(cfg, cfg.sites[i % 3], ConnectionType::Onion, rng, i);
    std::vector<AdversaryView> views;
    for (const auto& c : s.circuits) views.push_back(to_adversary_view(c));
    CHECK(count_triplets(views) == 1u);
  }
}

TEST_CASE("bayes_predict examples") {
  for (double phi : {0.0, 0.5, 1.0, 4.0})
    for (double c : {0.0, 0.3, 0.5, 0.9, 1.0}) CHECK(bayes_predict(0, phi, c) == ConnectionType::Clearnet);
  CHECK(bayes_predict(2, 1.0, 0.5) == ConnectionType::Onion);
  for (std::uint32_t n = 1; n < 20; ++n) CHECK(bayes_predict(n, 1.0, 0.7) == ConnectionType::Clearnet);
  CHECK_THROWS_AS(bayes_predict(1, -1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(bayes_predict(1, 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("no N-only classifier beats bayes_predict") {
  for (double phi : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    for (double c : {0.3, 0.5, 0.7, 0.9}) {
      for (std::uint64_t K = 1; K <= 8; ++K) {
        // Label per N in 0..K plus one shared label for N > K.
        std::vector<double> clear(K + 2), onion(K + 2);
        for (std::uint64_t n = 0; n <= K; ++n) {
          clear[n] = joint(false, n, phi, c);
          onion[n] = joint(true, n, phi, c);
        }
        double clear_rest = c, onion_rest = 1.0 - c;
        for (std::uint64_t n = 0; n <= K; ++n) {
          clear_rest -= clear[n];
          onion_rest -= onion[n];
        }
        clear[K + 1] = clear_rest;
        onion[K + 1] = onion_rest;

        double bayes = 0.0;
        for (std::uint64_t n = 0; n <= K; ++n)
          bayes += bayes_predict(static_cast<std::uint32_t>(n), phi, c) == ConnectionType::Onion
                       ? onion[n]
                       : clear[n];
        // For N > K the decision is constant in N, so any N beyond K represents it.
        bayes += bayes_predict(static_cast<std::uint32_t>(K + 1), phi, c) == ConnectionType::Onion
                     ? onion[K + 1]
                     : clear[K + 1];

        double best = 0.0;
        for (std::uint64_t mask = 0; mask < (1ULL << (K + 2)); ++mask) {
          double acc = 0.0;
          for (std::uint64_t n = 0; n < K + 2; ++n) acc += (mask >> n) & 1 ? onion[n] : clear[n];
          best = std::max(best, acc);
        }
        CHECK(bayes >= best - 1e-12);
        CHECK(bayes == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("feature csv format") {
  FeatureVector a{0.5, {-1, 1, 0}, 1};
  FeatureVector b{0.0, {1, 0, 0}, 0};
  std::vector<FeatureVector> rows{a, b};
  std::ostringstream os;
  write_feature_csv(os, rows, 3);
  CHECK(os.str() == "label,duration,s1,s2,s3\n1,0.5,-1,1,0\n0,0,1,0,0\n");
}
