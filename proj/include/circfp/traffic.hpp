#pragma once
/** @file traffic.hpp
 *  @brief Vanilla session generation: think times, site traffic and per-connection circuits. */

#include <cstdint>
#include <optional>
#include <vector>

#include "circfp/cell.hpp"
#include "circfp/padding_fsm.hpp"
#include "circfp/rng.hpp"

namespace circfp {

enum class ConnectionType : std::uint8_t { Clearnet, Onion };
enum class PackingMode : std::uint8_t { Identical, Asymmetric };

std::string_view connection_name(ConnectionType t) noexcept;
std::optional<ConnectionType> parse_connection(std::string_view s) noexcept;

struct UserModel {
  double lambda_u = 4.0;  // connections per second
  double c = 0.5;         // probability of a clearnet connection

  void validate() const;
};

/// One request/response exchange: outgoing request cells, then a share of the response cells.
struct Burst {
  std::uint32_t request_cells = 2;
  double response_share = 1.0;

  bool operator==(const Burst&) const = default;
};

struct SiteModel {
  std::uint32_t site_id = 0;
  std::uint32_t onion_cell_count = 100;  // APP_DATA cells under dense (onion) packing
  double inflation_mean = 1.15;
  double inflation_sd = 0.08;
  std::vector<Burst> bursts{Burst{}};

  std::uint32_t request_cells() const noexcept;
  void validate() const;

  bool operator==(const SiteModel&) const = default;
};

struct SessionTrace {
  std::uint64_t session_id = 0;
  ConnectionType connection_type = ConnectionType::Clearnet;
  double think_time = 0.0;
  double arrival = 0.0;  ///< connection arrival on the session clock
  std::vector<CircuitTrace> circuits;
  std::uint32_t site_id = 0;

  bool operator==(const SessionTrace&) const = default;
};

struct SiteGenParams {
  std::uint32_t n_sites = 100;
  std::uint32_t min_cells = 40;
  std::uint32_t max_cells = 400;
  std::uint32_t min_bursts = 2;
  std::uint32_t max_bursts = 6;
  double inflation_mean = 1.15;
  double inflation_sd = 0.08;

  void validate() const;
};

struct SimConfig {
  UserModel user;
  std::vector<SiteModel> sites;
  double rtt = 0.0005;
  std::uint32_t n_sessions = 1000;
  PackingMode packing = PackingMode::Identical;
  DelayDistribution lifetime_exit = DelayDistribution::uniform(600.0, 660.0);
  DelayDistribution rend_idle = DelayDistribution::fixed(10.0);  ///< kept open after last activity
  bool scheduling_fingerprint = false;
  bool stratified = false;  ///< exact round(c * sessions) clearnet sessions per site
  std::optional<std::uint32_t> only_site;  ///< every session visits this site
  std::uint64_t seed = 1;

  void validate() const;
};

/// Circuit slots inside a session. Identifiers grow with creation order.
enum class CircuitSlot : std::uint32_t { HsdirRole = 0, IntroRole = 1, ExitRendRole = 2 };

CircuitId circuit_id_for(std::uint64_t session_id, CircuitSlot slot) noexcept;

/// Session time at which a pool circuit built at t=0 is ready; think time starts here.
constexpr double session_lead(double rtt) noexcept { return prologue_span(rtt); }

std::vector<SiteModel> generate_sites(const SiteGenParams& params, std::uint64_t seed);

double sample_think_time(const UserModel& user, Rng& rng);

/// Truncated normal draw (lower bound 1.0) of the clearnet packing inflation.
double sample_inflation(const SiteModel& site, Rng& rng);

/// APP_DATA cells of one page load starting at base_time.
std::vector<Cell> app_traffic(const SiteModel& site, ConnectionType conn, PackingMode mode,
                              double base_time, double rtt, Rng& rng,
                              bool scheduling_fingerprint = false);

/// Connection type drawn from Bernoulli(c).
SessionTrace simulate_session(const SimConfig& config, const SiteModel& site, Rng& rng,
                              std::uint64_t session_id = 0);

SessionTrace simulate_session(const SimConfig& config, const SiteModel& site,
                              ConnectionType conn, Rng& rng, std::uint64_t session_id = 0);

/// Site and connection type of every session, fixed before any traffic is drawn.
struct SessionPlan {
  std::uint32_t site_index = 0;
  std::optional<ConnectionType> forced;
};

std::vector<SessionPlan> plan_sessions(const SimConfig& config);

/// Session i of the dataset; independent of every other session.
SessionTrace simulate_planned(const SimConfig& config, const SessionPlan& plan, std::uint64_t i);

std::vector<SessionTrace> simulate_dataset(const SimConfig& config, unsigned jobs = 1);

}  // namespace circfp
