#pragma once
/** @file strategies.hpp
 *  @brief Defenses as transformations of vanilla sessions. */

#include <cstdint>
#include <optional>
#include <vector>

#include "circfp/padding_fsm.hpp"
#include "circfp/traffic.hpp"

namespace circfp {

enum class StrategyKind : std::uint8_t { None, Prop999, Strawman, PCP };

std::string_view strategy_name(StrategyKind k) noexcept;
std::optional<StrategyKind> parse_strategy(std::string_view s) noexcept;

struct StrategyConfig {
  StrategyKind kind = StrategyKind::None;
  double phi = 1.0;                 // PCP: lambda_d / lambda_u
  double lambda_u_estimate = 4.0;   // PCP
  DelayDistribution prop999_lifetime = DelayDistribution::uniform(600.0, 660.0);
  CountRange prop999_intro_padding{8, 16};  // incoming padding cells after INTRO_ACK
  double rtt = 0.0005;

  double lambda_d() const noexcept { return phi * lambda_u_estimate; }
  void validate() const;
};

struct PaddedSession {
  SessionTrace base;                        ///< transformed session circuits
  std::vector<CircuitTrace> added_circuits; ///< circuits that exist only because of the defense
  std::uint32_t dummy_triplets = 0;
  double delay_added = 0.0;

  /// Every circuit of the session ordered by circuit id (creation order).
  std::vector<CircuitTrace> circuits() const;

  bool operator==(const PaddedSession&) const = default;
};

PaddedSession passthrough(const SessionTrace& session);

PaddedSession apply_prop999(const SessionTrace& session, const StrategyConfig& config, Rng& rng);
PaddedSession apply_strawman(const SessionTrace& session, const StrategyConfig& config, Rng& rng);
PaddedSession apply_pcp(const SessionTrace& session, const StrategyConfig& config, Rng& rng);

PaddedSession apply_strategy(const SessionTrace& session, const StrategyConfig& config, Rng& rng);

/// Intro machine: pads the INTRODUCE1 exchange toward a directory fetch and holds the circuit open.
MachineSpec prop999_intro_machine(const StrategyConfig& config);
/// Rend machine: inserts an out/in pair after REND_ESTABLISHED so the prefix reads like an exit
/// setup, and holds the circuit open.
MachineSpec prop999_rend_machine(const StrategyConfig& config);
/// Role machine of a preemptive circuit: repeats `kind` at rate lambda_d once the circuit is
/// built, until the connection arrives.
MachineSpec pcp_role_machine(RequestKind kind, const StrategyConfig& config);

}  // namespace circfp
