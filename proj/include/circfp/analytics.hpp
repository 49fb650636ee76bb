#pragma once
/** @file analytics.hpp
 *  @brief Closed-form dummy-count law and Bayes accuracy, with brute-force checks. */

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace circfp {

struct PcpParams {
  double phi = 1.0;
  double c = 0.5;

  static double p_of(double phi) noexcept { return 1.0 / (1.0 + phi); }
  double p() const noexcept { return p_of(phi); }
  void validate() const;
};

/// Pr[D = k] = p (1-p)^k.
double dummy_count_pmf(std::uint64_t k, double phi);

/// max{c, 1 - c phi/(phi+1)}.
double optimal_accuracy(double phi, double c);

/// optimal_accuracy - max(c, 1-c).
double leakage(double phi, double c);

/// Geometric tail Pr[D > k_max].
double dummy_count_tail(std::uint64_t k_max, double phi);

/// Sum over k <= k_max + 1 of max_s Pr[S=s, N=k], with N = D for clearnet and D + 1 for onion.
/// Throws std::invalid_argument when the tail beyond k_max is 1e-9 or more.
double accuracy_oracle(double phi, double c, std::uint64_t k_max);

/// Smallest k_max whose tail is below `tail`.
std::uint64_t k_max_for(double phi, double tail = 1e-9);

/// Total variation between the empirical law of `samples` and the geometric law, support cut
/// where the tail drops below 1e-6 and the remainder pooled. Needs at least 1e4 samples.
double fit_geometric(std::span<const std::uint32_t> samples, double phi);

struct CurvePoint {
  double phi = 0.0;
  double c = 0.0;
  double accuracy = 0.0;
  double leakage = 0.0;
};

std::vector<CurvePoint> analytic_curve(std::span<const double> phis, std::span<const double> cs);

/// "phi,c,accuracy,leakage".
void write_curve_csv(std::ostream& os, std::span<const CurvePoint> points);

}  // namespace circfp
