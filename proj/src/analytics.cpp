#include "circfp/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace circfp {

namespace {

void check(double phi, double c) {
  if (!(phi >= 0.0)) throw std::invalid_argument("phi must be >= 0");
  if (!(c >= 0.0 && c <= 1.0)) throw std::invalid_argument("c must lie in [0, 1]");
}

std::string fmt(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void PcpParams::validate() const { check(phi, c); }

double dummy_count_pmf(std::uint64_t k, double phi) {
  check(phi, 0.0);
  const double p = PcpParams::p_of(phi);
  if (p == 1.0) return k == 0 ? 1.0 : 0.0;
  return p * std::pow(1.0 - p, static_cast<double>(k));
}

double dummy_count_tail(std::uint64_t k_max, double phi) {
  check(phi, 0.0);
  const double q = 1.0 - PcpParams::p_of(phi);
  return std::pow(q, static_cast<double>(k_max) + 1.0);
}

double optimal_accuracy(double phi, double c) {
  check(phi, c);
  return std::max(c, 1.0 - c * phi / (phi + 1.0));
}

double leakage(double phi, double c) { return optimal_accuracy(phi, c) - std::max(c, 1.0 - c); }

std::uint64_t k_max_for(double phi, double tail) {
  check(phi, 0.0);
  const double q = 1.0 - PcpParams::p_of(phi);
  if (q <= 0.0) return 0;
  auto k = static_cast<std::uint64_t>(std::ceil(std::log(tail) / std::log(q)));
  while (dummy_count_tail(k, phi) >= tail) ++k;
  return k;
}

double accuracy_oracle(double phi, double c, std::uint64_t k_max) {
  check(phi, c);
  if (dummy_count_tail(k_max, phi) >= 1e-9)
    throw std::invalid_argument("k_max=" + std::to_string(k_max) +
                                " leaves a geometric tail >= 1e-9 at phi=" + fmt(phi));
  double acc = 0.0;
  for (std::uint64_t k = 0; k <= k_max + 1; ++k) {
    const double clear = c * dummy_count_pmf(k, phi);
    const double onion = k == 0 ? 0.0 : (1.0 - c) * dummy_count_pmf(k - 1, phi);
    acc += std::max(clear, onion);
  }
  return acc;
}

double fit_geometric(std::span<const std::uint32_t> samples, double phi) {
  check(phi, 0.0);
  if (samples.size() < 10000) throw std::invalid_argument("fit_geometric needs >= 1e4 samples");
  std::uint64_t cut = 0;
  while (dummy_count_tail(cut, phi) >= 1e-6) ++cut;
  std::vector<double> counts(cut + 2, 0.0);
  for (auto d : samples) ++counts[std::min<std::uint64_t>(d, cut + 1)];
  const double n = static_cast<double>(samples.size());
  double tv = 0.0;
  for (std::uint64_t k = 0; k <= cut; ++k) tv += std::abs(counts[k] / n - dummy_count_pmf(k, phi));
  tv += std::abs(counts[cut + 1] / n - dummy_count_tail(cut, phi));
  return 0.5 * tv;
}

std::vector<CurvePoint> analytic_curve(std::span<const double> phis, std::span<const double> cs) {
  std::vector<CurvePoint> out;
  for (double phi : phis)
    for (double c : cs) out.push_back({phi, c, optimal_accuracy(phi, c), leakage(phi, c)});
  return out;
}

void write_curve_csv(std::ostream& os, std::span<const CurvePoint> points) {
  os << "phi,c,accuracy,leakage\n";
  for (const auto& p : points)
    os << fmt(p.phi) << ',' << fmt(p.c) << ',' << fmt(p.accuracy) << ',' << fmt(p.leakage) << '\n';
}

}  // namespace circfp
