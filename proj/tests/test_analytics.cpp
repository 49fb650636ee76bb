#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "circfp/analytics.hpp"
#include "circfp/rng.hpp"

using namespace circfp;

namespace {

const double kPhis[] = {0.25, 0.5, 1.0, 2.0, 4.0};
const double kCs[] = {0.5, 0.7, 0.9};

// Bayes accuracy summed over N <= n_max, joint law written out from scratch.
double enumerated_accuracy(double phi, double c, int n_max) {
  const double p = 1.0 / (1.0 + phi);
  double acc = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    const double clear = c * p * std::pow(1.0 - p, n);
    const double onion = n == 0 ? 0.0 : (1.0 - c) * p * std::pow(1.0 - p, n - 1);
    acc += std::max(clear, onion);
  }
  return acc;
}

}  // namespace

TEST_CASE("dummy count pmf values") {
  CHECK(dummy_count_pmf(0, 0.0) == 1.0);
  CHECK(dummy_count_pmf(3, 0.0) == 0.0);
  CHECK(dummy_count_pmf(0, 1.0) == 0.5);
  CHECK(dummy_count_pmf(1, 1.0) == 0.25);
  double sum = 0.0;
  for (std::uint64_t k = 0; k <= 50; ++k) sum += dummy_count_pmf(k, 4.0);
  CHECK(sum >= 0.9999);
}

TEST_CASE("dummy count pmf matches a race of exponential clocks") {
  const double lambda_u = 4.0, phi = 1.0, lambda_d = phi * lambda_u;
  Rng rng = make_rng(100, {});
  std::exponential_distribution<double> think(lambda_u);
  const int n = 1000000;
  int zero = 0, one = 0;
  for (int i = 0; i < n; ++i) {
    std::poisson_distribution<int> dummies(lambda_d * think(rng));
    const int d = dummies(rng);
    zero += d == 0;
    one += d == 1;
  }
  CHECK(std::abs(zero / double(n) - dummy_count_pmf(0, phi)) < 0.005);
  CHECK(std::abs(one / double(n) - dummy_count_pmf(1, phi)) < 0.005);
}

TEST_CASE("pmf normalisation is within the tail bound") {
  for (double phi : kPhis) {
    for (std::uint64_t K : {5u, 20u, 80u}) {
      double sum = 0.0;
      for (std::uint64_t k = 0; k <= K; ++k) sum += dummy_count_pmf(k, phi);
      CHECK(std::abs(sum - 1.0) <= dummy_count_tail(K, phi) + 1e-15);
      CHECK(dummy_count_tail(K, phi) == doctest::Approx(std::pow(phi / (1 + phi), K + 1)));
    }
  }
}

TEST_CASE("optimal accuracy examples") {
  CHECK(optimal_accuracy(0.0, 0.5) == 1.0);
  CHECK(optimal_accuracy(1.0, 0.7) == doctest::Approx(0.7));
  CHECK(optimal_accuracy(1.0, 0.5) == doctest::Approx(0.75));
  CHECK(std::abs(enumerated_accuracy(1.0, 0.5, 200) - optimal_accuracy(1.0, 0.5)) < 1e-6);
}

TEST_CASE("closed form agrees with an independent enumeration") {
  for (double phi : kPhis)
    for (double c : kCs) CHECK(std::abs(enumerated_accuracy(phi, c, 400) - optimal_accuracy(phi, c)) < 1e-6);
}

TEST_CASE("leakage examples and monotonicity") {
  CHECK(leakage(1.0, 0.7) == doctest::Approx(0.0));
  CHECK(leakage(0.0, 0.5) == 0.5);
  for (double c : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95}) {
    double prev_acc = 2.0, prev_leak = 2.0;
    for (double phi = 0.0; phi <= 8.0; phi += 0.25) {
      const double a = optimal_accuracy(phi, c), l = leakage(phi, c);
      CHECK(a <= prev_acc);
      CHECK(l <= prev_leak);
      CHECK(l >= 0.0);
      CHECK(a >= c);
      const double p = 1.0 / (1.0 + phi);
      if (c >= 1.0 - c * (1.0 - p))
        CHECK(a == doctest::Approx(c));
      else
        CHECK(a > c);
      prev_acc = a;
      prev_leak = l;
    }
  }
}

TEST_CASE("accuracy oracle") {
  for (double phi : kPhis)
    for (double c : kCs)
      CHECK(std::abs(accuracy_oracle(phi, c, k_max_for(phi)) - optimal_accuracy(phi, c)) < 1e-6);
  CHECK(accuracy_oracle(0.0, 0.3, k_max_for(0.0)) == doctest::Approx(1.0));
  CHECK(accuracy_oracle(0.0, 0.9, k_max_for(0.0)) == doctest::Approx(1.0));
  CHECK(accuracy_oracle(1000.0, 0.5, k_max_for(1000.0)) == doctest::Approx(0.5).epsilon(0.002));
  CHECK_THROWS_AS(accuracy_oracle(1.0, 0.5, 5), std::invalid_argument);
  CHECK(dummy_count_tail(k_max_for(2.0), 2.0) < 1e-9);
}

TEST_CASE("geometric fit") {
  SUBCASE("exact geometric samples") {
    Rng rng = make_rng(101, {});
    std::geometric_distribution<std::uint32_t> g(1.0 / (1.0 + 2.0));
    std::vector<std::uint32_t> samples(100000);
    for (auto& s : samples) s = g(rng);
    CHECK(fit_geometric(samples, 2.0) < 0.01);
  }
  SUBCASE("point mass at zero against phi = 1") {
    std::vector<std::uint32_t> zeros(10000, 0);
    CHECK(fit_geometric(zeros, 1.0) == doctest::Approx(0.5));
  }
  SUBCASE("too few samples") {
    std::vector<std::uint32_t> few(100, 0);
    CHECK_THROWS_AS(fit_geometric(few, 1.0), std::invalid_argument);
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(optimal_accuracy(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(optimal_accuracy(1.0, 1.1), std::invalid_argument);
  CHECK(PcpParams{3.0, 0.5}.p() == 0.25);
}

TEST_CASE("curve csv") {
  const double phis[] = {1.0};
  const double cs[] = {0.5, 0.7};
  const auto pts = analytic_curve(phis, cs);
  REQUIRE(pts.size() == 2);
  std::ostringstream os;
  write_curve_csv(os, pts);
  CHECK(os.str() == "phi,c,accuracy,leakage\n1,0.5,0.75,0.25\n1,0.7,0.7,0\n");
}
