// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>

#include "latentrank/decoder.hpp"
#include "latentrank/error.hpp"
#include "support.hpp"

using namespace latentrank;
using namespace testsupport;

namespace {

// raw path recomputed from the coefficient vector with the closed-form sum.
Trajectory reference_raw(const std::vector<double>& coef, std::size_t T, std::size_t H) {
  Trajectory out{std::vector<double>(T, 0.0), std::vector<double>(T, 0.0)};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    auto& dst = axis == 0 ? out.x : out.y;
    for (std::size_t h = 1; h <= H; ++h) {
      const double a = coef[axis * 2 * H + 2 * (h - 1)];
      const double b = coef[axis * 2 * H + 2 * (h - 1) + 1];
      const double amp = std::hypot(a, b);
      const double phase = std::atan2(b, a);
      for (std::size_t t = 0; t < T; ++t)
        dst[t] += amp / (2.0 * double(h)) *
                  std::sin(2.0 * std::numbers::pi * double(h * t) / double(T) + phase);
    }
  }
  return out;
}

double path_dist(const Trajectory& a, const Trajectory& b) {
  double s = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    s += (a.x[t] - b.x[t]) * (a.x[t] - b.x[t]) + (a.y[t] - b.y[t]) * (a.y[t] - b.y[t]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("same inputs and seed give identical paths") {
  std::mt19937_64 rng(1);
  const auto z = gaussian(rng, 16), c = gaussian(rng, 8);
  const ToyDecoder a(16, 8, 42), b(16, 8, 42);
  CHECK(a.decode(z, c) == b.decode(z, c));
  CHECK(decode(z, c, 42) == a.decode(z, c));
  CHECK(ToyDecoder(16, 8, 43).decode(z, c) != a.decode(z, c));
  CHECK(a.decode(z, c).size() == 120);
}

TEST_CASE("zero input maps to the origin") {
  const ToyDecoder dec(4, 3, 5);
  const auto p = dec.decode(std::vector<double>(4, 0.0), std::vector<double>(3, 0.0));
  for (std::size_t t = 0; t < p.size(); ++t) {
    CHECK(p.x[t] == 0.0);
    CHECK(p.y[t] == 0.0);
  }
}

TEST_CASE("raw path matches the amplitude-phase sum") {
  std::mt19937_64 rng(2);
  const ToyDecoder dec(10, 6, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = gaussian(rng, 10), c = gaussian(rng, 6);
    const auto raw = dec.raw(z, c);
    const auto ref = reference_raw(dec.coefficients(z, c), 120, 6);
    for (std::size_t t = 0; t < 120; ++t) {
      CHECK(raw.x[t] == doctest::Approx(ref.x[t]).epsilon(1e-9).scale(1.0));
      CHECK(raw.y[t] == doctest::Approx(ref.y[t]).epsilon(1e-9).scale(1.0));
    }
    const auto vis = dec.decode(z, c);
    for (std::size_t t = 0; t < 120; ++t) {
      CHECK(vis.x[t] == doctest::Approx(std::tanh(raw.x[t])).epsilon(1e-12));
      CHECK(std::abs(vis.x[t]) <= 1.0);
      CHECK(std::abs(vis.y[t]) <= 1.0);
    }
  }
}

TEST_CASE("coefficients are linear in the latent") {
  std::mt19937_64 rng(3);
  const ToyDecoder dec(8, 4, 1);
  const std::vector<double> zero_c(4, 0.0);
  const auto z1 = gaussian(rng, 8), z2 = gaussian(rng, 8), c = gaussian(rng, 4);
  std::vector<double> sum(8);
  for (int i = 0; i < 8; ++i) sum[i] = z1[i] + z2[i];
  const auto lhs = dec.coefficients(sum, c);
  const auto a = dec.coefficients(z1, c), b = dec.coefficients(z2, zero_c);
  for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(a[i] + b[i]));
}

TEST_CASE("Lipschitz in the latent with the spectral-norm constant") {
  const std::size_t d = 12, e = 5;
  const ToyDecoder dec(d, e, 17);
  const std::size_t nc = dec.coefficient_count();
  const auto& proj = dec.projection();
  const auto basis = dec.basis();
  Eigen::MatrixXd P(nc, d), B(2 * 120, nc);
  for (std::size_t r = 0; r < nc; ++r)
    for (std::size_t j = 0; j < d; ++j) P(r, j) = proj[r * (d + e) + j];
  for (std::size_t r = 0; r < 240; ++r)
    for (std::size_t j = 0; j < nc; ++j) B(r, j) = basis[r * nc + j];
  const double L = Eigen::JacobiSVD<Eigen::MatrixXd>(B * P).singularValues()(0);
  REQUIRE(L > 0.0);

  std::mt19937_64 rng(4);
  const auto c = gaussian(rng, e);
  for (int pair = 0; pair < 100; ++pair) {
    const auto z1 = gaussian(rng, d), z2 = gaussian(rng, d);
    const double lhs = path_dist(dec.decode(z1, c), dec.decode(z2, c));
    CHECK(lhs <= L * std::sqrt(sq_dist(z1, z2)) * (1 + 1e-9));
  }
}

TEST_CASE("dimension errors") {
  const ToyDecoder dec(4, 3, 0);
  auto code = [](auto&& fn) -> std::optional<ErrorCode> {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  CHECK(code([&] { dec.decode(std::vector<double>(5, 0.0), std::vector<double>(3, 0.0)); }) ==
        ErrorCode::Domain);
  CHECK(code([&] { dec.decode(std::vector<double>(4, 0.0), std::vector<double>(2, 0.0)); }) ==
        ErrorCode::Domain);
  CHECK(code([] { ToyDecoder(0, 3, 0); }) == ErrorCode::Config);
}

TEST_CASE("JSON wire form round trips") {
  std::mt19937_64 rng(5);
  const ToyDecoder dec(4, 3, 2);
  const auto p = dec.decode(gaussian(rng, 4), gaussian(rng, 3));
  const auto j = to_json(p);
  CHECK(j.at("points").size() == 120);
  CHECK(j.at("points").at(7).at(0).get<double>() == p.x[7]);
  CHECK(trajectory_from_json(j) == p);
  CHECK_THROWS_AS(trajectory_from_json(nlohmann::json::parse(R"({"points":[[1]]})")), Error);
}
