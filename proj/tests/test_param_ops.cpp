#include <doctest.h>

#include "co2sim/errors.hpp"
#include "co2sim/param_ops.hpp"
#include "co2sim/rng.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace co2sim;

namespace {

ParamVector vec(std::initializer_list<double> xs) {
  ParamVector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

ParamVector random_vector(RngStream& rng, int dim, double scale) {
  ParamVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = (rng.next_double() * 2.0 - 1.0) * scale;
  return v;
}

}  // namespace

TEST_CASE("average matches a frozen fixed-order sum oracle bit for bit") {
  // Expected values were computed outside this codebase: accumulate
  // coordinate j over workers 0..4 in that order, then divide by 5 once.
  std::vector<ParamVector> in = {
      vec({0.5442868880568308, 1.8113273945956503, 0.19139323188558377,
           1.6248311340530925, 0.40218505048593167, 0.04286966237077339}),
      vec({0.6314264412370334, 1.9654648029382469, 0.3630702349745145,
           -1.6270775115457816, 1.0069351598601868, 0.9299044643529717}),
      vec({1.234339331698358, -1.746282902040115, 1.2644511896284585,
           -0.7586432236672516, -1.2602236517597354, -0.861636910493905}),
      vec({-0.4532469812019473, -1.6901608867535085, -1.676126903631042,
           1.4676310219404995, -0.02718374543101465, -1.0251692135856851}),
      vec({1.247027127420412, 0.8302750132245422, -1.4892671475422357,
           1.808391263414844, 1.8002180507247614, -1.8361414984061626})};
  ParamVector expected =
      vec({0.6407665614421374, 0.2341246843929632, -0.2692958789369442,
           0.5030265368390806, 0.38438617277602594, -0.5500346991524016});
  ParamVector got = average(in);
  REQUIRE(got.size() == expected.size());
  for (Eigen::Index i = 0; i < got.size(); ++i) {
    CHECK(got(i) == expected(i));
  }
}

TEST_CASE("average of identical copies is exact when the count divides the sum") {
  // Summing G copies of x gives exactly G*x when G is a power of two up to 4
  // (one or two exact doublings); the final division by G is then exact too.
  // For other G the sum itself can round, so exactness cannot hold in
  // general; those counts are covered by the 1-ulp test below.
  RngStream rng(11, 0);
  for (int g : {1, 2, 4}) {
    for (int trial = 0; trial < 200; ++trial) {
      ParamVector x = random_vector(rng, 16, 10.0);
      std::vector<ParamVector> copies(g, x);
      ParamVector got = average(copies);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        CHECK(got(i) == x(i));
      }
    }
  }
}

TEST_CASE("average of identical copies stays within half an ulp per worker") {
  // Each of the G-1 additions and the final division rounds at most half an
  // ulp, so the relative error is bounded by G * 2^-53.  The bound is tight:
  // G = 3 already reaches 0.75 ulp on adversarial mantissas.
  RngStream rng(12, 0);
  for (int g : {3, 5, 7, 8, 13}) {
    double bound = g * 0x1.0p-53;
    for (int trial = 0; trial < 100; ++trial) {
      ParamVector x = random_vector(rng, 16, 10.0);
      std::vector<ParamVector> copies(g, x);
      ParamVector got = average(copies);
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        CHECK(std::abs(got(i) - x(i)) <= bound * std::abs(x(i)));
      }
    }
  }
}

TEST_CASE("average is permutation sensitive only through its fixed order") {
  // Same multiset of contributions, same result, because the accumulation
  // order is the index order of the vector we pass in.
  std::vector<ParamVector> in = {vec({0.1, -2.0}), vec({1e16, 3.0}),
                                 vec({-1e16, 0.25})};
  ParamVector a = average(in);
  ParamVector b = average(in);
  CHECK(a(0) == b(0));
  CHECK(a(1) == b(1));
}

TEST_CASE("average rejects bad input") {
  CHECK_THROWS_AS(average({}), validation_error);
  std::vector<ParamVector> mismatched = {vec({1.0, 2.0}), vec({1.0})};
  CHECK_THROWS_AS(average(mismatched), validation_error);
  std::vector<ParamVector> with_inf = {
      vec({1.0, std::numeric_limits<double>::infinity()}), vec({1.0, 2.0})};
  CHECK_THROWS_AS(average(with_inf), numeric_error);
  std::vector<ParamVector> with_nan = {
      vec({std::numeric_limits<double>::quiet_NaN()}), vec({1.0})};
  CHECK_THROWS_AS(average(with_nan), numeric_error);
}

TEST_CASE("clip_elementwise clamps to the band and is identity inside it") {
  ParamVector v = vec({-3.0, -0.5, 0.0, 0.25, 7.0});
  ParamVector c = clip_elementwise(v, 0.5);
  CHECK(c(0) == -0.5);
  CHECK(c(1) == -0.5);
  CHECK(c(2) == 0.0);
  CHECK(c(3) == 0.25);
  CHECK(c(4) == 0.5);

  RngStream rng(13, 0);
  for (int trial = 0; trial < 200; ++trial) {
    ParamVector x = random_vector(rng, 8, 3.0);
    double phi = 0.01 + rng.next_double();
    ParamVector y = clip_elementwise(x, phi);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      CHECK(std::abs(y(i)) <= phi);
      if (std::abs(x(i)) <= phi) CHECK(y(i) == x(i));
      // Clipping never flips sign.
      CHECK(y(i) * x(i) >= 0.0);
    }
  }
}

TEST_CASE("clip_elementwise rejects non-positive bounds and non-finite input") {
  ParamVector v = vec({1.0});
  CHECK_THROWS_AS(clip_elementwise(v, 0.0), validation_error);
  CHECK_THROWS_AS(clip_elementwise(v, -1.0), validation_error);
  // A NaN coordinate must fail loudly instead of being clamped into range.
  ParamVector bad = vec({std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(clip_elementwise(bad, 1.0), numeric_error);
  ParamVector inf = vec({std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(clip_elementwise(inf, 1.0), numeric_error);
}

TEST_CASE("elementwise_abs_diff") {
  ParamVector a = vec({1.0, -2.0, 3.5});
  ParamVector b = vec({2.5, -2.0, -1.0});
  ParamVector d = elementwise_abs_diff(a, b);
  CHECK(d(0) == 1.5);
  CHECK(d(1) == 0.0);
  CHECK(d(2) == 4.5);
  CHECK_THROWS_AS(elementwise_abs_diff(a, vec({1.0})), validation_error);
}

TEST_CASE("l2_norm") {
  CHECK(l2_norm(vec({3.0, 4.0})) == 5.0);
  CHECK(l2_norm(vec({0.0, 0.0, 0.0})) == 0.0);
}

TEST_CASE("ensure_finite names the failing context") {
  ParamVector bad = vec({1.0, std::numeric_limits<double>::quiet_NaN()});
  try {
    ensure_finite(bad, "outer momentum");
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("outer momentum") != std::string::npos);
  }
}
