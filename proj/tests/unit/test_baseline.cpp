#include <doctest.h>

#include <cmath>

#include "glyco/baseline.hpp"
#include "glyco/error.hpp"
#include "glyco/eval.hpp"
#include "oracles.hpp"

using namespace glyco;

TEST_SUITE("models_baseline") {

TEST_CASE("copy last") {
  CHECK(copy_last(std::vector<double>{120, 130, 150}) == std::vector<double>(12, 150.0));
  CHECK(copy_last(std::vector<double>(132, 100.0), 3) == std::vector<double>(3, 100.0));
  CHECK_THROWS_AS(copy_last(std::vector<double>{}), Error);
}

TEST_CASE("copy last has no curvature") {
  std::vector<double> y{100, 120, 110, 150, 140, 160, 150, 170, 160, 180, 170, 190};
  ForecastPair p(copy_last(std::vector<double>{100, 101}), y);
  CHECK(*esod_n(p) == 0.0);
}

TEST_CASE("exact line is continued") {
  std::vector<double> in(132);
  for (std::size_t t = 0; t < in.size(); ++t) in[t] = 2.0 * double(t) + 5.0;
  const auto out = linreg_forecast(in);
  for (std::size_t k = 0; k < out.size(); ++k)
    CHECK(std::abs(out[k] - (2.0 * double(132 + k) + 5.0)) < 1e-9);
  const auto flat = linreg_forecast(std::vector<double>(132, 180.0));
  for (double v : flat) CHECK(v == doctest::Approx(180.0));
  CHECK(ols_fit(std::vector<double>(132, 180.0)).slope == doctest::Approx(0.0));
}

TEST_CASE("fit matches closed-form OLS") {
  std::vector<double> in(132);
  for (std::size_t t = 0; t < in.size(); ++t) in[t] = double(t);
  in.back() += 1.0;
  const auto fit = ols_fit(in, 132);
  const auto ref = oracle::closed_form_ols(in, 0.0);
  CHECK(std::abs(fit.slope - ref.slope) < 1e-9);
  CHECK(std::abs(fit.intercept - ref.intercept) < 1e-9);

  // Short window: the line is still indexed from the start of the input.
  const auto tail = ols_fit(in, 12);
  const auto ref_tail = oracle::closed_form_ols(std::vector<double>(in.end() - 12, in.end()), 120.0);
  CHECK(std::abs(tail.slope - ref_tail.slope) < 1e-9);
  CHECK(std::abs(tail.intercept - ref_tail.intercept) < 1e-9);
  CHECK_THROWS_AS(ols_fit(in, 1), Error);
  CHECK_THROWS_AS(ols_fit(in, 133), Error);
}

TEST_CASE("linear forecasts have no curvature") {
  Rng rng(2);
  std::vector<double> in(132), ref(12);
  for (auto& v : in) v = rng.uniform(60, 300);
  for (auto& v : ref) v = rng.uniform(60, 300);
  const auto e = esod_n(ForecastPair(linreg_forecast(in), ref));
  REQUIRE(e.has_value());
  CHECK(*e < 1e-20);
}

}
