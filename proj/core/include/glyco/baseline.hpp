#pragma once

#include <span>
#include <string>
#include <vector>

#include "glyco/forecaster.hpp"

namespace glyco {

std::vector<double> copy_last(std::span<const double> input, std::size_t horizon = 12);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;  // value at absolute index 0 of the input

  double at(double index) const noexcept { return intercept + slope * index; }
};

/// OLS over (index, value) for the last fit_window points; 0 means all.
LineFit ols_fit(std::span<const double> input, std::size_t fit_window = 0);

/// Extends the fitted line to indices input.size() .. input.size()+horizon-1.
std::vector<double> linreg_forecast(std::span<const double> input, std::size_t horizon = 12,
                                    std::size_t fit_window = 0);

class CopyLastForecaster final : public Forecaster {
public:
  std::string name() const override { return "copy_last"; }
  std::vector<double> forecast(std::span<const double> input,
                               std::size_t horizon) const override {
    return copy_last(input, horizon);
  }
};

class LinRegForecaster final : public Forecaster {
public:
  explicit LinRegForecaster(std::size_t fit_window = 0) : fit_window_(fit_window) {}

  std::string name() const override { return "linreg"; }
  std::vector<double> forecast(std::span<const double> input,
                               std::size_t horizon) const override {
    return linreg_forecast(input, horizon, fit_window_);
  }

private:
  std::size_t fit_window_;
};

}  // namespace glyco
