#include "glyco/baseline.hpp"

#include <cmath>

#include "glyco/error.hpp"

namespace glyco {

std::vector<double> copy_last(std::span<const double> input, std::size_t horizon) {
  if (input.empty()) fail(ErrorKind::InvalidValue, "copy_last needs a non-empty input");
  return std::vector<double>(horizon, input.back());
}

LineFit ols_fit(std::span<const double> input, std::size_t fit_window) {
  const std::size_t n = input.size();
  const std::size_t w = fit_window == 0 ? n : fit_window;
  if (w < 2 || w > n)
    fail(ErrorKind::InvalidValue, "fit window " + std::to_string(w) + " outside [2, " +
                                      std::to_string(n) + "]");
  const std::size_t first = n - w;
  // Centre the abscissa so the normal equations stay well conditioned.
  double x_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = first; i < n; ++i) {
    x_mean += static_cast<double>(i);
    y_mean += input[i];
  }
  x_mean /= static_cast<double>(w);
  y_mean /= static_cast<double>(w);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = first; i < n; ++i) {
    const double dx = static_cast<double>(i) - x_mean;
    sxx += dx * dx;
    sxy += dx * (input[i] - y_mean);
  }
  if (!(sxx > 0.0)) fail(ErrorKind::Numeric, "degenerate regression abscissa");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = y_mean - fit.slope * x_mean;
  return fit;
}

std::vector<double> linreg_forecast(std::span<const double> input, std::size_t horizon,
                                    std::size_t fit_window) {
  const LineFit fit = ols_fit(input, fit_window);
  std::vector<double> out(horizon);
  for (std::size_t h = 0; h < horizon; ++h)
    out[h] = fit.at(static_cast<double>(input.size() + h));
  return out;
}

}  // namespace glyco
