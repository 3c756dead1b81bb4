#pragma once

#include <span>
#include <string>
#include <vector>

namespace glyco {

/// Recursive multi-step forecaster over mg/dL inputs.
class Forecaster {
public:
  virtual ~Forecaster() = default;

  virtual std::string name() const = 0;
  virtual std::vector<double> forecast(std::span<const double> input,
                                       std::size_t horizon) const = 0;
};

}  // namespace glyco
