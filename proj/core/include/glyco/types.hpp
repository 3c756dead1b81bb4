#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glyco {

using Seconds = std::int64_t;

inline constexpr Seconds kNominalStep = 300;
inline constexpr Seconds kDefaultMaxGap = 900;
inline constexpr double kMgdlPerMmoll = 18.0;
inline constexpr double kMaxGlucoseMgdl = 1000.0;

double mgdl_to_mmoll(double mgdl);
double mmoll_to_mgdl(double mmoll);

/// Returns true for values accepted as a glucose concentration (0, 1000] mg/dL.
bool valid_glucose(double mgdl) noexcept;

struct GlucoseReading {
  std::string patient_id;
  Seconds timestamp = 0;
  double value = 0.0;

  GlucoseReading() = default;
  /// Throws Error(InvalidValue) when the timestamp or value is out of range.
  GlucoseReading(std::string patient, Seconds ts, double mgdl);

  friend bool operator==(const GlucoseReading&, const GlucoseReading&) = default;
};

/// A gap-free run of readings for one patient. Consecutive values are one
/// nominal 5-minute step apart regardless of the raw gap (up to the max gap).
class ContiguousSequence {
public:
  ContiguousSequence(std::string patient_id, Seconds start_timestamp,
                     std::vector<double> values);

  /// Builds a sequence from raw readings, enforcing single-patient membership
  /// and consecutive gaps of at most max_gap seconds.
  static ContiguousSequence from_readings(std::span<const GlucoseReading> readings,
                                          Seconds max_gap = kDefaultMaxGap);

  const std::string& patient_id() const noexcept { return patient_id_; }
  Seconds start_timestamp() const noexcept { return start_timestamp_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  static constexpr Seconds nominal_step() noexcept { return kNominalStep; }

  friend bool operator==(const ContiguousSequence&, const ContiguousSequence&) = default;

private:
  std::string patient_id_;
  Seconds start_timestamp_;
  std::vector<double> values_;
};

enum class Sex { Female, Male, Other };

struct PatientRecord {
  std::string patient_id;
  std::optional<double> age;
  std::optional<double> weight_kg;
  std::optional<double> height_cm;
  std::optional<double> hba1c;
  std::string hba1c_unit;
  std::optional<double> annual_income_usd;
  std::optional<int> education_level;
  std::optional<Sex> sex;

  /// weight / (height/100)^2, present only when both inputs are.
  std::optional<double> bmi() const;

  /// Looks a feature up by its CSV column name ("bmi" is derived). Missing
  /// values stay missing.
  std::optional<double> feature(std::string_view name) const;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

/// Predicted and reference trajectories of the same horizon.
class ForecastPair {
public:
  ForecastPair(std::vector<double> predicted, std::vector<double> reference);

  const std::vector<double>& predicted() const noexcept { return predicted_; }
  const std::vector<double>& reference() const noexcept { return reference_; }
  std::size_t horizon() const noexcept { return predicted_.size(); }

private:
  std::vector<double> predicted_;
  std::vector<double> reference_;
};

}  // namespace glyco
