#include "glyco/types.hpp"

#include <cmath>

#include "glyco/error.hpp"

namespace glyco {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) fail(ErrorKind::InvalidValue, std::string(what) + ": non-finite value");
}

}  // namespace

double mgdl_to_mmoll(double mgdl) {
  require_finite(mgdl, "mgdl_to_mmoll");
  return mgdl / kMgdlPerMmoll;
}

double mmoll_to_mgdl(double mmoll) {
  require_finite(mmoll, "mmoll_to_mgdl");
  return mmoll * kMgdlPerMmoll;
}

bool valid_glucose(double mgdl) noexcept {
  return std::isfinite(mgdl) && mgdl > 0.0 && mgdl <= kMaxGlucoseMgdl;
}

GlucoseReading::GlucoseReading(std::string patient, Seconds ts, double mgdl)
    : patient_id(std::move(patient)), timestamp(ts), value(mgdl) {
  if (timestamp <= 0)
    fail(ErrorKind::InvalidValue, "reading timestamp must be positive, got " +
                                      std::to_string(timestamp));
  if (!valid_glucose(value))
    fail(ErrorKind::InvalidValue,
         "glucose value out of range (0, 1000] mg/dL: " + std::to_string(value));
}

ContiguousSequence::ContiguousSequence(std::string patient_id, Seconds start_timestamp,
                                       std::vector<double> values)
    : patient_id_(std::move(patient_id)),
      start_timestamp_(start_timestamp),
      values_(std::move(values)) {
  if (values_.empty()) fail(ErrorKind::InvalidValue, "contiguous sequence must not be empty");
  for (double v : values_)
    if (!valid_glucose(v))
      fail(ErrorKind::InvalidValue, "sequence value out of range: " + std::to_string(v));
}

ContiguousSequence ContiguousSequence::from_readings(std::span<const GlucoseReading> readings,
                                                     Seconds max_gap) {
  if (readings.empty()) fail(ErrorKind::InvalidValue, "contiguous sequence must not be empty");
  std::vector<double> values;
  values.reserve(readings.size());
  for (std::size_t i = 0; i < readings.size(); ++i) {
    if (i > 0) {
      if (readings[i].patient_id != readings[0].patient_id)
        fail(ErrorKind::InvalidValue, "contiguous sequence spans several patients");
      const Seconds gap = readings[i].timestamp - readings[i - 1].timestamp;
      if (gap <= 0) fail(ErrorKind::InvalidValue, "readings not strictly increasing in time");
      if (gap > max_gap)
        fail(ErrorKind::InvalidValue,
             "gap of " + std::to_string(gap) + " s exceeds " + std::to_string(max_gap) + " s");
    }
    values.push_back(readings[i].value);
  }
  return ContiguousSequence(readings[0].patient_id, readings[0].timestamp, std::move(values));
}

std::optional<double> PatientRecord::bmi() const {
  if (!weight_kg || !height_cm || *height_cm <= 0.0) return std::nullopt;
  const double m = *height_cm / 100.0;
  return *weight_kg / (m * m);
}

std::optional<double> PatientRecord::feature(std::string_view name) const {
  if (name == "age") return age;
  if (name == "weight_kg") return weight_kg;
  if (name == "height_cm") return height_cm;
  if (name == "bmi") return bmi();
  if (name == "hba1c") return hba1c;
  if (name == "annual_income_usd") return annual_income_usd;
  if (name == "education_level") {
    if (!education_level) return std::nullopt;
    return static_cast<double>(*education_level);
  }
  if (name == "sex") {
    if (!sex) return std::nullopt;
    return static_cast<double>(static_cast<int>(*sex));
  }
  fail(ErrorKind::Config, "unknown patient feature '" + std::string(name) + "'");
}

ForecastPair::ForecastPair(std::vector<double> predicted, std::vector<double> reference)
    : predicted_(std::move(predicted)), reference_(std::move(reference)) {
  if (predicted_.size() != reference_.size())
    fail(ErrorKind::Shape, "forecast pair length mismatch: " + std::to_string(predicted_.size()) +
                               " predicted vs " + std::to_string(reference_.size()) +
                               " reference");
  if (predicted_.empty()) fail(ErrorKind::Shape, "forecast pair must not be empty");
}

}  // namespace glyco
