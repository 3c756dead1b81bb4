#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyco/types.hpp"

namespace glyco {

class ContiguousSequence;

/// Readings sorted by (patient_id, timestamp) with no duplicate keys, plus
/// whatever patient metadata accompanies them.
struct Corpus {
  std::vector<GlucoseReading> readings;
  std::vector<PatientRecord> patients;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based, header is line 1
  std::string reason;
};

struct ParseReport {
  std::size_t data_rows = 0;
  std::size_t accepted = 0;
  std::size_t duplicates_removed = 0;
  std::vector<RejectedRow> rejected;
};

struct ParseOptions {
  /// Hard error once rejected rows exceed this fraction of data rows.
  double max_malformed_fraction = 0.01;
};

struct CgmParseResult {
  std::vector<GlucoseReading> readings;
  ParseReport report;
};

struct PatientParseResult {
  std::vector<PatientRecord> patients;
  ParseReport report;
};

inline constexpr std::string_view kCgmHeader = "patient_id,timestamp,glucose_mgdl";
inline constexpr std::string_view kPatientHeader =
    "patient_id,age,weight_kg,height_cm,hba1c,hba1c_unit,annual_income_usd,"
    "education_level,sex";

CgmParseResult parse_cgm_csv(std::istream& in, const ParseOptions& options = {});
CgmParseResult parse_cgm_csv(const std::filesystem::path& path,
                             const ParseOptions& options = {});

PatientParseResult parse_patient_csv(std::istream& in, const ParseOptions& options = {});
PatientParseResult parse_patient_csv(const std::filesystem::path& path,
                                     const ParseOptions& options = {});

/// Sorts by (patient, timestamp) and drops repeated keys. When duplicates
/// disagree the lowest value wins, so the result does not depend on row order.
std::size_t normalize_readings(std::vector<GlucoseReading>& readings);

void write_cgm_csv(std::ostream& out, std::span<const GlucoseReading> readings);
void write_patient_csv(std::ostream& out, std::span<const PatientRecord> patients);

struct CorpusStats {
  double mean = 0.0;
  double sd = 0.0;  // population (divide by N)
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

CorpusStats corpus_stats(std::span<const GlucoseReading> readings);
CorpusStats corpus_stats(const Corpus& corpus);
nlohmann::json to_json(const CorpusStats& stats);

inline constexpr std::size_t kSlotsPerDay = 288;

struct ProfileBin {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

/// Time-of-day profile on a 5-minute grid (UTC seconds into the day).
struct DailyProfile {
  std::array<ProfileBin, kSlotsPerDay> bins{};

  std::size_t total_count() const noexcept;
  /// Slot with the smallest / largest mean among populated slots.
  std::size_t min_mean_slot() const;
  std::size_t max_mean_slot() const;
};

DailyProfile daily_profile(std::span<const GlucoseReading> readings);
void write_daily_profile_csv(std::ostream& out, const DailyProfile& profile);
/// "HH:MM" label for a slot start.
std::string slot_label(std::size_t slot);

struct LengthHistogram {
  std::map<std::size_t, std::size_t> counts;  // bucket start -> sequences
  std::size_t total = 0;
  std::size_t long_count = 0;  // sequences with length >= long_threshold
  double long_fraction = 0.0;
  std::size_t long_threshold = 144;
};

LengthHistogram sequence_length_histogram(std::span<const ContiguousSequence> sequences,
                                          std::size_t long_threshold = 144,
                                          std::size_t bucket_width = 1);

/// Synthetic 5-minute CGM corpus for exercising the pipeline without patient
/// data. Pure function of its arguments.
Corpus synth_corpus(std::size_t n_patients, std::size_t days, std::uint64_t seed);

}  // namespace glyco
