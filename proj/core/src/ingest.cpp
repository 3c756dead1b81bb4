#include "glyco/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/rng.hpp"
#include "glyco/types.hpp"

namespace glyco {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_timestamp(std::string_view s, Seconds& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec == std::errc() && ptr == end) return true;
  // Fractional seconds are truncated.
  double d = 0.0;
  if (!parse_double(s, d) || d > 9.0e15 || d < -9.0e15) return false;
  out = static_cast<Seconds>(std::floor(d));
  return true;
}

std::optional<double> optional_number(std::string_view cell, bool& ok) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  if (!parse_double(cell, v)) {
    ok = false;
    return std::nullopt;
  }
  return v;
}

std::optional<Sex> parse_sex(std::string_view cell, bool& ok) {
  if (cell.empty()) return std::nullopt;
  std::string lower(cell);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "f" || lower == "female") return Sex::Female;
  if (lower == "m" || lower == "male") return Sex::Male;
  if (lower == "o" || lower == "other") return Sex::Other;
  ok = false;
  return std::nullopt;
}

std::string_view sex_label(Sex s) {
  switch (s) {
    case Sex::Female: return "F";
    case Sex::Male: return "M";
    case Sex::Other: return "O";
  }
  return "";
}

void read_header(std::istream& in, std::string_view expected) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, "missing CSV header");
  std::string_view h = trim(line);
  if (h.starts_with("\xEF\xBB\xBF")) h.remove_prefix(3);
  if (h != expected)
    fail(ErrorKind::Format,
         "bad CSV header '" + std::string(h) + "', expected '" + std::string(expected) + "'");
}

void check_malformed(const ParseReport& report, const ParseOptions& options) {
  if (report.rejected.empty()) return;
  const double frac =
      static_cast<double>(report.rejected.size()) / static_cast<double>(report.data_rows);
  if (frac <= options.max_malformed_fraction) return;
  std::ostringstream msg;
  msg << report.rejected.size() << " of " << report.data_rows
      << " rows malformed (limit " << options.max_malformed_fraction * 100.0 << "%); rows:";
  const std::size_t shown = std::min<std::size_t>(report.rejected.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) msg << ' ' << report.rejected[i].line;
  if (shown < report.rejected.size()) msg << " ...";
  fail(ErrorKind::Format, msg.str());
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

}  // namespace

std::size_t normalize_readings(std::vector<GlucoseReading>& readings) {
  std::sort(readings.begin(), readings.end(), [](const auto& a, const auto& b) {
    if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.value < b.value;
  });
  const auto last = std::unique(readings.begin(), readings.end(), [](const auto& a, const auto& b) {
    return a.patient_id == b.patient_id && a.timestamp == b.timestamp;
  });
  const auto removed = static_cast<std::size_t>(std::distance(last, readings.end()));
  readings.erase(last, readings.end());
  return removed;
}

CgmParseResult parse_cgm_csv(std::istream& in, const ParseOptions& options) {
  read_header(in, kCgmHeader);
  CgmParseResult result;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.report.data_rows;
    const auto cells = split(line);
    auto reject = [&](std::string reason) {
      result.report.rejected.push_back({line_no, std::move(reason)});
    };
    if (cells.size() != 3) {
      reject("expected 3 columns, got " + std::to_string(cells.size()));
      continue;
    }
    if (cells[0].empty()) {
      reject("empty patient_id");
      continue;
    }
    Seconds ts = 0;
    if (!parse_timestamp(cells[1], ts) || ts <= 0) {
      reject("bad timestamp '" + std::string(cells[1]) + "'");
      continue;
    }
    double v = 0.0;
    if (!parse_double(cells[2], v) || !valid_glucose(v)) {
      reject("bad glucose value '" + std::string(cells[2]) + "'");
      continue;
    }
    result.readings.emplace_back(std::string(cells[0]), ts, v);
  }
  check_malformed(result.report, options);
  result.report.duplicates_removed = normalize_readings(result.readings);
  result.report.accepted = result.readings.size();
  return result;
}

CgmParseResult parse_cgm_csv(const std::filesystem::path& path, const ParseOptions& options) {
  auto in = open_input(path);
  return parse_cgm_csv(in, options);
}

PatientParseResult parse_patient_csv(std::istream& in, const ParseOptions& options) {
  read_header(in, kPatientHeader);
  PatientParseResult result;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.report.data_rows;
    const auto cells = split(line);
    if (cells.size() != 9) {
      result.report.rejected.push_back(
          {line_no, "expected 9 columns, got " + std::to_string(cells.size())});
      continue;
    }
    bool ok = !cells[0].empty();
    PatientRecord p;
    p.patient_id = std::string(cells[0]);
    p.age = optional_number(cells[1], ok);
    p.weight_kg = optional_number(cells[2], ok);
    p.height_cm = optional_number(cells[3], ok);
    p.hba1c = optional_number(cells[4], ok);
    p.hba1c_unit = std::string(cells[5]);
    p.annual_income_usd = optional_number(cells[6], ok);
    if (auto edu = optional_number(cells[7], ok)) {
      if (*edu != std::floor(*edu)) ok = false;
      p.education_level = static_cast<int>(*edu);
    }
    p.sex = parse_sex(cells[8], ok);
    if (!ok) {
      result.report.rejected.push_back({line_no, "malformed patient row"});
      continue;
    }
    result.patients.push_back(std::move(p));
  }
  check_malformed(result.report, options);
  std::sort(result.patients.begin(), result.patients.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  const auto last = std::unique(result.patients.begin(), result.patients.end(),
                                [](const auto& a, const auto& b) { return a.patient_id == b.patient_id; });
  result.report.duplicates_removed =
      static_cast<std::size_t>(std::distance(last, result.patients.end()));
  result.patients.erase(last, result.patients.end());
  result.report.accepted = result.patients.size();
  return result;
}

PatientParseResult parse_patient_csv(const std::filesystem::path& path,
                                     const ParseOptions& options) {
  auto in = open_input(path);
  return parse_patient_csv(in, options);
}

void write_cgm_csv(std::ostream& out, std::span<const GlucoseReading> readings) {
  out << kCgmHeader << '\n';
  char buf[64];
  for (const auto& r : readings) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, r.value);
    out << r.patient_id << ',' << r.timestamp << ',' << std::string_view(buf, ptr - buf) << '\n';
  }
}

void write_patient_csv(std::ostream& out, std::span<const PatientRecord> patients) {
  out << kPatientHeader << '\n';
  auto num = [&](const std::optional<double>& v) {
    if (!v) return;
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, *v);
    out << std::string_view(buf, ptr - buf);
  };
  for (const auto& p : patients) {
    out << p.patient_id << ',';
    num(p.age);
    out << ',';
    num(p.weight_kg);
    out << ',';
    num(p.height_cm);
    out << ',';
    num(p.hba1c);
    out << ',' << p.hba1c_unit << ',';
    num(p.annual_income_usd);
    out << ',';
    if (p.education_level) out << *p.education_level;
    out << ',';
    if (p.sex) out << sex_label(*p.sex);
    out << '\n';
  }
}

CorpusStats corpus_stats(std::span<const GlucoseReading> readings) {
  if (readings.size() < 2)
    fail(ErrorKind::InsufficientData,
         "corpus statistics need at least 2 readings, got " + std::to_string(readings.size()));
  CorpusStats s;
  s.count = readings.size();
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& r : readings) {
    sum += r.value;
    s.min = std::min(s.min, r.value);
    s.max = std::max(s.max, r.value);
  }
  s.mean = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (const auto& r : readings) ss += (r.value - s.mean) * (r.value - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(s.count));
  return s;
}

CorpusStats corpus_stats(const Corpus& corpus) { return corpus_stats(corpus.readings); }

nlohmann::json to_json(const CorpusStats& stats) {
  return {{"mean", stats.mean},
          {"sd", stats.sd},
          {"min", stats.min},
          {"max", stats.max},
          {"count", stats.count}};
}

std::size_t DailyProfile::total_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

std::size_t DailyProfile::min_mean_slot() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (bins[i].count > 0 && (!best || bins[i].mean < bins[*best].mean)) best = i;
  if (!best) fail(ErrorKind::InsufficientData, "daily profile has no populated slots");
  return *best;
}

std::size_t DailyProfile::max_mean_slot() const {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < bins.size(); ++i)
    if (bins[i].count > 0 && (!best || bins[i].mean > bins[*best].mean)) best = i;
  if (!best) fail(ErrorKind::InsufficientData, "daily profile has no populated slots");
  return *best;
}

DailyProfile daily_profile(std::span<const GlucoseReading> readings) {
  DailyProfile profile;
  std::array<double, kSlotsPerDay> m2{};
  for (const auto& r : readings) {
    if (r.timestamp <= 0) fail(ErrorKind::InvalidValue, "reading without a valid timestamp");
    const auto slot = static_cast<std::size_t>((r.timestamp % 86400) / kNominalStep);
    auto& bin = profile.bins[slot];
    ++bin.count;
    const double delta = r.value - bin.mean;
    bin.mean += delta / static_cast<double>(bin.count);
    m2[slot] += delta * (r.value - bin.mean);
  }
  for (std::size_t i = 0; i < kSlotsPerDay; ++i) {
    auto& bin = profile.bins[i];
    bin.sd = bin.count > 0 ? std::sqrt(m2[i] / static_cast<double>(bin.count)) : 0.0;
  }
  return profile;
}

std::string slot_label(std::size_t slot) {
  const std::size_t minutes = slot * 5;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02zu:%02zu", minutes / 60 % 24, minutes % 60);
  return buf;
}

void write_daily_profile_csv(std::ostream& out, const DailyProfile& profile) {
  out << "slot,time,count,mean_mgdl,sd_mgdl\n";
  for (std::size_t i = 0; i < kSlotsPerDay; ++i) {
    const auto& b = profile.bins[i];
    out << i << ',' << slot_label(i) << ',' << b.count << ',';
    if (b.count > 0) out << b.mean << ',' << b.sd;
    else out << ',';
    out << '\n';
  }
}

LengthHistogram sequence_length_histogram(std::span<const ContiguousSequence> sequences,
                                          std::size_t long_threshold, std::size_t bucket_width) {
  if (bucket_width == 0) fail(ErrorKind::InvalidValue, "bucket width must be positive");
  LengthHistogram h;
  h.long_threshold = long_threshold;
  for (const auto& s : sequences) {
    const std::size_t len = s.size();
    ++h.counts[len / bucket_width * bucket_width];
    ++h.total;
    if (len >= long_threshold) ++h.long_count;
  }
  h.long_fraction =
      h.total > 0 ? static_cast<double>(h.long_count) / static_cast<double>(h.total) : 0.0;
  return h;
}

namespace {

// Piecewise-cosine daily shape: trough at 07:05, peak at 21:40.
double daily_shape(std::size_t slot, double amplitude) {
  constexpr double trough = 85.0;  // 07:05
  constexpr double peak = 260.0;   // 21:40
  constexpr double day = static_cast<double>(kSlotsPerDay);
  const double s = static_cast<double>(slot);
  double phase = 0.0;  // 0 at trough, 1 at peak
  if (s >= trough && s <= peak) {
    phase = (s - trough) / (peak - trough);
  } else {
    const double since_peak = s > peak ? s - peak : s + day - peak;
    phase = 1.0 - since_peak / (day - (peak - trough));
  }
  return -amplitude * std::cos(std::numbers::pi * phase);
}

struct Meal {
  std::size_t start = 0;
  double amplitude = 0.0;
  double tau = 0.0;
};

}  // namespace

Corpus synth_corpus(std::size_t n_patients, std::size_t days, std::uint64_t seed) {
  if (n_patients < 1) fail(ErrorKind::InvalidValue, "synth_corpus needs at least one patient");
  if (days < 1) fail(ErrorKind::InvalidValue, "synth_corpus needs at least one day");

  constexpr Seconds kDay0 = 1'599'955'200;  // midnight UTC
  constexpr double kLevel = 204.56;
  constexpr double kDailyAmplitude = 13.2;
  constexpr double kMealAmpLo = 40.0, kMealAmpHi = 120.0;
  constexpr double kTauLo = 6.0, kTauHi = 12.0;
  // Meal response a*(s^2/4)*exp(2-s), s = steps since the meal over tau:
  // gradual onset, peak a at s = 2. Its integral is a*tau*e^2/2 per meal.
  const double meal_mean = 3.0 * 0.5 * (kMealAmpLo + kMealAmpHi) * 0.5 * (kTauLo + kTauHi) *
                           std::exp(2.0) / 2.0 / static_cast<double>(kSlotsPerDay);
  // Slow deviation d_t = kPhi d_{t-1} + v_t with velocity v_t = kPsi v_{t-1} + e_t,
  // so traces are smooth and have momentum like real sensor output.
  constexpr double kPhi = 0.99;
  constexpr double kPsi = 0.9;
  constexpr double kSensorSd = 2.0;

  Corpus corpus;
  const std::size_t n_steps = days * kSlotsPerDay;
  for (std::size_t p = 0; p < n_patients; ++p) {
    Rng rng(derive_seed(seed, p));
    const int group = static_cast<int>(p % 3);
    char id[24];
    std::snprintf(id, sizeof id, "P%04zu", p + 1);

    PatientRecord rec;
    rec.patient_id = id;
    rec.age = std::round(rng.uniform(18.0, 75.0));
    rec.height_cm = std::round(rng.normal(170.0, 9.0) * 10.0) / 10.0;
    rec.weight_kg = std::round(rng.normal(80.0, 14.0) * 10.0) / 10.0;
    rec.hba1c = std::round(rng.normal(6.8 + 0.9 * group, 0.35) * 100.0) / 100.0;
    rec.hba1c_unit = "%";
    rec.annual_income_usd =
        std::round(std::max(5000.0, rng.normal(90000.0 - 25000.0 * group, 7000.0)));
    rec.education_level = static_cast<int>(1 + rng.below(5));
    rec.sex = rng.uniform() < 0.5 ? Sex::Female : Sex::Male;
    corpus.patients.push_back(rec);

    // Glucose signal on the full grid.
    const double dev_sd = 72.0 * (1.0 + 0.12 * (group - 1));
    const double pp = kPhi * kPsi;
    const double innovation_sd =
        dev_sd * std::sqrt((1.0 - pp) * (1.0 - kPhi * kPhi) * (1.0 - kPsi * kPsi) / (1.0 + pp));
    std::vector<Meal> meals;
    for (std::size_t d = 0; d < days; ++d) {
      for (double centre : {96.0, 156.0, 228.0}) {
        const double start = centre + rng.normal(0.0, 9.0);
        meals.push_back({d * kSlotsPerDay + static_cast<std::size_t>(std::max(0.0, start)),
                         rng.uniform(kMealAmpLo, kMealAmpHi), rng.uniform(kTauLo, kTauHi)});
      }
    }
    std::vector<double> signal(n_steps, 0.0);
    for (const auto& m : meals) {
      for (std::size_t t = m.start; t < n_steps; ++t) {
        const double s = static_cast<double>(t - m.start) / m.tau;
        if (s > 12.0) break;
        signal[t] += m.amplitude * 0.25 * s * s * std::exp(2.0 - s);
      }
    }
    double dev = rng.normal(0.0, dev_sd);
    double vel = 0.0;
    for (std::size_t t = 0; t < n_steps; ++t) {
      vel = kPsi * vel + rng.normal(0.0, innovation_sd);
      dev = kPhi * dev + vel;
      const double v = kLevel - meal_mean + daily_shape(t % kSlotsPerDay, kDailyAmplitude) + dev +
                       signal[t] + rng.normal(0.0, kSensorSd);
      signal[t] = std::round(std::clamp(v, 40.0, 600.0));
    }

    // Heavy-tailed run lengths separated by gaps longer than 15 minutes;
    // inside a run an occasional single missed reading leaves a 10-minute gap.
    std::size_t t = static_cast<std::size_t>(rng.below(12));
    while (t < n_steps) {
      const double u = std::max(rng.uniform(), 1e-12);
      const auto run = static_cast<std::size_t>(std::min(36.0 * std::pow(u, -1.0 / 0.8), 1e7));
      const std::size_t end = std::min(n_steps, t + run);
      for (; t < end; ++t) {
        if (t > 0 && rng.uniform() < 0.01) continue;
        corpus.readings.emplace_back(id, kDay0 + static_cast<Seconds>(t) * kNominalStep,
                                     signal[t]);
      }
      t += 4 + static_cast<std::size_t>(-20.0 * std::log(std::max(rng.uniform(), 1e-12)));
    }
  }
  normalize_readings(corpus.readings);
  return corpus;
}

}  // namespace glyco
