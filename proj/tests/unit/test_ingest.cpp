#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/ingest.hpp"
#include "glyco/pipeline.hpp"

using namespace glyco;

namespace {
std::string header() { return std::string(kCgmHeader) + "\n"; }
}

TEST_SUITE("ingest") {

TEST_CASE("well-formed rows are parsed and sorted") {
  std::istringstream in(header() + "p1,1300,190.0\np1,1000,180.0\n");
  const auto r = parse_cgm_csv(in);
  REQUIRE(r.readings.size() == 2);
  CHECK(r.readings[0].timestamp == 1000);
  CHECK(r.readings[1].value == 190.0);
  CHECK(r.report.rejected.empty());
}

TEST_CASE("header-only file is an empty corpus") {
  std::istringstream in(header());
  const auto r = parse_cgm_csv(in);
  CHECK(r.readings.empty());
  CHECK(r.report.rejected.empty());
}

TEST_CASE("malformed rows are reported, and fatal past the limit") {
  std::istringstream in(header() + "p1,1000,abc\np1,1300,100\n");
  const auto r = parse_cgm_csv(in, ParseOptions{1.0});
  CHECK(r.readings.size() == 1);
  REQUIRE(r.report.rejected.size() == 1);
  CHECK(r.report.rejected[0].line == 2);

  std::istringstream again(header() + "p1,1000,abc\np1,1300,100\n");
  try {
    (void)parse_cgm_csv(again);
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Format);
  }
}

TEST_CASE("out-of-range glucose and bad header") {
  std::istringstream in(header() + "p1,1000,0\np1,1300,1200\np1,1600,100\n");
  const auto r = parse_cgm_csv(in, ParseOptions{1.0});
  CHECK(r.readings.size() == 1);
  CHECK(r.report.rejected.size() == 2);

  std::istringstream bad("id,time,value\n");
  CHECK_THROWS_AS(parse_cgm_csv(bad), Error);
}

TEST_CASE("duplicates resolve to the lowest value regardless of order") {
  std::istringstream a(header() + "p1,1000,120\np1,1000,110\n");
  std::istringstream b(header() + "p1,1000,110\np1,1000,120\n");
  const auto ra = parse_cgm_csv(a), rb = parse_cgm_csv(b);
  REQUIRE(ra.readings.size() == 1);
  CHECK(ra.readings[0].value == 110.0);
  CHECK(ra.readings == rb.readings);
  CHECK(ra.report.duplicates_removed == 1);
}

TEST_CASE("cgm csv round trip") {
  const Corpus c = synth_corpus(2, 1, 3);
  std::ostringstream out;
  write_cgm_csv(out, c.readings);
  std::istringstream in(out.str());
  CHECK(parse_cgm_csv(in).readings == c.readings);

  std::ostringstream pout;
  write_patient_csv(pout, c.patients);
  std::istringstream pin(pout.str());
  CHECK(parse_patient_csv(pin).patients == c.patients);
}

TEST_CASE("corpus stats use the population s.d.") {
  std::vector<GlucoseReading> flat{{"p", 1, 100}, {"p", 2, 100}, {"p", 3, 100}};
  CHECK(corpus_stats(flat).mean == 100.0);
  CHECK(corpus_stats(flat).sd == 0.0);
  std::vector<GlucoseReading> two{{"p", 1, 90}, {"p", 2, 110}};
  CHECK(corpus_stats(two).mean == doctest::Approx(100.0));
  CHECK(corpus_stats(two).sd == doctest::Approx(10.0));
}

TEST_CASE("daily profile") {
  std::vector<GlucoseReading> one{{"p", 120, 150}};  // 00:02
  const auto p = daily_profile(one);
  CHECK(p.bins[0].count == 1);
  std::size_t empty = 0;
  for (const auto& b : p.bins) empty += b.count == 0;
  CHECK(empty == 287);

  const Seconds t0705 = 7 * 3600 + 5 * 60;
  std::vector<GlucoseReading> two{{"p", t0705, 190}, {"p", 86400 + t0705, 194}};
  const auto q = daily_profile(two);
  const std::size_t slot = static_cast<std::size_t>(t0705 / 300);
  CHECK(q.bins[slot].mean == doctest::Approx(192.0));
  CHECK(slot_label(slot) == "07:05");
  CHECK(q.min_mean_slot() == slot);
}

TEST_CASE("sequence length histogram") {
  std::vector<ContiguousSequence> seqs{{"a", 1, std::vector<double>(10, 100)},
                                       {"b", 1, std::vector<double>(150, 100)},
                                       {"c", 1, std::vector<double>(150, 100)}};
  const auto h = sequence_length_histogram(seqs);
  CHECK(h.total == 3);
  CHECK(h.long_count == 2);
  CHECK(h.long_fraction == doctest::Approx(2.0 / 3.0));
  CHECK(sequence_length_histogram({}).counts.empty());
}

TEST_CASE("synthetic corpus") {
  CHECK(synth_corpus(1, 1, 7) == synth_corpus(1, 1, 7));
  CHECK_FALSE(synth_corpus(1, 1, 7) == synth_corpus(1, 1, 8));
  for (const auto& r : synth_corpus(1, 1, 1).readings) {
    CHECK(r.value >= 40.0);
    CHECK(r.value <= 600.0);
  }
  const Corpus c = synth_corpus(20, 30, 1);
  const auto s = corpus_stats(c);
  CHECK(std::abs(s.mean - 204.56) <= 25.0);
  CHECK(std::abs(s.sd - 87.0) <= 30.0);
  std::set<std::string> ids;
  for (const auto& p : c.patients) ids.insert(p.patient_id);
  CHECK(ids.size() == 20);
  // Includes gaps, so segmentation yields more sequences than patients.
  CHECK(segment(c.readings).size() > 20);
}

}
