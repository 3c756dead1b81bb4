#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "glyco/types.hpp"

namespace glyco {

/// Splits per-patient sorted readings into contiguous sequences. A new
/// sequence starts on a patient change or a gap strictly greater than max_gap.
std::vector<ContiguousSequence> segment(std::span<const GlucoseReading> readings,
                                        Seconds max_gap = kDefaultMaxGap);

struct WindowSpec {
  std::size_t input_len = 132;
  std::size_t horizon = 12;

  std::size_t total() const noexcept { return input_len + horizon; }
  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

struct Example {
  std::vector<double> input;
  std::vector<double> target;
  std::size_t source_sequence_id = 0;
  std::size_t offset = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

/// floor((length - total) / step) + 1 when length >= total, else 0.
std::size_t window_count(std::size_t length, std::size_t total, std::size_t step);

std::vector<Example> window(const ContiguousSequence& sequence, std::size_t sequence_id,
                            const WindowSpec& spec, std::size_t step);

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::size_t> train_sequence_ids;  // ascending
  std::vector<std::size_t> test_sequence_ids;   // ascending
  std::uint64_t seed = 0;

  friend bool operator==(const FoldSplit&, const FoldSplit&) = default;
};

/// Seeded shuffle of the eligible sequences (length >= min_length) dealt
/// round-robin into k folds. Ids index into `sequences`.
std::vector<FoldSplit> kfold_split(std::span<const ContiguousSequence> sequences,
                                   std::size_t k, std::uint64_t seed,
                                   std::size_t min_length);

/// Keeps the sequences whose patient is in `patients`; throws when none remain.
std::vector<ContiguousSequence> filter_cohort(std::span<const ContiguousSequence> sequences,
                                              const std::set<std::string>& patients);

struct Provenance {
  std::size_t fold = 0;
  std::string cohort = "all";
  std::size_t train_step = 1;
  std::size_t test_step = 1;
  std::uint64_t seed = 0;
  WindowSpec window;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct PreparedSet {
  std::vector<Example> train;
  std::vector<Example> test;
  Provenance provenance;

  friend bool operator==(const PreparedSet&, const PreparedSet&) = default;
};

struct PrepareOptions {
  WindowSpec window;
  std::size_t train_step = 1;
  std::size_t test_step = 1;
  std::string cohort = "all";
  std::optional<std::set<std::string>> cohort_filter;
};

PreparedSet prepare(std::span<const ContiguousSequence> sequences, const FoldSplit& fold,
                    const PrepareOptions& options);

void save_prepared(const PreparedSet& set, const std::filesystem::path& path);
PreparedSet load_prepared(const std::filesystem::path& path);

}  // namespace glyco
