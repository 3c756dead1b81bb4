#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyco/eval.hpp"
#include "glyco/hmm.hpp"
#include "glyco/lstm.hpp"
#include "glyco/pipeline.hpp"
#include "glyco/stats.hpp"
#include "glyco/types.hpp"

namespace glyco::cli {

struct LstmSettings {
  std::size_t hidden = 8;
  std::size_t layers = 3;
  std::size_t epochs = 20;
  std::size_t batch = 128;
  double lr = 0.001;
  std::size_t heuristic_test_n = 1000;
  double clip_norm = 5.0;
  std::string mode = "recursive";  // or "teacher_forcing"
  std::size_t threads = 1;
};

struct HmmSettings {
  std::size_t n_states = 100;
  std::optional<std::size_t> n_symbols;  // defaults to n_states
  std::size_t max_iter = 10000;
  double tol = 1e-6;

  std::size_t symbols() const noexcept { return n_symbols.value_or(n_states); }
};

struct GmmSettings {
  std::size_t k = 3;
  std::size_t n_init = 20;
  std::size_t max_iter = 200;
  double tol = 1e-6;
  std::vector<std::string> features{"hba1c", "annual_income_usd"};
};

/// Fully resolved run configuration. Every report embeds it.
struct RunConfig {
  std::uint64_t seed = 42;
  std::size_t k_folds = 5;
  WindowSpec window;
  Seconds max_gap_s = kDefaultMaxGap;
  std::size_t train_step = 1;
  std::size_t test_step = 144;
  LstmSettings lstm;
  HmmSettings hmm;
  GmmSettings gmm;
  Thresholds thresholds;
  std::string cohort = "all";
  double variance_tau = 0.0;
  double max_malformed_fraction = 0.01;
  std::size_t jobs = 1;
};

nlohmann::json to_json(const RunConfig& config);

/// Overlays the keys present in `doc` onto `config`. Unknown keys are a
/// config error so typos do not silently fall back to defaults.
void apply_json(RunConfig& config, const nlohmann::json& doc);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
/// GLYCO_SEED, when set.
void apply_environment(RunConfig& config);

/// Range checks shared by every subcommand.
void validate(const RunConfig& config);

TrainMode train_mode(const RunConfig& config);
TrainOptions lstm_train_options(const RunConfig& config, std::size_t fold);
LstmConfig lstm_config(const RunConfig& config, std::size_t fold);
BaumWelchOptions hmm_options(const RunConfig& config, std::size_t fold);
GmmOptions gmm_options(const RunConfig& config);

/// Seed used for fold `fold`: seed + fold.
std::uint64_t fold_seed(const RunConfig& config, std::size_t fold);

}  // namespace glyco::cli
