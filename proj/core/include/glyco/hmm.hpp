#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyco/forecaster.hpp"

namespace glyco {

struct PreparedSet;

/// Uniform binning of mg/dL values onto observation symbols.
class Quantizer {
public:
  Quantizer(std::size_t n_symbols, double lo, double hi);

  /// Bins spanning [min, max] of the supplied training values.
  static Quantizer fit(std::span<const double> values, std::size_t n_symbols);

  std::size_t encode(double mgdl) const noexcept;
  std::vector<std::size_t> encode(std::span<const double> mgdl) const;
  double decode(std::size_t symbol) const;

  std::size_t n_symbols() const noexcept { return n_symbols_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double bin_width() const noexcept { return (hi_ - lo_) / static_cast<double>(n_symbols_); }
  std::vector<double> edges() const;

private:
  std::size_t n_symbols_;
  double lo_;
  double hi_;
};

inline constexpr double kHmmProbabilityFloor = 1e-10;

/// Discrete-emission HMM. Distributions are held as natural logs, row-major.
class HmmModel {
public:
  HmmModel() = default;

  /// Floors every probability at `floor` and renormalises each row.
  static HmmModel from_probabilities(std::span<const double> initial,
                                     std::span<const double> transition,
                                     std::span<const double> emission, std::size_t n_states,
                                     std::size_t n_symbols,
                                     double floor = kHmmProbabilityFloor);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t n_symbols() const noexcept { return n_symbols_; }

  double log_initial(std::size_t i) const { return log_initial_[i]; }
  double log_transition(std::size_t i, std::size_t j) const {
    return log_transition_[i * n_states_ + j];
  }
  double log_emission(std::size_t i, std::size_t m) const {
    return log_emission_[i * n_symbols_ + m];
  }

  std::vector<double> initial() const;
  std::vector<double> transition() const;  // N x N row-major
  std::vector<double> emission() const;    // N x M row-major

  std::size_t trained_iterations = 0;
  double final_log_likelihood = 0.0;
  /// Total log-likelihood of the training data before each M-step.
  std::vector<double> history;

private:
  friend HmmModel baum_welch_from(HmmModel, const std::vector<std::vector<std::size_t>>&,
                                  std::size_t, double, double);

  std::size_t n_states_ = 0;
  std::size_t n_symbols_ = 0;
  std::vector<double> log_initial_;
  std::vector<double> log_transition_;
  std::vector<double> log_emission_;
};

struct BaumWelchOptions {
  std::size_t n_states = 100;
  std::size_t n_symbols = 100;
  std::size_t max_iter = 10000;
  double tol = 1e-6;
  std::uint64_t seed = 42;
  double floor = kHmmProbabilityFloor;
};

/// Random row-stochastic start, then log-space EM until max_iter or a
/// log-likelihood gain below tol.
HmmModel baum_welch(const std::vector<std::vector<std::size_t>>& sequences,
                    const BaumWelchOptions& options);

/// EM continued from an explicit starting model.
HmmModel baum_welch_from(HmmModel start, const std::vector<std::vector<std::size_t>>& sequences,
                         std::size_t max_iter, double tol, double floor = kHmmProbabilityFloor);

/// log P(symbols) via the forward pass.
double forward_log_likelihood(const HmmModel& model, std::span<const std::size_t> symbols);
/// log P(symbols) via the backward pass (terminated at t = 0).
double backward_log_likelihood(const HmmModel& model, std::span<const std::size_t> symbols);

struct ViterbiPath {
  std::vector<std::size_t> states;
  double log_probability = 0.0;
};

/// Most likely state path; ties resolve to the lowest state index.
ViterbiPath viterbi(const HmmModel& model, std::span<const std::size_t> symbols);

/// Decodes the input, then greedily walks the most likely transitions and
/// emits the decoded most likely symbol of each visited state.
std::vector<double> hmm_forecast(const HmmModel& model, const Quantizer& quantizer,
                                 std::span<const double> input, std::size_t horizon = 12);

class HmmForecaster final : public Forecaster {
public:
  HmmForecaster(HmmModel model, Quantizer quantizer)
      : model_(std::move(model)), quantizer_(quantizer) {}

  std::string name() const override { return "hmm"; }
  std::vector<double> forecast(std::span<const double> input,
                               std::size_t horizon) const override {
    return hmm_forecast(model_, quantizer_, input, horizon);
  }

  const HmmModel& model() const noexcept { return model_; }
  const Quantizer& quantizer() const noexcept { return quantizer_; }

private:
  HmmModel model_;
  Quantizer quantizer_;
};

/// Fits the quantizer on every training value (inputs and targets), encodes
/// each training window as one symbol sequence and runs Baum-Welch.
HmmForecaster train_hmm(const PreparedSet& prepared, const BaumWelchOptions& options);

nlohmann::json hmm_to_json(const HmmModel& model, const Quantizer& quantizer);
HmmForecaster hmm_from_json(const nlohmann::json& doc);
void save_hmm(const HmmModel& model, const Quantizer& quantizer,
              const std::filesystem::path& path);
HmmForecaster load_hmm(const std::filesystem::path& path);

}  // namespace glyco
