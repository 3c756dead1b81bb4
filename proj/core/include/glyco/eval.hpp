#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "glyco/types.hpp"

namespace glyco {

class Forecaster;
struct PreparedSet;

enum class GlycemicClass { Hypo, Normal, Hyper };

struct Thresholds {
  double hypo = 70.0;
  double hyper = 280.0;
};

/// Strict inequalities: the threshold values themselves are Normal.
GlycemicClass classify(double mgdl, const Thresholds& thresholds = {});
std::string_view to_string(GlycemicClass c) noexcept;

/// Pooled over every point of every pair.
double rmse(std::span<const ForecastPair> pairs);

/// Ratio of second-difference energies (prediction over reference); nullopt
/// when the reference has none.
std::optional<double> esod_n(const ForecastPair& pair);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
};

struct PrecisionRecall {
  Confusion counts;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

struct Prf1 {
  /// Positive = Hypo or Hyper.
  PrecisionRecall abnormal;
  /// One-vs-rest breakdown indexed by GlycemicClass.
  std::array<PrecisionRecall, 3> per_class;
};

PrecisionRecall precision_recall(const Confusion& counts);
Prf1 prf1(std::span<const ForecastPair> pairs, const Thresholds& thresholds = {});

enum class ClarkeZone { A, B, C, D, E };
std::string_view to_string(ClarkeZone z) noexcept;

ClarkeZone clarke_zone(double reference, double predicted);

struct ZoneSummary {
  std::vector<ClarkeZone> zones;  // per point, pair-major
  std::array<std::size_t, 5> counts{};
  std::array<double, 5> proportions{};
};

ZoneSummary clarke_zones(std::span<const ForecastPair> pairs);

struct EsodSummary {
  std::optional<double> mean;  // over pairs with a defined ratio
  std::size_t defined = 0;
  std::size_t undefined = 0;
};

EsodSummary esod_summary(std::span<const ForecastPair> pairs);

struct FoldMetrics {
  std::size_t fold = 0;
  std::size_t n_examples = 0;
  double rmse = 0.0;
  EsodSummary esod;
  Prf1 prf1;
  ZoneSummary zones;  // zones vector cleared, only counts/proportions kept
};

struct MeanSd {
  std::optional<double> mean;
  std::optional<double> sd;  // population s.d. across folds
  std::size_t n = 0;
};

MeanSd mean_sd(std::span<const std::optional<double>> values);

struct EvalProtocol {
  std::size_t test_step = 0;
  std::string cohort = "all";
  std::size_t input_len = 132;
  std::size_t horizon = 12;
};

struct EvalReport {
  std::string model;
  EvalProtocol protocol;
  std::vector<FoldMetrics> folds;
  MeanSd rmse;
  MeanSd esod;
  MeanSd precision;
  MeanSd recall;
  MeanSd f1;
  std::size_t total_examples = 0;
  double pooled_rmse = 0.0;
};

FoldMetrics evaluate_fold(std::size_t fold, std::span<const ForecastPair> pairs,
                          const Thresholds& thresholds = {});

/// Runs each fold's model over that fold's test examples.
EvalReport evaluate(const std::string& model_name,
                    std::span<const Forecaster* const> fold_models,
                    std::span<const PreparedSet> folds, const Thresholds& thresholds = {},
                    std::vector<std::vector<ForecastPair>>* pairs_out = nullptr);

/// Recomputes the aggregate fields from the per-fold entries.
void aggregate(EvalReport& report);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const Prf1& prf1);

/// Columns: model,fold,metric,value
void write_flat_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Columns: reference,predicted
void write_scatter_csv(std::ostream& out, std::span<const ForecastPair> pairs);

}  // namespace glyco
