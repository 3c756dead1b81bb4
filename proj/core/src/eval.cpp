#include "glyco/eval.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "glyco/error.hpp"
#include "glyco/forecaster.hpp"
#include "glyco/pipeline.hpp"

namespace glyco {

GlycemicClass classify(double mgdl, const Thresholds& thresholds) {
  if (mgdl < thresholds.hypo) return GlycemicClass::Hypo;
  if (mgdl > thresholds.hyper) return GlycemicClass::Hyper;
  return GlycemicClass::Normal;
}

std::string_view to_string(GlycemicClass c) noexcept {
  switch (c) {
    case GlycemicClass::Hypo: return "hypo";
    case GlycemicClass::Normal: return "normal";
    case GlycemicClass::Hyper: return "hyper";
  }
  return "?";
}

double rmse(std::span<const ForecastPair> pairs) {
  if (pairs.empty()) fail(ErrorKind::InsufficientData, "rmse needs at least one pair");
  double se = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    for (std::size_t k = 0; k < p.horizon(); ++k) {
      const double r = p.predicted()[k] - p.reference()[k];
      se += r * r;
    }
    n += p.horizon();
  }
  return std::sqrt(se / static_cast<double>(n));
}

namespace {

double second_difference_energy(const std::vector<double>& v) {
  double e = 0.0;
  for (std::size_t k = 2; k < v.size(); ++k) {
    const double d = v[k] - 2.0 * v[k - 1] + v[k - 2];
    e += d * d;
  }
  return e;
}

}  // namespace

std::optional<double> esod_n(const ForecastPair& pair) {
  if (pair.horizon() < 3)
    fail(ErrorKind::InvalidValue,
         "esod_n needs a horizon of at least 3, got " + std::to_string(pair.horizon()));
  const double den = second_difference_energy(pair.reference());
  if (den == 0.0) return std::nullopt;
  return second_difference_energy(pair.predicted()) / den;
}

PrecisionRecall precision_recall(const Confusion& counts) {
  PrecisionRecall pr;
  pr.counts = counts;
  if (counts.tp + counts.fp > 0)
    pr.precision = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fp);
  if (counts.tp + counts.fn > 0)
    pr.recall = static_cast<double>(counts.tp) / static_cast<double>(counts.tp + counts.fn);
  // Harmonic mean taken from P and R themselves so the reported triple is
  // self-consistent; P = R = 0 gives 0.
  if (pr.precision && pr.recall) {
    const double s = *pr.precision + *pr.recall;
    pr.f1 = s > 0.0 ? 2.0 * *pr.precision * *pr.recall / s : 0.0;
  }
  return pr;
}

Prf1 prf1(std::span<const ForecastPair> pairs, const Thresholds& thresholds) {
  Confusion abnormal;
  std::array<Confusion, 3> per_class{};
  for (const auto& p : pairs) {
    for (std::size_t k = 0; k < p.horizon(); ++k) {
      const GlycemicClass pc = classify(p.predicted()[k], thresholds);
      const GlycemicClass rc = classify(p.reference()[k], thresholds);
      const bool pp = pc != GlycemicClass::Normal;
      const bool rp = rc != GlycemicClass::Normal;
      if (pp && rp) ++abnormal.tp;
      else if (pp) ++abnormal.fp;
      else if (rp) ++abnormal.fn;
      else ++abnormal.tn;
      for (std::size_t c = 0; c < 3; ++c) {
        const bool pc_is = static_cast<std::size_t>(pc) == c;
        const bool rc_is = static_cast<std::size_t>(rc) == c;
        auto& cm = per_class[c];
        if (pc_is && rc_is) ++cm.tp;
        else if (pc_is) ++cm.fp;
        else if (rc_is) ++cm.fn;
        else ++cm.tn;
      }
    }
  }
  Prf1 out;
  out.abnormal = precision_recall(abnormal);
  for (std::size_t c = 0; c < 3; ++c) out.per_class[c] = precision_recall(per_class[c]);
  return out;
}

std::string_view to_string(ClarkeZone z) noexcept {
  static constexpr std::array<std::string_view, 5> names{"A", "B", "C", "D", "E"};
  return names[static_cast<std::size_t>(z)];
}

ClarkeZone clarke_zone(double x, double y) {
  // x = reference, y = prediction, both mg/dL. Checked in the order A, E, C, D;
  // anything left is B.
  if ((x <= 70.0 && y <= 70.0) || (y >= 0.8 * x && y <= 1.2 * x)) return ClarkeZone::A;
  if ((x >= 180.0 && y <= 70.0) || (x <= 70.0 && y >= 180.0)) return ClarkeZone::E;
  if ((x >= 70.0 && x <= 290.0 && y >= x + 110.0) ||
      (x >= 130.0 && x <= 180.0 && y <= 1.4 * x - 182.0))
    return ClarkeZone::C;
  if ((x >= 240.0 && y >= 70.0 && y <= 180.0) || (x <= 175.0 / 3.0 && y >= 70.0 && y <= 180.0) ||
      (x >= 175.0 / 3.0 && x <= 70.0 && y >= 1.2 * x))
    return ClarkeZone::D;
  return ClarkeZone::B;
}

ZoneSummary clarke_zones(std::span<const ForecastPair> pairs) {
  ZoneSummary s;
  for (const auto& p : pairs)
    for (std::size_t k = 0; k < p.horizon(); ++k) {
      const ClarkeZone z = clarke_zone(p.reference()[k], p.predicted()[k]);
      s.zones.push_back(z);
      ++s.counts[static_cast<std::size_t>(z)];
    }
  if (!s.zones.empty())
    for (std::size_t i = 0; i < 5; ++i)
      s.proportions[i] = static_cast<double>(s.counts[i]) / static_cast<double>(s.zones.size());
  return s;
}

EsodSummary esod_summary(std::span<const ForecastPair> pairs) {
  EsodSummary s;
  double sum = 0.0;
  for (const auto& p : pairs) {
    if (const auto e = esod_n(p)) {
      sum += *e;
      ++s.defined;
    } else {
      ++s.undefined;
    }
  }
  if (s.defined > 0) s.mean = sum / static_cast<double>(s.defined);
  return s;
}

FoldMetrics evaluate_fold(std::size_t fold, std::span<const ForecastPair> pairs,
                          const Thresholds& thresholds) {
  FoldMetrics m;
  m.fold = fold;
  m.n_examples = pairs.size();
  m.rmse = rmse(pairs);
  m.esod = esod_summary(pairs);
  m.prf1 = prf1(pairs, thresholds);
  m.zones = clarke_zones(pairs);
  m.zones.zones.clear();
  return m;
}

MeanSd mean_sd(std::span<const std::optional<double>> values) {
  MeanSd out;
  double sum = 0.0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++out.n;
    }
  if (out.n == 0) return out;
  const double mean = sum / static_cast<double>(out.n);
  double ss = 0.0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  out.mean = mean;
  out.sd = std::sqrt(ss / static_cast<double>(out.n));
  return out;
}

EvalReport evaluate(const std::string& model_name, std::span<const Forecaster* const> fold_models,
                    std::span<const PreparedSet> folds, const Thresholds& thresholds,
                    std::vector<std::vector<ForecastPair>>* pairs_out) {
  if (folds.empty()) fail(ErrorKind::InsufficientData, "evaluation needs at least one fold");
  if (fold_models.size() != folds.size())
    fail(ErrorKind::Config, "model '" + model_name + "' has " + std::to_string(fold_models.size()) +
                                " fold models for " + std::to_string(folds.size()) + " folds");
  EvalReport report;
  report.model = model_name;
  const auto& prov = folds.front().provenance;
  report.protocol = {prov.test_step, prov.cohort, prov.window.input_len, prov.window.horizon};
  if (pairs_out) pairs_out->clear();
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const Forecaster* model = fold_models[f];
    if (!model)
      fail(ErrorKind::Config, "missing " + model_name + " model for fold " +
                                  std::to_string(folds[f].provenance.fold));
    std::vector<ForecastPair> pairs;
    pairs.reserve(folds[f].test.size());
    for (const auto& ex : folds[f].test)
      pairs.emplace_back(model->forecast(ex.input, ex.target.size()), ex.target);
    if (pairs.empty())
      fail(ErrorKind::InsufficientData,
           "fold " + std::to_string(folds[f].provenance.fold) + " has no test examples");
    report.folds.push_back(evaluate_fold(folds[f].provenance.fold, pairs, thresholds));
    if (pairs_out) pairs_out->push_back(std::move(pairs));
  }
  aggregate(report);
  return report;
}

void aggregate(EvalReport& report) {
  std::vector<std::optional<double>> rmse_v, esod_v, p_v, r_v, f_v;
  double se = 0.0;
  std::size_t points = 0;
  report.total_examples = 0;
  for (const auto& f : report.folds) {
    rmse_v.emplace_back(f.rmse);
    esod_v.push_back(f.esod.mean);
    p_v.push_back(f.prf1.abnormal.precision);
    r_v.push_back(f.prf1.abnormal.recall);
    f_v.push_back(f.prf1.abnormal.f1);
    report.total_examples += f.n_examples;
    std::size_t n_points = 0;
    for (auto c : f.zones.counts) n_points += c;
    se += f.rmse * f.rmse * static_cast<double>(n_points);
    points += n_points;
  }
  report.rmse = mean_sd(rmse_v);
  report.esod = mean_sd(esod_v);
  report.precision = mean_sd(p_v);
  report.recall = mean_sd(r_v);
  report.f1 = mean_sd(f_v);
  report.pooled_rmse = points > 0 ? std::sqrt(se / static_cast<double>(points)) : 0.0;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json to_json(const MeanSd& m) {
  return {{"mean", opt(m.mean)}, {"sd", opt(m.sd)}, {"n_folds", m.n}};
}

nlohmann::json to_json(const PrecisionRecall& pr) {
  return {{"precision", opt(pr.precision)},
          {"recall", opt(pr.recall)},
          {"f1", opt(pr.f1)},
          {"tp", pr.counts.tp},
          {"fp", pr.counts.fp},
          {"fn", pr.counts.fn},
          {"tn", pr.counts.tn}};
}

}  // namespace

nlohmann::json to_json(const Prf1& p) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t c = 0; c < 3; ++c)
    per_class[std::string(to_string(static_cast<GlycemicClass>(c)))] = to_json(p.per_class[c]);
  return {{"abnormal", to_json(p.abnormal)}, {"per_class", per_class}};
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : report.folds) {
    nlohmann::json zones = nlohmann::json::object();
    for (std::size_t z = 0; z < 5; ++z)
      zones[std::string(to_string(static_cast<ClarkeZone>(z)))] = f.zones.proportions[z];
    folds.push_back({{"fold", f.fold},
                     {"n_examples", f.n_examples},
                     {"rmse_mgdl", f.rmse},
                     {"esod_n", opt(f.esod.mean)},
                     {"esod_defined", f.esod.defined},
                     {"esod_undefined", f.esod.undefined},
                     {"classification", to_json(f.prf1)},
                     {"zone_proportions", zones}});
  }
  return {
      {"model", report.model},
      {"protocol",
       {{"test_step", report.protocol.test_step},
        {"cohort", report.protocol.cohort},
        {"input_len", report.protocol.input_len},
        {"horizon", report.protocol.horizon}}},
      {"folds", folds},
      {"aggregate",
       {{"spread", "population s.d. across folds"},
        {"rmse_mgdl", to_json(report.rmse)},
        {"esod_n", to_json(report.esod)},
        {"precision", to_json(report.precision)},
        {"recall", to_json(report.recall)},
        {"f1", to_json(report.f1)},
        {"pooled_rmse_mgdl", report.pooled_rmse},
        {"total_examples", report.total_examples}}},
      {"error_grid", "Clarke zones A-E, used in place of the surveillance error grid"},
      {"positive_class", "hypo or hyper (strict thresholds, boundaries are normal)"},
  };
}

void write_flat_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << std::setprecision(12) << "model,fold,metric,value\n";
  auto row = [&](const std::string& model, const std::string& fold, std::string_view metric,
                 const std::optional<double>& v) {
    out << model << ',' << fold << ',' << metric << ',';
    if (v) out << *v;
    out << '\n';
  };
  for (const auto& r : reports) {
    for (const auto& f : r.folds) {
      const std::string fold = std::to_string(f.fold);
      row(r.model, fold, "rmse", f.rmse);
      row(r.model, fold, "esod_n", f.esod.mean);
      row(r.model, fold, "precision", f.prf1.abnormal.precision);
      row(r.model, fold, "recall", f.prf1.abnormal.recall);
      row(r.model, fold, "f1", f.prf1.abnormal.f1);
      for (std::size_t z = 0; z < 5; ++z)
        row(r.model, fold, "zone_" + std::string(to_string(static_cast<ClarkeZone>(z))),
            f.zones.proportions[z]);
    }
    for (const auto& [name, m] : {std::pair{"rmse", &r.rmse}, {"esod_n", &r.esod},
                                  {"precision", &r.precision}, {"recall", &r.recall},
                                  {"f1", &r.f1}}) {
      row(r.model, "mean", name, m->mean);
      row(r.model, "sd", name, m->sd);
    }
    row(r.model, "pooled", "rmse", r.pooled_rmse);
  }
}

void write_scatter_csv(std::ostream& out, std::span<const ForecastPair> pairs) {
  out << std::setprecision(12) << "reference,predicted\n";
  for (const auto& p : pairs)
    for (std::size_t k = 0; k < p.horizon(); ++k)
      out << p.reference()[k] << ',' << p.predicted()[k] << '\n';
}

}  // namespace glyco
