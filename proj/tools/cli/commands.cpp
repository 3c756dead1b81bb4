#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "config.hpp"
#include "glyco/baseline.hpp"
#include "glyco/clinical.hpp"
#include "glyco/error.hpp"
#include "glyco/eval.hpp"
#include "glyco/hmm.hpp"
#include "glyco/ingest.hpp"
#include "glyco/lstm.hpp"
#include "glyco/pipeline.hpp"
#include "glyco/rng.hpp"
#include "glyco/stats.hpp"
#include "outputs.hpp"

namespace glyco::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Numeric: return 4;
    default: return 3;
  }
}

namespace {

// ---------------------------------------------------------------- plumbing

/// Flag values only override the config when the flag was actually given.
class Overrides {
public:
  template <typename T, typename Apply>
  CLI::Option* add(CLI::App* app, const std::string& name, T& var, Apply apply,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(name, var, help);
    entries_.emplace_back(opt, [&var, apply](RunConfig& c) { apply(c, var); });
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& [opt, fn] : entries_)
      if (opt->count() > 0) fn(c);
  }

private:
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> entries_;
};

struct Invocation {
  std::string config_path;
  std::string out_dir;
  Overrides overrides;
  RunConfig config;
  std::optional<OutputDir> outputs;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  void resolve() {
    RunConfig c;
    apply_environment(c);
    if (!config_path.empty()) apply_config_file(c, config_path);
    overrides.apply(c);
    validate(c);
    config = c;
  }

  OutputDir& open_outputs() {
    if (!outputs) outputs.emplace(out_dir);
    return *outputs;
  }
};

struct Flags {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t k_folds = 0;
  std::size_t train_step = 0;
  std::size_t test_step = 0;
  std::string cohort;
  std::size_t epochs = 0;
  std::size_t batch = 0;
  double lr = 0.0;
  std::size_t hidden = 0;
  std::size_t layers = 0;
  std::string mode;
  std::size_t threads = 1;
  std::size_t heuristic_n = 0;
  std::size_t n_states = 0;
  std::size_t n_symbols = 0;
  std::size_t hmm_iter = 0;
  std::size_t gmm_k = 0;
  std::size_t n_init = 0;
  std::size_t gmm_iter = 0;
  std::vector<std::string> features;
  double tau = 0.0;
  double max_malformed = 0.0;
};

void add_common(CLI::App* app, Invocation& inv, Flags& f, bool with_out) {
  app->add_option("--config", inv.config_path, "JSON run configuration");
  inv.overrides.add(app, "--seed", f.seed, [](RunConfig& c, auto v) { c.seed = v; }, "Random seed");
  if (with_out) {
    app->add_option("--out", inv.out_dir, "Output directory")->required();
    inv.overrides.add(app, "--jobs", f.jobs, [](RunConfig& c, auto v) { c.jobs = v; },
                      "Folds processed in parallel");
  }
}

void add_window_flags(CLI::App* app, Invocation& inv, Flags& f) {
  inv.overrides.add(app, "--k-folds", f.k_folds, [](RunConfig& c, auto v) { c.k_folds = v; },
                    "Cross-validation folds");
  inv.overrides.add(app, "--train-step", f.train_step,
                    [](RunConfig& c, auto v) { c.train_step = v; }, "Training window step");
  inv.overrides.add(app, "--test-step", f.test_step,
                    [](RunConfig& c, auto v) { c.test_step = v; }, "Test window step");
}

void add_lstm_flags(CLI::App* app, Invocation& inv, Flags& f) {
  auto& o = inv.overrides;
  o.add(app, "--epochs", f.epochs, [](RunConfig& c, auto v) { c.lstm.epochs = v; }, "LSTM epochs");
  o.add(app, "--batch", f.batch, [](RunConfig& c, auto v) { c.lstm.batch = v; }, "LSTM batch size");
  o.add(app, "--lr", f.lr, [](RunConfig& c, auto v) { c.lstm.lr = v; }, "Adam learning rate");
  o.add(app, "--hidden", f.hidden, [](RunConfig& c, auto v) { c.lstm.hidden = v; }, "LSTM hidden size");
  o.add(app, "--layers", f.layers, [](RunConfig& c, auto v) { c.lstm.layers = v; }, "Stacked LSTM layers");
  o.add(app, "--train-mode", f.mode, [](RunConfig& c, const auto& v) { c.lstm.mode = v; },
        "recursive | teacher_forcing");
  o.add(app, "--threads", f.threads, [](RunConfig& c, auto v) { c.lstm.threads = v; },
        "Threads per LSTM batch");
  o.add(app, "--heuristic-n", f.heuristic_n,
        [](RunConfig& c, auto v) { c.lstm.heuristic_test_n = v; },
        "Test examples scored after each epoch");
}

void add_hmm_flags(CLI::App* app, Invocation& inv, Flags& f) {
  auto& o = inv.overrides;
  o.add(app, "--states", f.n_states, [](RunConfig& c, auto v) { c.hmm.n_states = v; }, "HMM hidden states");
  o.add(app, "--symbols", f.n_symbols, [](RunConfig& c, auto v) { c.hmm.n_symbols = v; },
        "HMM observation symbols (default: states)");
  o.add(app, "--hmm-iter", f.hmm_iter, [](RunConfig& c, auto v) { c.hmm.max_iter = v; },
        "Baum-Welch iteration cap");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string fold_file(std::size_t fold) { return "fold" + std::to_string(fold) + ".glyfprep"; }
std::string lstm_file(std::size_t fold) { return "lstm_fold" + std::to_string(fold) + ".glyflstm"; }
std::string hmm_file(std::size_t fold) { return "hmm_fold" + std::to_string(fold) + ".json"; }

std::vector<GlucoseReading> load_readings(const std::string& path, const RunConfig& c,
                                          ParseReport* report = nullptr) {
  auto parsed = parse_cgm_csv(fs::path(path), ParseOptions{c.max_malformed_fraction});
  if (report) *report = parsed.report;
  return std::move(parsed.readings);
}

std::vector<PatientRecord> load_patients(const std::string& path, const RunConfig& c,
                                         ParseReport* report = nullptr) {
  auto parsed = parse_patient_csv(fs::path(path), ParseOptions{c.max_malformed_fraction});
  if (report) *report = parsed.report;
  return std::move(parsed.patients);
}

json report_json(const ParseReport& r) {
  json rejected = json::array();
  for (std::size_t i = 0; i < r.rejected.size() && i < 100; ++i)
    rejected.push_back({{"line", r.rejected[i].line}, {"reason", r.rejected[i].reason}});
  return {{"data_rows", r.data_rows},
          {"accepted", r.accepted},
          {"duplicates_removed", r.duplicates_removed},
          {"rejected_count", r.rejected.size()},
          {"rejected", rejected}};
}

/// patient_id -> cohort label, from a `patient_id,cohort` CSV.
std::map<std::string, std::string> load_cohorts(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open cohort file " + path);
  std::string line;
  if (!std::getline(in, line) || (line != "patient_id,cohort" && line != "patient_id,cohort\r"))
    fail(ErrorKind::Format, path + ": expected header 'patient_id,cohort'");
  std::map<std::string, std::string> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == line.size() ||
        line.find(',', comma + 1) != std::string::npos)
      fail(ErrorKind::Format, path + ": malformed row at line " + std::to_string(n));
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  if (out.empty()) fail(ErrorKind::InsufficientData, path + " lists no patients");
  return out;
}

std::set<std::string> cohort_members(const std::map<std::string, std::string>& cohorts,
                                     const std::string& id) {
  std::set<std::string> out;
  for (const auto& [patient, cohort] : cohorts)
    if (cohort == id) out.insert(patient);
  if (out.empty()) fail(ErrorKind::Config, "cohort '" + id + "' has no patients");
  return out;
}

struct PreparedDir {
  json manifest;
  std::vector<PreparedSet> folds;
};

PreparedDir load_prepared_dir(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json");
  if (!in) fail(ErrorKind::Io, "cannot open " + (fs::path(dir) / "manifest.json").string());
  PreparedDir out;
  try {
    out.manifest = json::parse(in);
    for (const auto& f : out.manifest.at("folds"))
      out.folds.push_back(load_prepared(fs::path(dir) / f.at("file").get<std::string>()));
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "prepared manifest in " + dir + ": " + e.what());
  }
  if (out.folds.empty()) fail(ErrorKind::InsufficientData, "prepared directory has no folds");
  return out;
}

std::string lstm_provenance(const Provenance& p) {
  return json{{"fold", p.fold}, {"cohort", p.cohort}, {"train_step", p.train_step},
              {"test_step", p.test_step}, {"split_seed", p.seed}}
      .dump();
}

std::size_t long_count(std::span<const ContiguousSequence> seqs, std::size_t total) {
  return static_cast<std::size_t>(std::count_if(seqs.begin(), seqs.end(), [&](const auto& s) {
    return s.size() >= total;
  }));
}

std::size_t non_overlapping_windows(std::span<const ContiguousSequence> seqs, std::size_t total) {
  std::size_t n = 0;
  for (const auto& s : seqs) n += window_count(s.size(), total, total);
  return n;
}

/// Trains (or builds) one model on one prepared set.
std::unique_ptr<Forecaster> fit_model(const std::string& name, const PreparedSet& set,
                                      const RunConfig& c, std::size_t fold) {
  if (name == "copy_last") return std::make_unique<CopyLastForecaster>();
  if (name == "linreg") return std::make_unique<LinRegForecaster>();
  if (name == "lstm") {
    auto result = train(LstmNetwork::create(lstm_config(c, fold)), set, lstm_train_options(c, fold));
    return std::make_unique<LstmForecaster>(result.best());
  }
  if (name == "hmm") return std::make_unique<HmmForecaster>(train_hmm(set, hmm_options(c, fold)));
  fail(ErrorKind::Config, "unknown model '" + name + "' (expected copy_last, linreg, lstm or hmm)");
}

void check_model_name(const std::string& name) {
  static const std::set<std::string> known{"copy_last", "linreg", "lstm", "hmm"};
  if (!known.contains(name))
    fail(ErrorKind::Config, "unknown model '" + name + "' (expected copy_last, linreg, lstm or hmm)");
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::size_t patients = 20;
  std::size_t days = 30;
};

void cmd_synth(Invocation& inv, const SynthArgs& a) {
  const RunConfig& c = inv.config;
  const Corpus corpus = synth_corpus(a.patients, a.days, c.seed);
  auto& out = inv.open_outputs();
  out.write_with("cgm.csv", [&](std::ostream& s) { write_cgm_csv(s, corpus.readings); });
  out.write_with("patients.csv", [&](std::ostream& s) { write_patient_csv(s, corpus.patients); });
  out.write_json("synth_report.json", {{"config", to_json(c)},
                                       {"patients", a.patients},
                                       {"days", a.days},
                                       {"readings", corpus.readings.size()},
                                       {"glucose", to_json(corpus_stats(corpus))}});
  *inv.out << "synth: " << corpus.readings.size() << " readings for " << a.patients
           << " patients -> " << out.dir().string() << "\n";
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string cgm;
  std::string patients;
};

void cmd_ingest(Invocation& inv, const IngestArgs& a) {
  const RunConfig& c = inv.config;
  ParseReport cgm_report;
  const auto readings = load_readings(a.cgm, c, &cgm_report);
  std::optional<ParseReport> patient_report;
  std::vector<PatientRecord> patients;
  if (!a.patients.empty()) {
    patient_report.emplace();
    patients = load_patients(a.patients, c, &*patient_report);
  }
  const auto seqs = segment(readings, c.max_gap_s);
  auto& out = inv.open_outputs();
  out.write_with("cgm.csv", [&](std::ostream& s) { write_cgm_csv(s, readings); });
  if (patient_report)
    out.write_with("patients.csv", [&](std::ostream& s) { write_patient_csv(s, patients); });
  json report{{"config", to_json(c)},
              {"inputs", {{"cgm", a.cgm}, {"patients", a.patients}}},
              {"cgm", report_json(cgm_report)},
              {"glucose", to_json(corpus_stats(readings))},
              {"sequences",
               {{"count", seqs.size()},
                {"at_least_window", long_count(seqs, c.window.total())},
                {"non_overlapping_windows", non_overlapping_windows(seqs, c.window.total())}}}};
  if (patient_report) report["patients"] = report_json(*patient_report);
  out.write_json("ingest_report.json", report);
  *inv.out << "ingest: " << readings.size() << " readings accepted, "
           << cgm_report.rejected.size() << " rejected, " << cgm_report.duplicates_removed
           << " duplicates removed\n";
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
  std::string cgm;
  std::string patients;
};

const std::vector<std::string> kStatsFeatures{"age",  "weight_kg", "height_cm", "bmi",
                                              "hba1c", "annual_income_usd", "education_level"};

void cmd_stats(Invocation& inv, const StatsArgs& a, const std::vector<std::string>& feature_flag) {
  const RunConfig& c = inv.config;
  const auto readings = load_readings(a.cgm, c);
  const auto seqs = segment(readings, c.max_gap_s);
  const DailyProfile profile = daily_profile(readings);
  const LengthHistogram hist = sequence_length_histogram(seqs, c.window.total());

  json report{{"config", to_json(c)}, {"inputs", {{"cgm", a.cgm}, {"patients", a.patients}}}};
  report["glucose"] = to_json(corpus_stats(readings));
  report["daily_profile"] = {{"readings", profile.total_count()},
                             {"lowest_mean_slot", slot_label(profile.min_mean_slot())},
                             {"lowest_mean_mgdl", profile.bins[profile.min_mean_slot()].mean},
                             {"highest_mean_slot", slot_label(profile.max_mean_slot())},
                             {"highest_mean_mgdl", profile.bins[profile.max_mean_slot()].mean}};
  report["sequences"] = {{"count", hist.total},
                         {"at_least_window", hist.long_count},
                         {"at_least_window_fraction", hist.long_fraction},
                         {"window", c.window.total()},
                         {"non_overlapping_windows", non_overlapping_windows(seqs, c.window.total())}};

  if (!a.patients.empty()) {
    const auto patients = load_patients(a.patients, c);
    const auto& names = feature_flag.empty() ? kStatsFeatures : feature_flag;
    const FeatureMatrix raw = build_feature_matrix(patients, names);
    const FeatureMatrix z = zscore(raw);
    const Eigen::MatrixXd raw_cov = covariance_matrix(raw);
    json variances = json::object();
    for (std::size_t j = 0; j < raw.feature_names.size(); ++j)
      variances[raw.feature_names[j]] = raw_cov(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
    report["features"] = {{"names", raw.feature_names},
                          {"patients_used", raw.patient_ids.size()},
                          {"excluded_rows", raw.excluded_rows},
                          {"normalization", "z-score, population s.d."},
                          {"covariance_normalized", matrix_to_json(covariance_matrix(z))},
                          {"correlation", matrix_to_json(correlation_matrix(raw))},
                          {"raw_variances", variances},
                          {"variance_threshold",
                           {{"tau", c.variance_tau},
                            {"on", "raw variances"},
                            {"selected", variance_threshold(raw, c.variance_tau)}}}};
  }

  auto& out = inv.open_outputs();
  out.write_json("stats.json", report);
  out.write_with("daily_profile.csv", [&](std::ostream& s) { write_daily_profile_csv(s, profile); });
  out.write_with("length_histogram.csv", [&](std::ostream& s) {
    s << "length,count\n";
    for (const auto& [len, count] : hist.counts) s << len << ',' << count << '\n';
  });
  *inv.out << "stats: " << hist.total << " sequences, " << hist.long_count << " of length >= "
           << c.window.total() << "\n";
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string patients;
};

void cmd_cluster(Invocation& inv, const ClusterArgs& a) {
  const RunConfig& c = inv.config;
  const auto patients = load_patients(a.patients, c);
  const FeatureMatrix raw = build_feature_matrix(patients, c.gmm.features);
  const FeatureMatrix z = zscore(raw);
  const GmmModel model = gmm_fit(z.values, gmm_options(c));
  const auto labels = gmm_assign(model, z.values);

  std::vector<std::size_t> sizes(model.k(), 0);
  for (auto l : labels) ++sizes[l];
  json norm = json::object();
  for (std::size_t j = 0; j < raw.feature_names.size(); ++j) {
    const auto col = raw.values.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    norm[raw.feature_names[j]] = {{"mean", mean}, {"sd", sd}};
  }

  auto& out = inv.open_outputs();
  out.write_with("cohorts.csv", [&](std::ostream& s) {
    s << "patient_id,cohort\n";
    for (std::size_t i = 0; i < labels.size(); ++i)
      s << raw.patient_ids[i] << ',' << (labels[i] + 1) << '\n';
  });
  out.write_json("gmm.json", {{"config", to_json(c)},
                              {"inputs", {{"patients", a.patients}}},
                              {"features", raw.feature_names},
                              {"normalization", norm},
                              {"excluded_rows", raw.excluded_rows},
                              {"cohort_labels", "1-based component index"},
                              {"cohort_sizes", sizes},
                              {"model", to_json(model)}});
  *inv.out << "cluster: " << labels.size() << " patients in " << model.k() << " cohorts\n";
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string cgm;
  std::string cohorts;
};

void cmd_prepare(Invocation& inv, const PrepareArgs& a) {
  const RunConfig& c = inv.config;
  const auto readings = load_readings(a.cgm, c);
  auto seqs = segment(readings, c.max_gap_s);
  const std::size_t all_sequences = seqs.size();
  if (c.cohort != "all") {
    if (a.cohorts.empty())
      fail(ErrorKind::Config, "cohort '" + c.cohort + "' requested without --cohorts");
    seqs = filter_cohort(seqs, cohort_members(load_cohorts(a.cohorts), c.cohort));
  }
  const auto folds = kfold_split(seqs, c.k_folds, c.seed, c.window.total());

  PrepareOptions opts;
  opts.window = c.window;
  opts.train_step = c.train_step;
  opts.test_step = c.test_step;
  opts.cohort = c.cohort;

  auto& out = inv.open_outputs();
  json fold_docs = json::array();
  for (const auto& fold : folds) {
    const PreparedSet set = prepare(seqs, fold, opts);
    const std::string name = fold_file(fold.fold_index);
    save_prepared(set, out.path(name));
    out.record(name);
    fold_docs.push_back({{"fold", fold.fold_index},
                         {"file", name},
                         {"train_sequences", fold.train_sequence_ids.size()},
                         {"test_sequences", fold.test_sequence_ids.size()},
                         {"n_train", set.train.size()},
                         {"n_test", set.test.size()}});
  }
  out.write_json("manifest.json",
                 {{"config", to_json(c)},
                  {"inputs", {{"cgm", a.cgm}, {"cohorts", a.cohorts}}},
                  {"cohort", c.cohort},
                  {"sequences",
                   {{"segmented", all_sequences},
                    {"in_cohort", seqs.size()},
                    {"at_least_window", long_count(seqs, c.window.total())},
                    {"non_overlapping_windows", non_overlapping_windows(seqs, c.window.total())}}},
                  {"folds", fold_docs}});
  *inv.out << "prepare: " << folds.size() << " folds from " << seqs.size() << " sequences\n";
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string prepared;
  std::string model;
};

void cmd_train(Invocation& inv, const TrainArgs& a) {
  const RunConfig& c = inv.config;
  if (a.model != "lstm" && a.model != "hmm")
    fail(ErrorKind::Config, "train --model must be lstm or hmm, got '" + a.model + "'");
  const PreparedDir prepared = load_prepared_dir(a.prepared);
  auto& out = inv.open_outputs();
  const std::size_t n = prepared.folds.size();
  std::vector<json> docs(n);
  std::vector<std::string> files(n);
  std::vector<std::string> curves(n);

  for_each_fold(n, c.jobs, [&](std::size_t i) {
    const PreparedSet& set = prepared.folds[i];
    const std::size_t fold = set.provenance.fold;
    if (a.model == "lstm") {
      const auto result =
          train(LstmNetwork::create(lstm_config(c, fold)), set, lstm_train_options(c, fold));
      files[i] = lstm_file(fold);
      save_lstm(result.best(), out.path(files[i]), lstm_provenance(set.provenance));
      std::ostringstream curve;
      curve << std::setprecision(12);
      write_training_curve_csv(curve, result);
      curves[i] = curve.str();
      json epochs = json::array();
      for (const auto& e : result.curve)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_rmse_mgdl", e.train_rmse_mgdl},
                          {"heuristic_rmse_mgdl", e.heuristic_rmse_mgdl
                                                      ? json(*e.heuristic_rmse_mgdl)
                                                      : json(nullptr)}});
      docs[i] = {{"fold", fold},
                 {"file", files[i]},
                 {"n_train", set.train.size()},
                 {"best_epoch", result.best_epoch},
                 {"parameters", result.best().param_count()},
                 {"curve", epochs}};
    } else {
      const HmmForecaster model = train_hmm(set, hmm_options(c, fold));
      files[i] = hmm_file(fold);
      save_hmm(model.model(), model.quantizer(), out.path(files[i]));
      docs[i] = {{"fold", fold},
                 {"file", files[i]},
                 {"n_train", set.train.size()},
                 {"iterations", model.model().trained_iterations},
                 {"final_log_likelihood", model.model().final_log_likelihood}};
    }
  });

  for (std::size_t i = 0; i < n; ++i) {
    out.record(files[i]);
    if (a.model == "lstm") {
      const std::string name = "lstm_fold" + std::to_string(prepared.folds[i].provenance.fold) +
                               "_curve.csv";
      out.write(name, curves[i]);
      docs[i]["curve_csv"] = name;
    }
  }
  out.write_json("train_report.json", {{"config", to_json(c)},
                                                  {"inputs", {{"prepared", a.prepared}}},
                                                  {"prepared_config", prepared.manifest.value("config", json::object())},
                                                  {"model", a.model},
                                                  {"train_mode", c.lstm.mode},
                                                  {"folds", docs}});
  *inv.out << "train: " << a.model << " on " << n << " folds -> " << out.dir().string() << "\n";
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string prepared;
  std::string models = "copy_last,linreg";
  std::string models_dir;
  bool compare = false;
  std::string cgm;
  std::string cohorts;
  std::string model = "lstm";
  bool shared_split = false;
};

std::unique_ptr<Forecaster> load_fold_model(const std::string& name, const std::string& dir,
                                            std::size_t fold) {
  if (name == "copy_last") return std::make_unique<CopyLastForecaster>();
  if (name == "linreg") return std::make_unique<LinRegForecaster>();
  if (dir.empty())
    fail(ErrorKind::Config, "model '" + name + "' needs --models-dir with trained fold models");
  const fs::path p = fs::path(dir) / (name == "lstm" ? lstm_file(fold) : hmm_file(fold));
  if (!fs::exists(p))
    fail(ErrorKind::Config, "missing " + name + " model for fold " + std::to_string(fold) + " (" +
                                p.string() + ")");
  if (name == "lstm") return std::make_unique<LstmForecaster>(load_lstm(p));
  return std::make_unique<HmmForecaster>(load_hmm(p));
}

json summary_row(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"model", r.model},
          {"rmse_mean", opt(r.rmse.mean)},
          {"rmse_sd", opt(r.rmse.sd)},
          {"esod_mean", opt(r.esod.mean)},
          {"esod_sd", opt(r.esod.sd)},
          {"precision_mean", opt(r.precision.mean)},
          {"recall_mean", opt(r.recall.mean)},
          {"f1_mean", opt(r.f1.mean)},
          {"pooled_rmse", r.pooled_rmse},
          {"examples", r.total_examples}};
}

void cmd_evaluate(Invocation& inv, const EvaluateArgs& a) {
  const RunConfig& c = inv.config;
  const auto names = split_list(a.models);
  if (names.empty()) fail(ErrorKind::Config, "--models lists no models");
  for (const auto& n : names) check_model_name(n);
  const PreparedDir prepared = load_prepared_dir(a.prepared);
  const std::size_t n_folds = prepared.folds.size();

  std::vector<EvalReport> reports;
  std::vector<std::vector<ForecastPair>> scatter;
  for (const auto& name : names) {
    std::vector<std::unique_ptr<Forecaster>> owned(n_folds);
    for (std::size_t i = 0; i < n_folds; ++i)
      owned[i] = load_fold_model(name, a.models_dir, prepared.folds[i].provenance.fold);
    // Folds run in parallel; results are reassembled in fold order.
    std::vector<EvalReport> parts(n_folds);
    std::vector<std::vector<std::vector<ForecastPair>>> pairs(n_folds);
    for_each_fold(n_folds, c.jobs, [&](std::size_t i) {
      const Forecaster* m = owned[i].get();
      parts[i] = evaluate(name, std::span<const Forecaster* const>(&m, 1),
                          std::span<const PreparedSet>(&prepared.folds[i], 1), c.thresholds,
                          &pairs[i]);
    });
    EvalReport report = parts.front();
    report.folds.clear();
    std::vector<ForecastPair> all_pairs;
    for (std::size_t i = 0; i < n_folds; ++i) {
      report.folds.push_back(parts[i].folds.front());
      for (auto& p : pairs[i].front()) all_pairs.push_back(std::move(p));
    }
    aggregate(report);
    reports.push_back(std::move(report));
    scatter.push_back(std::move(all_pairs));
  }

  json fold_defs = json::array();
  for (const auto& f : prepared.folds)
    fold_defs.push_back({{"fold", f.provenance.fold},
                         {"cohort", f.provenance.cohort},
                         {"n_train", f.train.size()},
                         {"n_test", f.test.size()},
                         {"train_step", f.provenance.train_step},
                         {"test_step", f.provenance.test_step}});
  json models = json::array(), table = json::array();
  for (const auto& r : reports) {
    models.push_back(to_json(r));
    table.push_back(summary_row(r));
  }

  auto& out = inv.open_outputs();
  out.write_json("eval_report.json",
                 {{"config", to_json(c)},
                  {"inputs", {{"prepared", a.prepared}, {"models_dir", a.models_dir}}},
                  {"prepared_config", prepared.manifest.value("config", json::object())},
                  {"folds", fold_defs},
                  {"summary", table},
                  {"models", models}});
  out.write_with("eval_metrics.csv", [&](std::ostream& s) { write_flat_csv(s, reports); });
  for (std::size_t i = 0; i < reports.size(); ++i)
    out.write_with("scatter_" + reports[i].model + ".csv",
                   [&](std::ostream& s) { write_scatter_csv(s, scatter[i]); });

  for (const auto& r : reports)
    *inv.out << "evaluate: " << r.model << " rmse " << r.rmse.mean.value_or(0.0) << " (sd "
             << r.rmse.sd.value_or(0.0) << ") over " << r.folds.size() << " folds\n";
}

/// Generalised model versus one model per cohort, each scored on every
/// cohort's test set and on the generalised test set.
void cmd_compare_cohorts(Invocation& inv, const EvaluateArgs& a) {
  const RunConfig& c = inv.config;
  check_model_name(a.model);
  if (a.cgm.empty() || a.cohorts.empty())
    fail(ErrorKind::Config, "--compare-cohorts needs --cgm and --cohorts");
  const auto cohort_map = load_cohorts(a.cohorts);
  std::set<std::string> ids;
  for (const auto& [p, id] : cohort_map) ids.insert(id);
  const std::vector<std::string> cohort_ids(ids.begin(), ids.end());

  const auto seqs = segment(load_readings(a.cgm, c), c.max_gap_s);
  const std::size_t total = c.window.total();
  const auto global = kfold_split(seqs, c.k_folds, c.seed, total);

  // Per cohort: its sequences, their global ids, and per-fold splits.
  struct Cohort {
    std::vector<ContiguousSequence> seqs;
    std::vector<std::size_t> global_ids;
    std::vector<FoldSplit> folds;
  };
  std::vector<Cohort> cohorts(cohort_ids.size());
  for (std::size_t ci = 0; ci < cohort_ids.size(); ++ci) {
    auto& co = cohorts[ci];
    for (std::size_t g = 0; g < seqs.size(); ++g) {
      const auto it = cohort_map.find(seqs[g].patient_id());
      if (it != cohort_map.end() && it->second == cohort_ids[ci]) {
        co.seqs.push_back(seqs[g]);
        co.global_ids.push_back(g);
      }
    }
    if (a.shared_split) {
      std::map<std::size_t, std::size_t> local;
      for (std::size_t l = 0; l < co.global_ids.size(); ++l) local[co.global_ids[l]] = l;
      for (const auto& gf : global) {
        FoldSplit f;
        f.fold_index = gf.fold_index;
        f.seed = gf.seed;
        for (auto g : gf.train_sequence_ids)
          if (local.contains(g)) f.train_sequence_ids.push_back(local[g]);
        for (auto g : gf.test_sequence_ids)
          if (local.contains(g)) f.test_sequence_ids.push_back(local[g]);
        co.folds.push_back(std::move(f));
      }
    } else {
      co.folds = kfold_split(co.seqs, c.k_folds, derive_seed(c.seed, ci + 1), total);
    }
  }

  // Rows: models (generalised first), columns: test sets (cohorts, then all).
  const std::size_t n_models = 1 + cohort_ids.size();
  const std::size_t n_tests = cohort_ids.size() + 1;
  const std::size_t k = c.k_folds;
  std::vector<std::vector<std::vector<std::optional<double>>>> rmse_by_fold(
      k, std::vector<std::vector<std::optional<double>>>(n_models,
                                                         std::vector<std::optional<double>>(n_tests)));
  std::vector<std::size_t> contaminated(k, 0), cohort_test_total(k, 0);

  for_each_fold(k, c.jobs, [&](std::size_t f) {
    PrepareOptions opts;
    opts.window = c.window;
    opts.train_step = c.train_step;
    opts.test_step = c.test_step;
    std::vector<PreparedSet> sets;
    sets.reserve(n_tests);
    for (std::size_t ci = 0; ci < cohort_ids.size(); ++ci) {
      opts.cohort = cohort_ids[ci];
      sets.push_back(prepare(cohorts[ci].seqs, cohorts[ci].folds[f], opts));
    }
    opts.cohort = "all";
    sets.push_back(prepare(seqs, global[f], opts));

    const std::set<std::size_t> global_train(global[f].train_sequence_ids.begin(),
                                             global[f].train_sequence_ids.end());
    for (std::size_t ci = 0; ci < cohort_ids.size(); ++ci)
      for (auto l : cohorts[ci].folds[f].test_sequence_ids) {
        ++cohort_test_total[f];
        if (global_train.contains(cohorts[ci].global_ids[l])) ++contaminated[f];
      }

    std::vector<std::unique_ptr<Forecaster>> models;
    models.push_back(fit_model(a.model, sets.back(), c, f));
    for (std::size_t ci = 0; ci < cohort_ids.size(); ++ci)
      models.push_back(fit_model(a.model, sets[ci], c, f));
    for (std::size_t m = 0; m < n_models; ++m)
      for (std::size_t t = 0; t < n_tests; ++t) {
        if (sets[t].test.empty()) continue;
        std::vector<ForecastPair> pairs;
        for (const auto& ex : sets[t].test)
          pairs.emplace_back(models[m]->forecast(ex.input, ex.target.size()), ex.target);
        rmse_by_fold[f][m][t] = rmse(pairs);
      }
  });

  std::size_t leaked = 0, checked = 0;
  for (std::size_t f = 0; f < k; ++f) {
    leaked += contaminated[f];
    checked += cohort_test_total[f];
  }
  *inv.err << "warning: cohort comparison: " << leaked << " of " << checked
           << " cohort test sequences were also in the generalised model's training folds"
           << (a.shared_split ? "" : " (cohort folds are split independently; use --shared-split to avoid this)")
           << "; generalised scores on cohort test sets may be optimistic\n";

  auto label_model = [&](std::size_t m) { return m == 0 ? std::string("all") : "cohort_" + cohort_ids[m - 1]; };
  auto label_test = [&](std::size_t t) {
    return t == cohort_ids.size() ? std::string("all") : "cohort_" + cohort_ids[t];
  };
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  auto opt_array = [&](const std::vector<std::optional<double>>& vs) {
    json a = json::array();
    for (const auto& v : vs) a.push_back(opt(v));
    return a;
  };

  json matrix = json::array();
  std::ostringstream csv;
  csv << std::setprecision(12) << "model,test_set,rmse_mean,rmse_sd,folds\n";
  for (std::size_t m = 0; m < n_models; ++m)
    for (std::size_t t = 0; t < n_tests; ++t) {
      std::vector<std::optional<double>> vals;
      for (std::size_t f = 0; f < k; ++f) vals.push_back(rmse_by_fold[f][m][t]);
      const MeanSd ms = mean_sd(vals);
      matrix.push_back({{"model", label_model(m)},
                        {"test_set", label_test(t)},
                        {"rmse_mean", opt(ms.mean)},
                        {"rmse_sd", opt(ms.sd)},
                        {"per_fold", opt_array(vals)}});
      csv << label_model(m) << ',' << label_test(t) << ',';
      if (ms.mean) csv << *ms.mean;
      csv << ',';
      if (ms.sd) csv << *ms.sd;
      csv << ',' << ms.n << '\n';
    }
  json deltas = json::array();
  for (std::size_t ci = 0; ci < cohort_ids.size(); ++ci) {
    std::vector<std::optional<double>> d;
    for (std::size_t f = 0; f < k; ++f) {
      const auto& g = rmse_by_fold[f][0][ci];
      const auto& own = rmse_by_fold[f][ci + 1][ci];
      d.push_back(g && own ? std::optional<double>(*g - *own) : std::nullopt);
    }
    const MeanSd ms = mean_sd(d);
    deltas.push_back({{"cohort", cohort_ids[ci]}, {"delta_mean", opt(ms.mean)}, {"delta_sd", opt(ms.sd)}});
    csv << "delta,cohort_" << cohort_ids[ci] << ',';
    if (ms.mean) csv << *ms.mean;
    csv << ',';
    if (ms.sd) csv << *ms.sd;
    csv << ',' << ms.n << '\n';
  }

  auto& out = inv.open_outputs();
  out.write_json("cohort_comparison.json",
                 {{"config", to_json(c)},
                  {"inputs", {{"cgm", a.cgm}, {"cohorts", a.cohorts}}},
                  {"model", a.model},
                  {"split", a.shared_split ? "shared" : "independent per cohort"},
                  {"delta_definition", "generalised RMSE minus cohort-model RMSE on that cohort's test set"},
                  {"contamination", {{"shared_sequences", leaked}, {"cohort_test_sequences", checked}}},
                  {"rmse", matrix},
                  {"delta", deltas}});
  out.write("cohort_comparison.csv", csv.str());
  *inv.out << "evaluate: cohort comparison for " << a.model << " over " << cohort_ids.size()
           << " cohorts\n";
}

// ---------------------------------------------------------------- explain

struct ExplainArgs {
  std::string model;
  std::string prepared;
  std::size_t example = 0;
};

void cmd_explain(Invocation& inv, const ExplainArgs& a) {
  const RunConfig& c = inv.config;
  const LstmNetwork net = load_lstm(a.model);
  const PreparedSet set = load_prepared(a.prepared);
  if (a.example >= set.test.size())
    fail(ErrorKind::Config, "example " + std::to_string(a.example) + " out of range; fold has " +
                                std::to_string(set.test.size()) + " test examples");
  const Example& ex = set.test[a.example];
  const Rollout r = rollout(net, ex.input, ex.target.size(), true);
  const ForgetTrace& trace = *r.trace;

  auto& out = inv.open_outputs();
  out.write_with("forget_trace.csv", [&](std::ostream& s) {
    s << std::setprecision(12);
    write_forget_trace_csv(s, trace);
  });
  out.write_json("explain.json", {{"config", to_json(c)},
                                  {"inputs", {{"model", a.model}, {"prepared", a.prepared}}},
                                  {"example",
                                   {{"index", a.example},
                                    {"fold", set.provenance.fold},
                                    {"source_sequence_id", ex.source_sequence_id},
                                    {"offset", ex.offset}}},
                                  {"trace_shape", {trace.n_layers, trace.n_steps, trace.hidden}},
                                  {"observed_steps", ex.input.size()},
                                  {"predictions_mgdl", r.predictions},
                                  {"reference_mgdl", ex.target}});
  *inv.out << "explain: forget trace " << trace.n_layers << "x" << trace.n_steps << "x"
           << trace.hidden << " -> " << out.path("forget_trace.csv").string() << "\n";
}

// ---------------------------------------------------------------- bolus

struct BolusArgs {
  double cho = 0.0;
  double cr = 0.0;
  double gc = 0.0;
  double gt = 0.0;
  double cf = 0.0;
  double ps = 1.0;
  double iob = 0.0;
  bool mmol = false;
  bool json_out = false;
};

void cmd_bolus(Invocation& inv, const BolusArgs& a) {
  BolusInputs in{a.cho, a.cr, a.gc, a.gt, a.cf, a.ps, a.iob};
  if (a.mmol) {
    // Glucose terms and the correction factor given per mmol/L.
    in.g_c = mmoll_to_mgdl(a.gc);
    in.g_t = mmoll_to_mgdl(a.gt);
    in.cf = mmoll_to_mgdl(a.cf);
  }
  const BolusResult r = bolus(in);
  if (a.json_out) {
    *inv.out << json{{"units", r.units}, {"no_bolus_needed", r.no_bolus_needed}}.dump() << "\n";
    return;
  }
  *inv.out << "bolus_units: " << r.units << "\n";
  if (r.no_bolus_needed) *inv.out << "advisory: no bolus needed (formula is negative)\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Glucose forecasting pipeline: ingest, prepare, train, evaluate, explain", "glyco"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Invocation inv;
  inv.out = &out;
  inv.err = &err;
  Flags f;
  std::function<void()> action;
  std::vector<std::pair<CLI::App*, std::function<void()>>> subs;
  auto& ov = inv.overrides;

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic CGM corpus");
  add_common(s_synth, inv, f, true);
  s_synth->add_option("--patients", synth.patients, "Patients")->capture_default_str();
  s_synth->add_option("--days", synth.days, "Days per patient")->capture_default_str();
  subs.emplace_back(s_synth, [&] { cmd_synth(inv, synth); });

  IngestArgs ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Validate and normalise CGM and patient CSVs");
  add_common(s_ingest, inv, f, true);
  s_ingest->add_option("--cgm", ingest.cgm, "CGM CSV")->required();
  s_ingest->add_option("--patients", ingest.patients, "Patient CSV");
  ov.add(s_ingest, "--max-malformed", f.max_malformed,
         [](RunConfig& c, auto v) { c.max_malformed_fraction = v; }, "Tolerated malformed-row fraction");
  subs.emplace_back(s_ingest, [&] { cmd_ingest(inv, ingest); });

  StatsArgs stats;
  std::string stats_features;
  auto* s_stats = app.add_subcommand("stats", "Corpus statistics and patient-feature analysis");
  add_common(s_stats, inv, f, true);
  s_stats->add_option("--cgm", stats.cgm, "CGM CSV")->required();
  s_stats->add_option("--patients", stats.patients, "Patient CSV");
  s_stats->add_option("--features", stats_features, "Comma-separated patient features");
  ov.add(s_stats, "--tau", f.tau, [](RunConfig& c, auto v) { c.variance_tau = v; },
         "Variance threshold");
  subs.emplace_back(s_stats, [&] { cmd_stats(inv, stats, split_list(stats_features)); });

  ClusterArgs cluster;
  std::string cluster_features;
  auto* s_cluster = app.add_subcommand("cluster", "GMM clustering of patients into cohorts");
  add_common(s_cluster, inv, f, true);
  s_cluster->add_option("--patients", cluster.patients, "Patient CSV")->required();
  ov.add(s_cluster, "--features", cluster_features,
         [](RunConfig& c, const auto& v) { c.gmm.features = split_list(v); },
         "Comma-separated clustering features");
  ov.add(s_cluster, "--k", f.gmm_k, [](RunConfig& c, auto v) { c.gmm.k = v; }, "Components");
  ov.add(s_cluster, "--n-init", f.n_init, [](RunConfig& c, auto v) { c.gmm.n_init = v; },
         "Random initialisations");
  ov.add(s_cluster, "--max-iter", f.gmm_iter, [](RunConfig& c, auto v) { c.gmm.max_iter = v; },
         "EM iterations per initialisation");
  subs.emplace_back(s_cluster, [&] { cmd_cluster(inv, cluster); });

  PrepareArgs prep;
  auto* s_prep = app.add_subcommand("prepare", "Segment, split into folds and window");
  add_common(s_prep, inv, f, true);
  add_window_flags(s_prep, inv, f);
  s_prep->add_option("--cgm", prep.cgm, "CGM CSV")->required();
  s_prep->add_option("--cohorts", prep.cohorts, "Cohort CSV from `cluster`");
  ov.add(s_prep, "--cohort", f.cohort, [](RunConfig& c, const auto& v) { c.cohort = v; },
         "all, or a cohort label");
  subs.emplace_back(s_prep, [&] { cmd_prepare(inv, prep); });

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train one model per fold");
  add_common(s_train, inv, f, true);
  add_lstm_flags(s_train, inv, f);
  add_hmm_flags(s_train, inv, f);
  s_train->add_option("--prepared", tr.prepared, "Directory written by `prepare`")->required();
  s_train->add_option("--model", tr.model, "lstm | hmm")->required();
  subs.emplace_back(s_train, [&] { cmd_train(inv, tr); });

  EvaluateArgs ev;
  auto* s_eval = app.add_subcommand("evaluate", "Score models on each fold's test set");
  add_common(s_eval, inv, f, true);
  add_window_flags(s_eval, inv, f);
  add_lstm_flags(s_eval, inv, f);
  add_hmm_flags(s_eval, inv, f);
  s_eval->add_option("--prepared", ev.prepared, "Directory written by `prepare`");
  s_eval->add_option("--models", ev.models, "Comma-separated: copy_last,linreg,lstm,hmm")
      ->capture_default_str();
  s_eval->add_option("--models-dir", ev.models_dir, "Directory written by `train`");
  s_eval->add_flag("--compare-cohorts", ev.compare,
                   "Generalised versus per-cohort models (trains internally)");
  s_eval->add_option("--cgm", ev.cgm, "CGM CSV (cohort comparison)");
  s_eval->add_option("--cohorts", ev.cohorts, "Cohort CSV (cohort comparison)");
  s_eval->add_option("--model", ev.model, "Model for the cohort comparison")->capture_default_str();
  s_eval->add_flag("--shared-split", ev.shared_split,
                   "Restrict the generalised folds to each cohort instead of splitting anew");
  subs.emplace_back(s_eval, [&] {
    if (ev.compare) {
      cmd_compare_cohorts(inv, ev);
    } else {
      if (ev.prepared.empty()) fail(ErrorKind::Config, "evaluate needs --prepared");
      cmd_evaluate(inv, ev);
    }
  });

  ExplainArgs ex;
  auto* s_explain = app.add_subcommand("explain", "Forget-gate trace for one test example");
  add_common(s_explain, inv, f, true);
  s_explain->add_option("--model", ex.model, "LSTM model file")->required();
  s_explain->add_option("--prepared", ex.prepared, "Prepared fold file")->required();
  s_explain->add_option("--example", ex.example, "Test example index")->capture_default_str();
  subs.emplace_back(s_explain, [&] { cmd_explain(inv, ex); });

  BolusArgs bo;
  auto* s_bolus = app.add_subcommand("bolus", "Insulin bolus from carbs, glucose and IOB");
  add_common(s_bolus, inv, f, false);
  s_bolus->add_option("--cho", bo.cho, "Carbohydrate, g")->required();
  s_bolus->add_option("--cr", bo.cr, "Carb ratio, g per unit")->required();
  s_bolus->add_option("--gc", bo.gc, "Current glucose")->required();
  s_bolus->add_option("--gt", bo.gt, "Target glucose")->required();
  s_bolus->add_option("--cf", bo.cf, "Correction factor, glucose per unit")->required();
  s_bolus->add_option("--ps", bo.ps, "IOB scaling")->capture_default_str();
  s_bolus->add_option("--iob", bo.iob, "Insulin on board, units")->capture_default_str();
  s_bolus->add_flag("--mmol", bo.mmol, "Glucose terms and correction factor in mmol/L");
  s_bolus->add_flag("--json", bo.json_out, "Print a JSON object");
  subs.emplace_back(s_bolus, [&] { cmd_bolus(inv, bo); });

  auto error_line = [&](std::string_view kind, const std::string& message) {
    std::string m = message;
    std::replace(m.begin(), m.end(), '\n', ' ');
    std::string escaped;
    for (char ch : m) {
      if (ch == '"' || ch == '\\') escaped.push_back('\\');
      escaped.push_back(ch);
    }
    err << "error: kind=" << kind << " message=\"" << escaped << "\"\n";
  };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    error_line(to_string(ErrorKind::Config), e.what());
    return exit_code(ErrorKind::Config);
  }

  try {
    inv.resolve();
    for (auto& [sub, fn] : subs)
      if (sub->parsed()) fn();
    return 0;
  } catch (const Error& e) {
    if (inv.outputs) inv.outputs->rollback();
    error_line(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    if (inv.outputs) inv.outputs->rollback();
    error_line(to_string(ErrorKind::Io), e.what());
    return exit_code(ErrorKind::Io);
  } catch (const std::exception& e) {
    if (inv.outputs) inv.outputs->rollback();
    error_line("internal", e.what());
    return 3;
  }
}

}  // namespace glyco::cli
