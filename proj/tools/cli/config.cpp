#include "config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <set>

#include "glyco/error.hpp"

namespace glyco::cli {

using nlohmann::json;

json to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"k_folds", c.k_folds},
      {"window",
       {{"total", c.window.total()}, {"input", c.window.input_len}, {"horizon", c.window.horizon}}},
      {"max_gap_s", c.max_gap_s},
      {"train_step", c.train_step},
      {"test_step", c.test_step},
      {"lstm",
       {{"hidden", c.lstm.hidden},
        {"layers", c.lstm.layers},
        {"epochs", c.lstm.epochs},
        {"batch", c.lstm.batch},
        {"lr", c.lstm.lr},
        {"heuristic_test_n", c.lstm.heuristic_test_n},
        {"clip_norm", c.lstm.clip_norm},
        {"mode", c.lstm.mode},
        {"threads", c.lstm.threads}}},
      {"hmm",
       {{"n_states", c.hmm.n_states},
        {"n_symbols", c.hmm.symbols()},
        {"max_iter", c.hmm.max_iter},
        {"tol", c.hmm.tol}}},
      {"gmm",
       {{"k", c.gmm.k},
        {"n_init", c.gmm.n_init},
        {"max_iter", c.gmm.max_iter},
        {"tol", c.gmm.tol},
        {"features", c.gmm.features}}},
      {"thresholds", {{"hypo", c.thresholds.hypo}, {"hyper", c.thresholds.hyper}}},
      {"cohort", c.cohort},
      {"variance_tau", c.variance_tau},
      {"max_malformed_fraction", c.max_malformed_fraction},
      {"jobs", c.jobs},
  };
}

namespace {

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(ErrorKind::Config, "config " + where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.contains(key))
      fail(ErrorKind::Config, "unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
}

template <typename T>
void take(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void apply_json(RunConfig& c, const json& doc) {
  check_keys(doc, "",
             {"seed", "k_folds", "window", "max_gap_s", "train_step", "test_step", "lstm", "hmm",
              "gmm", "thresholds", "cohort", "variance_tau", "max_malformed_fraction", "jobs"});
  take(doc, "seed", c.seed);
  take(doc, "k_folds", c.k_folds);
  take(doc, "max_gap_s", c.max_gap_s);
  take(doc, "train_step", c.train_step);
  take(doc, "test_step", c.test_step);
  take(doc, "cohort", c.cohort);
  take(doc, "variance_tau", c.variance_tau);
  take(doc, "max_malformed_fraction", c.max_malformed_fraction);
  take(doc, "jobs", c.jobs);
  if (doc.contains("window")) {
    const auto& w = doc["window"];
    check_keys(w, "window", {"total", "input", "horizon"});
    take(w, "input", c.window.input_len);
    take(w, "horizon", c.window.horizon);
    if (w.contains("total")) {
      std::size_t total = 0;
      take(w, "total", total);
      if (total != c.window.total())
        fail(ErrorKind::Config, "window.total must equal window.input + window.horizon");
    }
  }
  if (doc.contains("lstm")) {
    const auto& l = doc["lstm"];
    check_keys(l, "lstm",
               {"hidden", "layers", "epochs", "batch", "lr", "heuristic_test_n", "clip_norm",
                "mode", "threads"});
    take(l, "hidden", c.lstm.hidden);
    take(l, "layers", c.lstm.layers);
    take(l, "epochs", c.lstm.epochs);
    take(l, "batch", c.lstm.batch);
    take(l, "lr", c.lstm.lr);
    take(l, "heuristic_test_n", c.lstm.heuristic_test_n);
    take(l, "clip_norm", c.lstm.clip_norm);
    take(l, "mode", c.lstm.mode);
    take(l, "threads", c.lstm.threads);
  }
  if (doc.contains("hmm")) {
    const auto& h = doc["hmm"];
    check_keys(h, "hmm", {"n_states", "n_symbols", "max_iter", "tol"});
    take(h, "n_states", c.hmm.n_states);
    if (h.contains("n_symbols")) {
      std::size_t m = 0;
      take(h, "n_symbols", m);
      c.hmm.n_symbols = m;
    }
    take(h, "max_iter", c.hmm.max_iter);
    take(h, "tol", c.hmm.tol);
  }
  if (doc.contains("gmm")) {
    const auto& g = doc["gmm"];
    check_keys(g, "gmm", {"k", "n_init", "max_iter", "tol", "features"});
    take(g, "k", c.gmm.k);
    take(g, "n_init", c.gmm.n_init);
    take(g, "max_iter", c.gmm.max_iter);
    take(g, "tol", c.gmm.tol);
    take(g, "features", c.gmm.features);
  }
  if (doc.contains("thresholds")) {
    const auto& t = doc["thresholds"];
    check_keys(t, "thresholds", {"hypo", "hyper"});
    take(t, "hypo", c.thresholds.hypo);
    take(t, "hyper", c.thresholds.hyper);
  }
}

void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config file " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_json(c, doc);
}

void apply_environment(RunConfig& c) {
  const char* s = std::getenv("GLYCO_SEED");
  if (!s || !*s) return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (errno != 0 || *end != '\0' || *s == '-')
    fail(ErrorKind::Config, std::string("GLYCO_SEED is not a non-negative integer: ") + s);
  c.seed = v;
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorKind::Config, what);
  };
  need(c.k_folds >= 2, "k_folds must be at least 2");
  need(c.window.input_len >= 1 && c.window.horizon >= 1, "window input and horizon must be positive");
  need(c.max_gap_s > 0, "max_gap_s must be positive");
  need(c.train_step >= 1 && c.test_step >= 1, "window steps must be positive");
  need(c.lstm.hidden >= 1 && c.lstm.layers >= 1, "lstm hidden size and layers must be positive");
  need(c.lstm.epochs >= 1 && c.lstm.batch >= 1, "lstm epochs and batch must be positive");
  need(c.lstm.lr > 0.0, "lstm lr must be positive");
  need(c.lstm.mode == "recursive" || c.lstm.mode == "teacher_forcing",
       "lstm mode must be 'recursive' or 'teacher_forcing'");
  need(c.lstm.threads >= 1, "lstm threads must be positive");
  need(c.hmm.n_states >= 1 && c.hmm.symbols() >= 1, "hmm sizes must be positive");
  need(c.gmm.k >= 1 && c.gmm.n_init >= 1 && c.gmm.max_iter >= 1, "gmm sizes must be positive");
  need(!c.gmm.features.empty(), "gmm features must not be empty");
  need(c.thresholds.hypo < c.thresholds.hyper, "thresholds.hypo must be below thresholds.hyper");
  need(c.max_malformed_fraction >= 0.0 && c.max_malformed_fraction <= 1.0,
       "max_malformed_fraction must lie in [0, 1]");
  need(c.jobs >= 1, "jobs must be positive");
}

TrainMode train_mode(const RunConfig& c) {
  return c.lstm.mode == "teacher_forcing" ? TrainMode::TeacherForcing : TrainMode::Recursive;
}

std::uint64_t fold_seed(const RunConfig& c, std::size_t fold) { return c.seed + fold; }

TrainOptions lstm_train_options(const RunConfig& c, std::size_t fold) {
  TrainOptions o;
  o.epochs = c.lstm.epochs;
  o.batch = c.lstm.batch;
  o.lr = c.lstm.lr;
  o.heuristic_test_n = c.lstm.heuristic_test_n;
  o.seed = fold_seed(c, fold);
  o.clip_norm = c.lstm.clip_norm;
  o.mode = train_mode(c);
  o.threads = c.lstm.threads;
  return o;
}

LstmConfig lstm_config(const RunConfig& c, std::size_t fold) {
  LstmConfig l;
  l.hidden_size = c.lstm.hidden;
  l.n_layers = c.lstm.layers;
  l.seed = fold_seed(c, fold);
  return l;
}

BaumWelchOptions hmm_options(const RunConfig& c, std::size_t fold) {
  BaumWelchOptions o;
  o.n_states = c.hmm.n_states;
  o.n_symbols = c.hmm.symbols();
  o.max_iter = c.hmm.max_iter;
  o.tol = c.hmm.tol;
  o.seed = fold_seed(c, fold);
  return o;
}

GmmOptions gmm_options(const RunConfig& c) {
  GmmOptions o;
  o.k = c.gmm.k;
  o.n_init = c.gmm.n_init;
  o.max_iter = c.gmm.max_iter;
  o.tol = c.gmm.tol;
  o.seed = c.seed;
  return o;
}

}  // namespace glyco::cli
