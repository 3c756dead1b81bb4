#include "glyco/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"
#include "glyco/error.hpp"
#include "glyco/pipeline.hpp"
#include "glyco/rng.hpp"

namespace glyco {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, std::size_t n) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

/// Floors a probability row and renormalises it, writing natural logs.
void floor_row(std::span<const double> probs, double floor, std::span<double> log_out) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0)
      fail(ErrorKind::InvalidValue, "probabilities must be finite and non-negative");
    sum += std::max(p, floor);
  }
  if (!(sum > 0.0)) fail(ErrorKind::InvalidValue, "probability row sums to zero");
  for (std::size_t i = 0; i < probs.size(); ++i)
    log_out[i] = std::log(std::max(probs[i], floor) / sum);
}

void check_symbols(std::span<const std::size_t> symbols, std::size_t n_symbols) {
  for (std::size_t s : symbols)
    if (s >= n_symbols)
      fail(ErrorKind::InvalidValue, "observation symbol " + std::to_string(s) +
                                        " out of range for " + std::to_string(n_symbols) +
                                        " symbols");
}

std::vector<double> exp_all(const std::vector<double>& logs) {
  std::vector<double> out(logs.size());
  std::transform(logs.begin(), logs.end(), out.begin(), [](double v) { return std::exp(v); });
  return out;
}

/// alpha[t * N + i]
std::vector<double> forward_pass(const HmmModel& m, std::span<const std::size_t> obs) {
  const std::size_t n = m.n_states();
  const std::size_t t_len = obs.size();
  std::vector<double> alpha(t_len * n);
  std::vector<double> scratch(n);
  for (std::size_t i = 0; i < n; ++i) alpha[i] = m.log_initial(i) + m.log_emission(i, obs[0]);
  for (std::size_t t = 1; t < t_len; ++t) {
    const double* prev = &alpha[(t - 1) * n];
    double* cur = &alpha[t * n];
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) scratch[i] = prev[i] + m.log_transition(i, j);
      cur[j] = log_sum_exp(scratch.data(), n) + m.log_emission(j, obs[t]);
    }
  }
  return alpha;
}

/// beta[t * N + i]
std::vector<double> backward_pass(const HmmModel& m, std::span<const std::size_t> obs) {
  const std::size_t n = m.n_states();
  const std::size_t t_len = obs.size();
  std::vector<double> beta(t_len * n, 0.0);
  std::vector<double> scratch(n);
  for (std::size_t t = t_len - 1; t-- > 0;) {
    const double* next = &beta[(t + 1) * n];
    double* cur = &beta[t * n];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        scratch[j] = m.log_transition(i, j) + m.log_emission(j, obs[t + 1]) + next[j];
      cur[i] = log_sum_exp(scratch.data(), n);
    }
  }
  return beta;
}

struct Accumulators {
  std::vector<double> initial, transition, emission;
  double log_likelihood = 0.0;
};

Accumulators expectation(const HmmModel& m,
                         const std::vector<std::vector<std::size_t>>& sequences) {
  const std::size_t n = m.n_states();
  const std::size_t ms = m.n_symbols();
  Accumulators acc;
  acc.initial.assign(n, 0.0);
  acc.transition.assign(n * n, 0.0);
  acc.emission.assign(n * ms, 0.0);
  for (const auto& obs : sequences) {
    const auto alpha = forward_pass(m, obs);
    const auto beta = backward_pass(m, obs);
    const std::size_t t_len = obs.size();
    const double ll = log_sum_exp(&alpha[(t_len - 1) * n], n);
    if (!std::isfinite(ll)) fail(ErrorKind::Numeric, "sequence has zero likelihood under the HMM");
    acc.log_likelihood += ll;
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = std::exp(alpha[t * n + i] + beta[t * n + i] - ll);
        if (t == 0) acc.initial[i] += g;
        acc.emission[i * ms + obs[t]] += g;
      }
      if (t + 1 == t_len) continue;
      for (std::size_t i = 0; i < n; ++i) {
        const double a = alpha[t * n + i] - ll;
        for (std::size_t j = 0; j < n; ++j)
          acc.transition[i * n + j] += std::exp(a + m.log_transition(i, j) +
                                                m.log_emission(j, obs[t + 1]) +
                                                beta[(t + 1) * n + j]);
      }
    }
  }
  return acc;
}

std::vector<double> random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += out[r * cols + c] = rng.uniform(0.1, 1.0);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= sum;
  }
  return out;
}

/// Rows with no expected mass fall back to uniform before flooring.
std::vector<double> normalise_counts(std::vector<double> counts, std::size_t cols) {
  for (std::size_t r = 0; r * cols < counts.size(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += counts[r * cols + c];
    for (std::size_t c = 0; c < cols; ++c)
      counts[r * cols + c] = sum > 0.0 ? counts[r * cols + c] / sum : 1.0 / static_cast<double>(cols);
  }
  return counts;
}

}  // namespace

Quantizer::Quantizer(std::size_t n_symbols, double lo, double hi)
    : n_symbols_(n_symbols), lo_(lo), hi_(hi) {
  if (n_symbols_ < 1) fail(ErrorKind::InvalidValue, "quantizer needs at least one symbol");
  if (!std::isfinite(lo_) || !std::isfinite(hi_) || !(lo_ < hi_))
    fail(ErrorKind::InvalidValue, "quantizer bounds must satisfy lo < hi");
}

Quantizer Quantizer::fit(std::span<const double> values, std::size_t n_symbols) {
  if (values.empty()) fail(ErrorKind::InsufficientData, "quantizer fit needs values");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  double lo = *mn, hi = *mx;
  if (!(lo < hi)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return Quantizer(n_symbols, lo, hi);
}

std::size_t Quantizer::encode(double mgdl) const noexcept {
  if (!(mgdl > lo_)) return 0;
  if (mgdl >= hi_) return n_symbols_ - 1;
  const auto bin = static_cast<std::size_t>((mgdl - lo_) / bin_width());
  return std::min(bin, n_symbols_ - 1);
}

std::vector<std::size_t> Quantizer::encode(std::span<const double> mgdl) const {
  std::vector<std::size_t> out(mgdl.size());
  std::transform(mgdl.begin(), mgdl.end(), out.begin(), [this](double v) { return encode(v); });
  return out;
}

double Quantizer::decode(std::size_t symbol) const {
  if (symbol >= n_symbols_) fail(ErrorKind::InvalidValue, "symbol out of range for quantizer");
  return lo_ + (static_cast<double>(symbol) + 0.5) * bin_width();
}

std::vector<double> Quantizer::edges() const {
  std::vector<double> e(n_symbols_ + 1);
  for (std::size_t i = 0; i <= n_symbols_; ++i) e[i] = lo_ + static_cast<double>(i) * bin_width();
  e.back() = hi_;
  return e;
}

HmmModel HmmModel::from_probabilities(std::span<const double> initial,
                                      std::span<const double> transition,
                                      std::span<const double> emission, std::size_t n_states,
                                      std::size_t n_symbols, double floor) {
  if (n_states < 1 || n_symbols < 1)
    fail(ErrorKind::Shape, "HMM needs at least one state and one symbol");
  if (initial.size() != n_states || transition.size() != n_states * n_states ||
      emission.size() != n_states * n_symbols)
    fail(ErrorKind::Shape, "HMM parameter sizes do not match N=" + std::to_string(n_states) +
                               ", M=" + std::to_string(n_symbols));
  HmmModel m;
  m.n_states_ = n_states;
  m.n_symbols_ = n_symbols;
  m.log_initial_.resize(n_states);
  m.log_transition_.resize(n_states * n_states);
  m.log_emission_.resize(n_states * n_symbols);
  floor_row(initial, floor, m.log_initial_);
  for (std::size_t i = 0; i < n_states; ++i) {
    floor_row(transition.subspan(i * n_states, n_states), floor,
              std::span<double>(m.log_transition_).subspan(i * n_states, n_states));
    floor_row(emission.subspan(i * n_symbols, n_symbols), floor,
              std::span<double>(m.log_emission_).subspan(i * n_symbols, n_symbols));
  }
  return m;
}

std::vector<double> HmmModel::initial() const { return exp_all(log_initial_); }
std::vector<double> HmmModel::transition() const { return exp_all(log_transition_); }
std::vector<double> HmmModel::emission() const { return exp_all(log_emission_); }

HmmModel baum_welch_from(HmmModel model, const std::vector<std::vector<std::size_t>>& sequences,
                         std::size_t max_iter, double tol, double floor) {
  if (sequences.empty()) fail(ErrorKind::InsufficientData, "Baum-Welch needs training sequences");
  for (const auto& s : sequences) {
    if (s.empty()) fail(ErrorKind::InsufficientData, "Baum-Welch got an empty sequence");
    check_symbols(s, model.n_symbols());
  }
  const std::size_t n = model.n_states();
  const std::size_t ms = model.n_symbols();
  model.history.clear();
  model.trained_iterations = 0;

  Accumulators acc = expectation(model, sequences);
  double ll = acc.log_likelihood;
  model.history.push_back(ll);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const auto pi = normalise_counts(acc.initial, n);
    const auto a = normalise_counts(acc.transition, n);
    const auto b = normalise_counts(acc.emission, ms);
    HmmModel next = HmmModel::from_probabilities(pi, a, b, n, ms, floor);
    model.log_initial_ = std::move(next.log_initial_);
    model.log_transition_ = std::move(next.log_transition_);
    model.log_emission_ = std::move(next.log_emission_);
    ++model.trained_iterations;

    acc = expectation(model, sequences);
    const double gain = acc.log_likelihood - ll;
    ll = acc.log_likelihood;
    model.history.push_back(ll);
    if (gain < tol) break;
  }
  model.final_log_likelihood = ll;
  return model;
}

HmmModel baum_welch(const std::vector<std::vector<std::size_t>>& sequences,
                    const BaumWelchOptions& options) {
  if (options.n_states < 1 || options.n_symbols < 1)
    fail(ErrorKind::Config, "Baum-Welch needs at least one state and one symbol");
  Rng rng(options.seed);
  const auto pi = random_rows(rng, 1, options.n_states);
  const auto a = random_rows(rng, options.n_states, options.n_states);
  const auto b = random_rows(rng, options.n_states, options.n_symbols);
  HmmModel start =
      HmmModel::from_probabilities(pi, a, b, options.n_states, options.n_symbols, options.floor);
  return baum_welch_from(std::move(start), sequences, options.max_iter, options.tol, options.floor);
}

double forward_log_likelihood(const HmmModel& model, std::span<const std::size_t> symbols) {
  if (symbols.empty()) fail(ErrorKind::InsufficientData, "empty observation sequence");
  check_symbols(symbols, model.n_symbols());
  const auto alpha = forward_pass(model, symbols);
  return log_sum_exp(&alpha[(symbols.size() - 1) * model.n_states()], model.n_states());
}

double backward_log_likelihood(const HmmModel& model, std::span<const std::size_t> symbols) {
  if (symbols.empty()) fail(ErrorKind::InsufficientData, "empty observation sequence");
  check_symbols(symbols, model.n_symbols());
  const auto beta = backward_pass(model, symbols);
  std::vector<double> terms(model.n_states());
  for (std::size_t i = 0; i < model.n_states(); ++i)
    terms[i] = model.log_initial(i) + model.log_emission(i, symbols[0]) + beta[i];
  return log_sum_exp(terms.data(), terms.size());
}

ViterbiPath viterbi(const HmmModel& model, std::span<const std::size_t> symbols) {
  if (symbols.empty()) fail(ErrorKind::InsufficientData, "Viterbi needs a non-empty sequence");
  check_symbols(symbols, model.n_symbols());
  const std::size_t n = model.n_states();
  const std::size_t t_len = symbols.size();
  std::vector<double> delta(n), next(n);
  std::vector<std::size_t> back(t_len * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    delta[i] = model.log_initial(i) + model.log_emission(i, symbols[0]);
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t arg = 0;
      double best = delta[0] + model.log_transition(0, j);
      for (std::size_t i = 1; i < n; ++i) {
        const double v = delta[i] + model.log_transition(i, j);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      next[j] = best + model.log_emission(j, symbols[t]);
      back[t * n + j] = arg;
    }
    std::swap(delta, next);
  }
  ViterbiPath path;
  path.states.resize(t_len);
  std::size_t last = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (delta[i] > delta[last]) last = i;
  path.log_probability = delta[last];
  path.states[t_len - 1] = last;
  for (std::size_t t = t_len - 1; t > 0; --t) path.states[t - 1] = back[t * n + path.states[t]];
  return path;
}

std::vector<double> hmm_forecast(const HmmModel& model, const Quantizer& quantizer,
                                 std::span<const double> input, std::size_t horizon) {
  if (model.n_symbols() != quantizer.n_symbols())
    fail(ErrorKind::Shape, "HMM has " + std::to_string(model.n_symbols()) +
                               " symbols but the quantizer has " +
                               std::to_string(quantizer.n_symbols()));
  const auto symbols = quantizer.encode(input);
  std::size_t state = viterbi(model, symbols).states.back();
  const std::size_t n = model.n_states();
  const std::size_t ms = model.n_symbols();
  std::vector<double> out;
  out.reserve(horizon);
  for (std::size_t h = 0; h < horizon; ++h) {
    std::size_t next = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (model.log_transition(state, j) > model.log_transition(state, next)) next = j;
    state = next;
    std::size_t symbol = 0;
    for (std::size_t m = 1; m < ms; ++m)
      if (model.log_emission(state, m) > model.log_emission(state, symbol)) symbol = m;
    out.push_back(quantizer.decode(symbol));
  }
  return out;
}

HmmForecaster train_hmm(const PreparedSet& prepared, const BaumWelchOptions& options) {
  if (prepared.train.empty()) fail(ErrorKind::InsufficientData, "HMM training set is empty");
  std::vector<double> values;
  for (const auto& ex : prepared.train) {
    values.insert(values.end(), ex.input.begin(), ex.input.end());
    values.insert(values.end(), ex.target.begin(), ex.target.end());
  }
  const Quantizer quantizer = Quantizer::fit(values, options.n_symbols);
  std::vector<std::vector<std::size_t>> sequences;
  sequences.reserve(prepared.train.size());
  for (const auto& ex : prepared.train) {
    auto symbols = quantizer.encode(ex.input);
    const auto tail = quantizer.encode(ex.target);
    symbols.insert(symbols.end(), tail.begin(), tail.end());
    sequences.push_back(std::move(symbols));
  }
  return HmmForecaster(baum_welch(sequences, options), quantizer);
}

nlohmann::json hmm_to_json(const HmmModel& model, const Quantizer& quantizer) {
  return {{"format", "glyco-hmm"},
          {"version", 1},
          {"n_states", model.n_states()},
          {"n_symbols", model.n_symbols()},
          {"quantizer", {{"n_symbols", quantizer.n_symbols()}, {"lo", quantizer.lo()}, {"hi", quantizer.hi()}}},
          {"initial", model.initial()},
          {"transition", model.transition()},
          {"emission", model.emission()},
          {"trained_iterations", model.trained_iterations},
          {"final_log_likelihood", model.final_log_likelihood}};
}

HmmForecaster hmm_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "glyco-hmm")
      fail(ErrorKind::Format, "not an HMM model document");
    if (doc.at("version").get<int>() != 1) fail(ErrorKind::Format, "unsupported HMM model version");
    const auto n = doc.at("n_states").get<std::size_t>();
    const auto ms = doc.at("n_symbols").get<std::size_t>();
    const auto& q = doc.at("quantizer");
    Quantizer quantizer(q.at("n_symbols").get<std::size_t>(), q.at("lo").get<double>(),
                        q.at("hi").get<double>());
    // Stored rows are already floored; a zero floor only renormalises.
    HmmModel model = HmmModel::from_probabilities(
        doc.at("initial").get<std::vector<double>>(), doc.at("transition").get<std::vector<double>>(),
        doc.at("emission").get<std::vector<double>>(), n, ms, 0.0);
    model.trained_iterations = doc.at("trained_iterations").get<std::size_t>();
    model.final_log_likelihood = doc.at("final_log_likelihood").get<double>();
    return HmmForecaster(std::move(model), quantizer);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("HMM model document: ") + e.what());
  }
}

void save_hmm(const HmmModel& model, const Quantizer& quantizer,
              const std::filesystem::path& path) {
  detail::write_file_atomic(path, hmm_to_json(model, quantizer).dump(1) + "\n");
}

HmmForecaster load_hmm(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return hmm_from_json(doc);
}

}  // namespace glyco
