#include "glyco/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "glyco/error.hpp"
#include "glyco/pipeline.hpp"
#include "glyco/rng.hpp"

namespace glyco {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One exp instead of libm tanh, which is several times slower here.
inline double fast_tanh(double x) { return 1.0 - 2.0 / (std::exp(2.0 * x) + 1.0); }

/// Pre-activations a = W_in x + b_in + W_h h_prev + b_h, activated in place
/// into gates (i, f, g, o), then c and h.
void cell_kernel(const LstmLayer& L, const double* x, const double* h_prev, const double* c_prev,
                 double* gates, double* c, double* tanh_c, double* h) {
  const std::size_t d = L.input_size;
  const std::size_t hs = L.hidden_size;
  const std::size_t rows = 4 * hs;
  for (std::size_t r = 0; r < rows; ++r) {
    double a = L.b_input[r] + L.b_hidden[r];
    const double* wi = &L.w_input[r * d];
    for (std::size_t k = 0; k < d; ++k) a += wi[k] * x[k];
    const double* wh = &L.w_hidden[r * hs];
    for (std::size_t k = 0; k < hs; ++k) a += wh[k] * h_prev[k];
    gates[r] = a;
  }
  for (std::size_t u = 0; u < hs; ++u) {
    const double i = sigmoid(gates[u]);
    const double f = sigmoid(gates[hs + u]);
    const double g = fast_tanh(gates[2 * hs + u]);
    const double o = sigmoid(gates[3 * hs + u]);
    gates[u] = i;
    gates[hs + u] = f;
    gates[2 * hs + u] = g;
    gates[3 * hs + u] = o;
    c[u] = f * c_prev[u] + i * g;
    tanh_c[u] = fast_tanh(c[u]);
    h[u] = o * tanh_c[u];
  }
}

void check_layer(const LstmLayer& L) {
  const std::size_t rows = 4 * L.hidden_size;
  if (L.hidden_size == 0 || L.input_size == 0 || L.w_input.size() != rows * L.input_size ||
      L.w_hidden.size() != rows * L.hidden_size || L.b_input.size() != rows ||
      L.b_hidden.size() != rows)
    fail(ErrorKind::Shape, "LSTM layer tensors do not match its declared sizes");
}

void check_network(const LstmNetwork& net) {
  const auto& layers = net.params.layers;
  if (layers.empty()) fail(ErrorKind::Shape, "LSTM network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    check_layer(layers[l]);
    if (l > 0 && layers[l].input_size != layers[l - 1].hidden_size)
      fail(ErrorKind::Shape, "LSTM layer " + std::to_string(l) + " input size mismatch");
  }
  if (layers.front().input_size != 1)
    fail(ErrorKind::Shape, "recursive rollout needs a scalar-input first layer");
  if (net.params.head_weights.size() != layers.back().hidden_size)
    fail(ErrorKind::Shape, "LSTM head size does not match the last layer");
}

/// Activations of one layer over an unrolled run.
struct LayerTape {
  std::vector<double> x;       // steps x d
  std::vector<double> h;       // (steps + 1) x h, row 0 is the initial state
  std::vector<double> c;       // (steps + 1) x h
  std::vector<double> gates;   // steps x 4h, activated
  std::vector<double> tanh_c;  // steps x h
};

struct Unrolled {
  std::vector<LayerTape> layers;
  std::vector<double> predictions;  // scaled
  std::size_t steps = 0;
};

/// Runs the stack over `inputs` (scaled) and then `horizon - 1` further steps
/// fed either by the previous prediction or, in teacher forcing, by the
/// scaled targets.
Unrolled unroll(const LstmNetwork& net, std::span<const double> inputs, std::size_t horizon,
                TrainMode mode, std::span<const double> targets, ForgetTrace* trace) {
  const auto& layers = net.params.layers;
  const std::size_t n_in = inputs.size();
  Unrolled u;
  u.steps = n_in + horizon - 1;
  u.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t d = layers[l].input_size;
    const std::size_t hs = layers[l].hidden_size;
    auto& t = u.layers[l];
    t.x.assign(u.steps * d, 0.0);
    t.h.assign((u.steps + 1) * hs, 0.0);
    t.c.assign((u.steps + 1) * hs, 0.0);
    t.gates.assign(u.steps * 4 * hs, 0.0);
    t.tanh_c.assign(u.steps * hs, 0.0);
  }
  if (trace) {
    const std::size_t hs = layers.front().hidden_size;
    trace->n_layers = layers.size();
    trace->n_steps = u.steps;
    trace->hidden = hs;
    trace->values.assign(layers.size() * u.steps * hs, 0.0);
    trace->phases.assign(u.steps, StepPhase::Observed);
  }
  u.predictions.reserve(horizon);
  const auto& head = net.params.head_weights;
  for (std::size_t s = 0; s < u.steps; ++s) {
    double x0 = 0.0;
    if (s < n_in) {
      x0 = inputs[s];
    } else {
      x0 = mode == TrainMode::Recursive ? u.predictions[s - n_in] : targets[s - n_in];
      if (trace) trace->phases[s] = StepPhase::Recursive;
    }
    u.layers[0].x[s] = x0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::size_t hs = L.hidden_size;
      auto& t = u.layers[l];
      if (l > 0) {
        const auto& below = u.layers[l - 1];
        std::copy_n(&below.h[(s + 1) * layers[l - 1].hidden_size], L.input_size, &t.x[s * L.input_size]);
      }
      cell_kernel(L, &t.x[s * L.input_size], &t.h[s * hs], &t.c[s * hs], &t.gates[s * 4 * hs],
                  &t.c[(s + 1) * hs], &t.tanh_c[s * hs], &t.h[(s + 1) * hs]);
      if (trace && hs == trace->hidden)
        std::copy_n(&t.gates[s * 4 * hs + hs], hs, &trace->values[(l * u.steps + s) * hs]);
    }
    if (s + 1 >= n_in) {
      const auto& top = u.layers.back();
      const std::size_t hs = layers.back().hidden_size;
      double y = net.params.head_bias;
      for (std::size_t k = 0; k < hs; ++k) y += head[k] * top.h[(s + 1) * hs + k];
      if (!std::isfinite(y))
        fail(ErrorKind::Numeric, "non-finite LSTM output at step " + std::to_string(s));
      u.predictions.push_back(y);
    }
  }
  return u;
}

/// Accumulates gradients of the scaled-space MSE into `grad`; returns the loss.
double backprop_example(const LstmNetwork& net, std::span<const double> input_mgdl,
                        std::span<const double> target_mgdl, TrainMode mode, LstmParams& grad) {
  const std::size_t n_in = input_mgdl.size();
  const std::size_t horizon = target_mgdl.size();
  if (n_in == 0 || horizon == 0) fail(ErrorKind::Shape, "example needs input and target values");
  std::vector<double> x(n_in), y(horizon);
  for (std::size_t i = 0; i < n_in; ++i) x[i] = net.scaler.scale(input_mgdl[i]);
  for (std::size_t i = 0; i < horizon; ++i) y[i] = net.scaler.scale(target_mgdl[i]);

  const Unrolled u = unroll(net, x, horizon, mode, y, nullptr);
  const auto& layers = net.params.layers;
  const std::size_t n_layers = layers.size();

  double loss = 0.0;
  std::vector<double> dpred(horizon);
  for (std::size_t k = 0; k < horizon; ++k) {
    const double r = u.predictions[k] - y[k];
    loss += r * r;
    dpred[k] = 2.0 * r / static_cast<double>(horizon);
  }
  loss /= static_cast<double>(horizon);

  // Carried recurrent gradients per layer.
  std::vector<std::vector<double>> dh_next(n_layers), dc_next(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    dh_next[l].assign(layers[l].hidden_size, 0.0);
    dc_next[l].assign(layers[l].hidden_size, 0.0);
  }
  std::vector<double> dh_in, da, dx;
  const std::size_t top_hs = layers.back().hidden_size;

  for (std::size_t s = u.steps; s-- > 0;) {
    // Gradient entering the top layer's hidden output at this step.
    dh_in.assign(top_hs, 0.0);
    if (s + 1 >= n_in) {
      const std::size_t k = s + 1 - n_in;
      const double g = dpred[k];
      const double* h_top = &u.layers.back().h[(s + 1) * top_hs];
      for (std::size_t j = 0; j < top_hs; ++j) {
        grad.head_weights[j] += g * h_top[j];
        dh_in[j] = g * net.params.head_weights[j];
      }
      grad.head_bias += g;
    }
    for (std::size_t l = n_layers; l-- > 0;) {
      const auto& L = layers[l];
      auto& G = grad.layers[l];
      const auto& t = u.layers[l];
      const std::size_t hs = L.hidden_size;
      const std::size_t d = L.input_size;
      const double* gates = &t.gates[s * 4 * hs];
      const double* c_prev = &t.c[s * hs];
      const double* tc = &t.tanh_c[s * hs];
      const double* xs = &t.x[s * d];
      const double* h_prev = &t.h[s * hs];
      da.assign(4 * hs, 0.0);
      for (std::size_t j = 0; j < hs; ++j) {
        const double i = gates[j], f = gates[hs + j], g = gates[2 * hs + j], o = gates[3 * hs + j];
        const double dh = dh_in[j] + dh_next[l][j];
        const double dc = dc_next[l][j] + dh * o * (1.0 - tc[j] * tc[j]);
        da[j] = dc * g * i * (1.0 - i);
        da[hs + j] = dc * c_prev[j] * f * (1.0 - f);
        da[2 * hs + j] = dc * i * (1.0 - g * g);
        da[3 * hs + j] = dh * tc[j] * o * (1.0 - o);
        dc_next[l][j] = dc * f;
      }
      dx.assign(d, 0.0);
      std::fill(dh_next[l].begin(), dh_next[l].end(), 0.0);
      for (std::size_t r = 0; r < 4 * hs; ++r) {
        const double a = da[r];
        if (a == 0.0) continue;
        G.b_input[r] += a;
        G.b_hidden[r] += a;
        double* gwi = &G.w_input[r * d];
        const double* wi = &L.w_input[r * d];
        for (std::size_t k = 0; k < d; ++k) {
          gwi[k] += a * xs[k];
          dx[k] += a * wi[k];
        }
        double* gwh = &G.w_hidden[r * hs];
        const double* wh = &L.w_hidden[r * hs];
        for (std::size_t k = 0; k < hs; ++k) {
          gwh[k] += a * h_prev[k];
          dh_next[l][k] += a * wh[k];
        }
      }
      if (l > 0) {
        dh_in = dx;
      } else if (mode == TrainMode::Recursive && s >= n_in) {
        // This step's input was prediction s - n_in.
        dpred[s - n_in] += dx[0];
      }
    }
  }
  return loss;
}

std::vector<double> uniform_vector(Rng& rng, std::size_t n, double bound) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

}  // namespace

LstmLayer LstmLayer::zeros(std::size_t input_size, std::size_t hidden_size) {
  LstmLayer L;
  L.input_size = input_size;
  L.hidden_size = hidden_size;
  L.w_input.assign(4 * hidden_size * input_size, 0.0);
  L.w_hidden.assign(4 * hidden_size * hidden_size, 0.0);
  L.b_input.assign(4 * hidden_size, 0.0);
  L.b_hidden.assign(4 * hidden_size, 0.0);
  return L;
}

std::size_t LstmLayer::param_count() const noexcept {
  return w_input.size() + w_hidden.size() + b_input.size() + b_hidden.size();
}

std::size_t LstmParams::param_count() const noexcept {
  std::size_t n = head_weights.size() + 1;
  for (const auto& L : layers) n += L.param_count();
  return n;
}

std::vector<double> LstmParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const auto& L : layers)
    for (const auto* t : {&L.w_input, &L.w_hidden, &L.b_input, &L.b_hidden})
      flat.insert(flat.end(), t->begin(), t->end());
  flat.insert(flat.end(), head_weights.begin(), head_weights.end());
  flat.push_back(head_bias);
  return flat;
}

void LstmParams::assign(std::span<const double> flat) {
  if (flat.size() != param_count())
    fail(ErrorKind::Shape, "parameter vector has " + std::to_string(flat.size()) +
                               " entries, network needs " + std::to_string(param_count()));
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& t) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t.size(), t.begin());
    pos += t.size();
  };
  for (auto& L : layers)
    for (auto* t : {&L.w_input, &L.w_hidden, &L.b_input, &L.b_hidden}) take(*t);
  take(head_weights);
  head_bias = flat[pos];
}

LstmParams LstmParams::zeros_like() const {
  LstmParams z;
  for (const auto& L : layers) z.layers.push_back(LstmLayer::zeros(L.input_size, L.hidden_size));
  z.head_weights.assign(head_weights.size(), 0.0);
  return z;
}

std::size_t lstm_param_count(std::size_t input_size, std::size_t hidden_size,
                             std::size_t n_layers) {
  std::size_t n = hidden_size + 1;
  std::size_t d = input_size;
  for (std::size_t l = 0; l < n_layers; ++l) {
    n += 4 * hidden_size * d + 4 * hidden_size * hidden_size + 8 * hidden_size;
    d = hidden_size;
  }
  return n;
}

LstmNetwork LstmNetwork::zeros(const LstmConfig& config) {
  if (config.hidden_size == 0 || config.input_size == 0)
    fail(ErrorKind::Config, "LSTM sizes must be positive");
  LstmNetwork net;
  net.scaler = config.scaler;
  net.seed = config.seed;
  std::size_t d = config.input_size;
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    net.params.layers.push_back(LstmLayer::zeros(d, config.hidden_size));
    d = config.hidden_size;
  }
  net.params.head_weights.assign(config.hidden_size, 0.0);
  return net;
}

LstmNetwork LstmNetwork::create(const LstmConfig& config) {
  LstmNetwork net = zeros(config);
  Rng rng(config.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  for (auto& L : net.params.layers) {
    L.w_input = uniform_vector(rng, L.w_input.size(), bound);
    L.w_hidden = uniform_vector(rng, L.w_hidden.size(), bound);
    L.b_input = uniform_vector(rng, L.b_input.size(), bound);
    L.b_hidden = uniform_vector(rng, L.b_hidden.size(), bound);
  }
  net.params.head_weights = uniform_vector(rng, config.hidden_size, bound);
  net.params.head_bias = rng.uniform(-bound, bound);
  return net;
}

std::size_t LstmNetwork::hidden_size() const noexcept {
  return params.head_weights.size();
}

CellOutput cell_forward(const LstmLayer& layer, std::span<const double> x,
                        std::span<const double> h_prev, std::span<const double> c_prev) {
  check_layer(layer);
  const std::size_t hs = layer.hidden_size;
  if (x.size() != layer.input_size || h_prev.size() != hs || c_prev.size() != hs)
    fail(ErrorKind::Shape, "cell_forward argument sizes do not match the layer");
  std::vector<double> gates(4 * hs), tanh_c(hs);
  CellOutput out;
  out.h.resize(hs);
  out.c.resize(hs);
  cell_kernel(layer, x.data(), h_prev.data(), c_prev.data(), gates.data(), out.c.data(),
              tanh_c.data(), out.h.data());
  auto block = [&](std::size_t b) {
    return std::vector<double>(gates.begin() + static_cast<std::ptrdiff_t>(b * hs),
                               gates.begin() + static_cast<std::ptrdiff_t>((b + 1) * hs));
  };
  out.gates = {block(0), block(1), block(2), block(3)};
  return out;
}

Rollout rollout(const LstmNetwork& net, std::span<const double> input_mgdl, std::size_t horizon,
                bool trace) {
  check_network(net);
  if (input_mgdl.empty()) fail(ErrorKind::InvalidValue, "rollout needs at least one input");
  if (horizon == 0) fail(ErrorKind::InvalidValue, "rollout horizon must be positive");
  std::vector<double> x(input_mgdl.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(input_mgdl[i]))
      fail(ErrorKind::Numeric, "non-finite LSTM input at step " + std::to_string(i));
    x[i] = net.scaler.scale(input_mgdl[i]);
  }
  Rollout r;
  ForgetTrace ft;
  Unrolled u = unroll(net, x, horizon, TrainMode::Recursive, {}, trace ? &ft : nullptr);
  r.predictions.resize(horizon);
  for (std::size_t k = 0; k < horizon; ++k) r.predictions[k] = net.scaler.unscale(u.predictions[k]);
  if (trace) r.trace = std::move(ft);
  return r;
}

LossAndGradients loss_and_gradients(const LstmNetwork& net, std::span<const double> input_mgdl,
                                    std::span<const double> target_mgdl, TrainMode mode) {
  check_network(net);
  LossAndGradients out;
  out.gradients = net.params.zeros_like();
  out.loss = backprop_example(net, input_mgdl, target_mgdl, mode, out.gradients);
  for (double g : out.gradients.flatten())
    if (!std::isfinite(g)) fail(ErrorKind::Numeric, "non-finite LSTM gradient");
  return out;
}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size()) fail(ErrorKind::Shape, "Adam parameter/gradient mismatch");
  if (m.empty()) {
    m.assign(params.size(), 0.0);
    v.assign(params.size(), 0.0);
  }
  if (m.size() != params.size()) fail(ErrorKind::Shape, "Adam state does not match parameters");
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

namespace {

double sample_rmse_mgdl(const LstmNetwork& net, const std::vector<Example>& examples,
                        std::span<const std::size_t> sample) {
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t idx : sample) {
    const auto& ex = examples[idx];
    const auto pred = rollout(net, ex.input, ex.target.size()).predictions;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double r = pred[k] - ex.target[k];
      se += r * r;
    }
    n += pred.size();
  }
  return std::sqrt(se / static_cast<double>(n));
}

/// Sum of per-example gradients and losses over [begin, end) of `order`.
double accumulate_range(const LstmNetwork& net, const std::vector<Example>& examples,
                        std::span<const std::size_t> order, TrainMode mode, LstmParams& grad) {
  double loss = 0.0;
  for (std::size_t idx : order) {
    const auto& ex = examples[idx];
    loss += backprop_example(net, ex.input, ex.target, mode, grad);
  }
  return loss;
}

}  // namespace

TrainResult train(LstmNetwork net, const PreparedSet& prepared, const TrainOptions& options) {
  check_network(net);
  const auto& examples = prepared.train;
  if (examples.empty()) fail(ErrorKind::InsufficientData, "LSTM training set is empty");
  if (options.batch == 0 || options.epochs == 0)
    fail(ErrorKind::Config, "epochs and batch size must be positive");
  const std::size_t threads = std::max<std::size_t>(1, options.threads);

  Rng shuffle_rng(options.seed);
  std::vector<std::size_t> heuristic;
  {
    std::vector<std::size_t> all(prepared.test.size());
    std::iota(all.begin(), all.end(), 0);
    const std::size_t n = std::min(options.heuristic_test_n, all.size());
    Rng pick(derive_seed(options.seed, 0x7e57));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(pick.below(all.size() - i));
      std::swap(all[i], all[j]);
    }
    heuristic.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(heuristic.begin(), heuristic.end());
  }

  AdamState adam;
  adam.lr = options.lr;
  std::vector<double> flat = net.params.flatten();
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t end = std::min(order.size(), start + options.batch);
      const std::span<const std::size_t> batch(order.data() + start, end - start);

      // Fixed contiguous chunks reduced in chunk order keep results
      // independent of scheduling at a given thread count.
      const std::size_t chunks = std::min(threads, batch.size());
      std::vector<LstmParams> partial(chunks, net.params.zeros_like());
      std::vector<double> partial_loss(chunks, 0.0);
      auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = batch.size() * c / chunks;
        const std::size_t hi = batch.size() * (c + 1) / chunks;
        partial_loss[c] =
            accumulate_range(net, examples, batch.subspan(lo, hi - lo), options.mode, partial[c]);
      };
      if (chunks == 1) {
        run_chunk(0);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t c = 0; c < chunks; ++c) pool.emplace_back(run_chunk, c);
        for (auto& th : pool) th.join();
      }

      std::vector<double> grad(flat.size(), 0.0);
      for (std::size_t c = 0; c < chunks; ++c) {
        const auto g = partial[c].flatten();
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
        epoch_loss += partial_loss[c];
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      double norm2 = 0.0;
      for (auto& g : grad) {
        g *= inv;
        norm2 += g * g;
      }
      if (!std::isfinite(norm2)) fail(ErrorKind::Numeric, "non-finite LSTM gradient in training");
      if (options.clip_norm > 0.0 && std::sqrt(norm2) > options.clip_norm) {
        const double scale = options.clip_norm / std::sqrt(norm2);
        for (auto& g : grad) g *= scale;
      }
      adam.step(flat, grad);
      net.params.assign(flat);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(examples.size());
    rec.train_rmse_mgdl = std::sqrt(rec.train_loss) * (net.scaler.hi - net.scaler.lo);
    if (!heuristic.empty()) rec.heuristic_rmse_mgdl = sample_rmse_mgdl(net, prepared.test, heuristic);
    result.curve.push_back(rec);
    result.checkpoints.push_back(net);
  }

  // Earliest epoch with the lowest heuristic test RMSE; train loss when no
  // test examples exist.
  std::size_t best = 0;
  for (std::size_t e = 1; e < result.curve.size(); ++e) {
    const auto& c = result.curve[e];
    const auto& b = result.curve[best];
    const double cv = c.heuristic_rmse_mgdl.value_or(c.train_loss);
    const double bv = b.heuristic_rmse_mgdl.value_or(b.train_loss);
    if (cv < bv) best = e;
  }
  result.best_epoch = best + 1;
  return result;
}

void write_training_curve_csv(std::ostream& out, const TrainResult& result) {
  out << "epoch,train_loss,train_rmse_mgdl,heuristic_rmse_mgdl\n";
  for (const auto& r : result.curve) {
    out << r.epoch << ',' << r.train_loss << ',' << r.train_rmse_mgdl << ',';
    if (r.heuristic_rmse_mgdl) out << *r.heuristic_rmse_mgdl;
    out << '\n';
  }
}

void write_forget_trace_csv(std::ostream& out, const ForgetTrace& trace) {
  out << "layer,timestep,phase";
  for (std::size_t u = 0; u < trace.hidden; ++u) out << ",unit" << u;
  out << '\n';
  for (std::size_t l = 0; l < trace.n_layers; ++l) {
    for (std::size_t s = 0; s < trace.n_steps; ++s) {
      out << l << ',' << s << ','
          << (trace.phases[s] == StepPhase::Observed ? "observed" : "recursive");
      for (std::size_t u = 0; u < trace.hidden; ++u) out << ',' << trace.at(l, s, u);
      out << '\n';
    }
  }
}

namespace {

constexpr std::string_view kLstmMagic = "GLYFLSTM";
constexpr std::uint32_t kLstmVersion = 1;

}  // namespace

void save_lstm(const LstmNetwork& net, const std::filesystem::path& path,
               const std::string& provenance_json) {
  check_network(net);
  nlohmann::json provenance;
  try {
    provenance = nlohmann::json::parse(provenance_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidValue, std::string("LSTM provenance is not JSON: ") + e.what());
  }
  const nlohmann::json header = {
      {"input_size", net.params.layers.front().input_size},
      {"hidden_size", net.hidden_size()},
      {"layers", net.n_layers()},
      {"scaler", {{"lo", net.scaler.lo}, {"hi", net.scaler.hi}}},
      {"seed", net.seed},
      {"n_params", net.param_count()},
      {"order", "per layer: w_input, w_hidden, b_input, b_hidden; head_weights; head_bias"},
      {"provenance", provenance},
  };
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.bytes(kLstmMagic);
  w.u32(kLstmVersion);
  w.u64(text.size());
  w.bytes(text);
  w.f64s(net.params.flatten());
  detail::write_file_atomic(path, w.data());
}

LstmNetwork load_lstm(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), "LSTM model " + path.string());
  if (r.remaining() < kLstmMagic.size() || r.bytes(kLstmMagic.size()) != kLstmMagic)
    fail(ErrorKind::Format, path.string() + " is not an LSTM model file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kLstmVersion)
    fail(ErrorKind::Format, "unsupported LSTM model version " + std::to_string(version));
  const std::uint64_t len = r.u64();
  nlohmann::json header;
  LstmConfig cfg;
  try {
    header = nlohmann::json::parse(r.bytes(len));
    cfg.input_size = header.at("input_size").get<std::size_t>();
    cfg.hidden_size = header.at("hidden_size").get<std::size_t>();
    cfg.n_layers = header.at("layers").get<std::size_t>();
    cfg.scaler.lo = header.at("scaler").at("lo").get<double>();
    cfg.scaler.hi = header.at("scaler").at("hi").get<double>();
    cfg.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("LSTM model header: ") + e.what());
  }
  LstmNetwork net = LstmNetwork::zeros(cfg);
  const std::size_t n = net.param_count();
  if (r.remaining() != n * 8)
    fail(ErrorKind::Shape, "LSTM payload holds " + std::to_string(r.remaining()) +
                               " bytes, expected " + std::to_string(n * 8) + " for " +
                               std::to_string(n) + " parameters");
  std::vector<double> flat;
  r.f64s(flat, n);
  net.params.assign(flat);
  return net;
}

}  // namespace glyco
