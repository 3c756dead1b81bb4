#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "glyco/forecaster.hpp"

namespace glyco {

struct PreparedSet;

/// One LSTM layer. Gate row blocks are ordered (i, f, g, o); matrices are
/// row-major with 4*hidden rows.
struct LstmLayer {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  std::vector<double> w_input;   // 4h x d
  std::vector<double> w_hidden;  // 4h x h
  std::vector<double> b_input;   // 4h
  std::vector<double> b_hidden;  // 4h

  static LstmLayer zeros(std::size_t input_size, std::size_t hidden_size);
  std::size_t param_count() const noexcept;

  friend bool operator==(const LstmLayer&, const LstmLayer&) = default;
};

/// Trainable tensors of a stacked LSTM with a scalar linear head. Also used
/// as the gradient container.
struct LstmParams {
  std::vector<LstmLayer> layers;
  std::vector<double> head_weights;  // h
  double head_bias = 0.0;

  std::size_t param_count() const noexcept;
  /// Flattened in file order: per layer W_input, W_hidden, b_input, b_hidden;
  /// then head weights and head bias.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  LstmParams zeros_like() const;

  friend bool operator==(const LstmParams&, const LstmParams&) = default;
};

/// Sum over layers of 4h*d + 4h*h + 8h, plus h + 1 for the head.
std::size_t lstm_param_count(std::size_t input_size, std::size_t hidden_size,
                             std::size_t n_layers);

/// Fixed affine map between mg/dL and the unit interval.
struct Scaler {
  double lo = 20.0;
  double hi = 600.0;

  double scale(double mgdl) const noexcept { return (mgdl - lo) / (hi - lo); }
  double unscale(double unit) const noexcept { return lo + unit * (hi - lo); }

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

struct LstmConfig {
  std::size_t input_size = 1;
  std::size_t hidden_size = 8;
  std::size_t n_layers = 3;
  std::uint64_t seed = 42;
  Scaler scaler;
};

struct LstmNetwork {
  LstmParams params;
  Scaler scaler;
  std::uint64_t seed = 0;

  /// Weights uniform in +-1/sqrt(h), seeded.
  static LstmNetwork create(const LstmConfig& config);
  static LstmNetwork zeros(const LstmConfig& config);

  std::size_t hidden_size() const noexcept;
  std::size_t n_layers() const noexcept { return params.layers.size(); }
  std::size_t param_count() const noexcept { return params.param_count(); }

  friend bool operator==(const LstmNetwork&, const LstmNetwork&) = default;
};

struct GateValues {
  std::vector<double> i, f, g, o;
};

struct CellOutput {
  std::vector<double> h;
  std::vector<double> c;
  GateValues gates;
};

CellOutput cell_forward(const LstmLayer& layer, std::span<const double> x,
                        std::span<const double> h_prev, std::span<const double> c_prev);

enum class StepPhase { Observed, Recursive };

/// Forget-gate activations, layers x steps x hidden.
struct ForgetTrace {
  std::size_t n_layers = 0;
  std::size_t n_steps = 0;
  std::size_t hidden = 0;
  std::vector<double> values;
  std::vector<StepPhase> phases;  // per step

  double at(std::size_t layer, std::size_t step, std::size_t unit) const {
    return values[(layer * n_steps + step) * hidden + unit];
  }
};

/// Columns: layer,timestep,phase,unit0..unitH-1
void write_forget_trace_csv(std::ostream& out, const ForgetTrace& trace);

struct Rollout {
  std::vector<double> predictions;  // mg/dL
  std::optional<ForgetTrace> trace;
};

/// Runs the input through the stack, then feeds each prediction back as the
/// next input until `horizon` values exist.
Rollout rollout(const LstmNetwork& net, std::span<const double> input_mgdl,
                std::size_t horizon, bool trace = false);

enum class TrainMode { Recursive, TeacherForcing };

struct LossAndGradients {
  double loss = 0.0;  // MSE in scaled space
  LstmParams gradients;
};

/// Full backpropagation through time over the unrolled input plus horizon.
/// In recursive mode the gradient also flows through the fed-back predictions.
LossAndGradients loss_and_gradients(const LstmNetwork& net, std::span<const double> input_mgdl,
                                    std::span<const double> target_mgdl,
                                    TrainMode mode = TrainMode::Recursive);

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t t = 0;
  std::vector<double> m;
  std::vector<double> v;

  void step(std::span<double> params, std::span<const double> grads);
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch = 128;
  double lr = 0.001;
  std::size_t heuristic_test_n = 1000;
  std::uint64_t seed = 42;
  double clip_norm = 5.0;  // <= 0 disables clipping
  TrainMode mode = TrainMode::Recursive;
  std::size_t threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;        // scaled-space MSE, mean over examples
  double train_rmse_mgdl = 0.0;   // sqrt(train_loss) mapped back to mg/dL
  std::optional<double> heuristic_rmse_mgdl;
};

struct TrainResult {
  std::vector<LstmNetwork> checkpoints;  // one per epoch
  std::vector<EpochRecord> curve;
  std::size_t best_epoch = 0;  // 1-based

  const LstmNetwork& best() const { return checkpoints.at(best_epoch - 1); }
};

TrainResult train(LstmNetwork net, const PreparedSet& prepared, const TrainOptions& options);

/// Columns: epoch,train_loss,train_rmse_mgdl,heuristic_rmse_mgdl
void write_training_curve_csv(std::ostream& out, const TrainResult& result);

void save_lstm(const LstmNetwork& net, const std::filesystem::path& path,
               const std::string& provenance_json = "{}");
LstmNetwork load_lstm(const std::filesystem::path& path);

class LstmForecaster final : public Forecaster {
public:
  explicit LstmForecaster(LstmNetwork net) : net_(std::move(net)) {}

  std::string name() const override { return "lstm"; }
  std::vector<double> forecast(std::span<const double> input,
                               std::size_t horizon) const override {
    return rollout(net_, input, horizon).predictions;
  }

  const LstmNetwork& network() const noexcept { return net_; }

private:
  LstmNetwork net_;
};

}  // namespace glyco
