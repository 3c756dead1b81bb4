#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glyco/error.hpp"
#include "glyco/lstm.hpp"
#include "glyco/pipeline.hpp"
#include "oracles.hpp"

using namespace glyco;

namespace {

LstmNetwork tiny(std::size_t h, std::size_t layers, std::uint64_t seed) {
  LstmConfig c;
  c.hidden_size = h;
  c.n_layers = layers;
  c.seed = seed;
  return LstmNetwork::create(c);
}

std::vector<double> wave(std::size_t n, double phase) {
  std::vector<double> v(n);
  for (std::size_t t = 0; t < n; ++t) v[t] = 160 + 60 * std::sin(0.2 * double(t) + phase);
  return v;
}

}  // namespace

TEST_SUITE("model_lstm") {

TEST_CASE("parameter counts") {
  CHECK(lstm_param_count(1, 8, 3) == 1513);
  CHECK(tiny(8, 3, 1).param_count() == 1513);
  CHECK(lstm_param_count(1, 1, 1) == 18);
  CHECK(lstm_param_count(1, 8, 0) == 9);
  CHECK(tiny(8, 3, 1).params.flatten().size() == 1513);
}

TEST_CASE("zero-parameter cell") {
  const auto layer = LstmLayer::zeros(1, 3);
  const std::vector<double> x{0.7}, zero(3, 0.0), c_prev{1.0, -2.0, 4.0};
  const auto out = cell_forward(layer, x, zero, zero);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(out.gates.i[u] == 0.5);
    CHECK(out.gates.f[u] == 0.5);
    CHECK(out.gates.o[u] == 0.5);
    CHECK(out.gates.g[u] == 0.0);
    CHECK(out.c[u] == 0.0);
    CHECK(out.h[u] == 0.0);
  }
  const auto carried = cell_forward(layer, x, zero, c_prev);
  for (std::size_t u = 0; u < 3; ++u) CHECK(carried.c[u] == doctest::Approx(0.5 * c_prev[u]));
}

TEST_CASE("cell matches the textbook equations") {
  Rng rng(12);
  LstmLayer layer = LstmLayer::zeros(2, 3);
  for (auto* v : {&layer.w_input, &layer.w_hidden, &layer.b_input, &layer.b_hidden})
    for (auto& w : *v) w = rng.uniform(-1, 1);
  const std::vector<double> x{0.3, -0.8}, h{0.1, -0.2, 0.4}, c{0.5, -1.5, 0.2};
  const auto got = cell_forward(layer, x, h, c);
  const auto ref = oracle::reference_cell(layer, x, h, c);
  for (std::size_t u = 0; u < 3; ++u) {
    CHECK(std::abs(got.h[u] - ref.h[u]) < 1e-12);
    CHECK(std::abs(got.c[u] - ref.c[u]) < 1e-12);
    CHECK(std::abs(got.gates.f[u] - ref.f[u]) < 1e-12);
    CHECK(std::abs(got.gates.g[u] - ref.g[u]) < 1e-12);
  }
}

TEST_CASE("rollout") {
  LstmConfig c;
  LstmNetwork zero = LstmNetwork::zeros(c);
  zero.params.head_bias = 0.25;
  const auto p = rollout(zero, wave(20, 0), 5).predictions;
  for (double v : p) CHECK(v == doctest::Approx(zero.scaler.unscale(0.25)));

  const auto net = tiny(8, 3, 9);
  const auto in = wave(132, 0.4);
  const auto r = rollout(net, in, 12, true);
  REQUIRE(r.trace.has_value());
  CHECK(r.trace->n_layers == 3);
  CHECK(r.trace->n_steps == 143);
  CHECK(r.trace->hidden == 8);
  CHECK(r.trace->values.size() == 3 * 143 * 8);
  for (double f : r.trace->values) {
    CHECK(f > 0.0);
    CHECK(f < 1.0);
  }
  CHECK(r.trace->phases[131] == StepPhase::Observed);
  CHECK(r.trace->phases[132] == StepPhase::Recursive);
  CHECK(rollout(net, in, 12).predictions == r.predictions);

  const auto ref = oracle::reference_rollout_scaled(net, in, 12);
  for (std::size_t k = 0; k < 12; ++k)
    CHECK(r.predictions[k] == doctest::Approx(net.scaler.unscale(ref[k])).epsilon(1e-10));

  std::ostringstream csv;
  write_forget_trace_csv(csv, *r.trace);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "layer,timestep,phase,unit0,unit1,unit2,unit3,unit4,unit5,unit6,unit7");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 3 * 143);
}

TEST_CASE("analytic gradients match finite differences") {
  Rng rng(31);
  for (int trial = 0; trial < 4; ++trial) {
    const auto net = tiny(1 + rng.below(4), 1 + rng.below(2), 100 + trial);
    std::vector<double> in(2 + rng.below(7)), target(1 + rng.below(3));
    for (auto& v : in) v = rng.uniform(60, 400);
    for (auto& v : target) v = rng.uniform(60, 400);
    const auto lg = loss_and_gradients(net, in, target);
    CHECK(lg.loss == doctest::Approx(oracle::reference_loss(net, in, target)).epsilon(1e-10));
    const auto analytic = lg.gradients.flatten();
    const auto numeric = oracle::fd_gradient(net, in, target, 1e-5);
    for (std::size_t p = 0; p < analytic.size(); ++p)
      CHECK(oracle::grad_rel_error(analytic[p], numeric[p]) < 1e-4);
  }
}

TEST_CASE("loss identities") {
  const auto net = tiny(3, 2, 5);
  const auto in = wave(10, 0.0);
  const auto pred = rollout(net, in, 3).predictions;
  const auto lg = loss_and_gradients(net, in, pred);
  CHECK(lg.loss < 1e-20);
  for (double g : lg.gradients.flatten()) CHECK(std::abs(g) < 1e-9);

  // Doubling every residual quadruples the loss.
  std::vector<double> t1(3), t2(3);
  for (std::size_t k = 0; k < 3; ++k) {
    t1[k] = pred[k] + 7.0 * double(k + 1);
    t2[k] = pred[k] + 14.0 * double(k + 1);
  }
  CHECK(loss_and_gradients(net, in, t2).loss ==
        doctest::Approx(4.0 * loss_and_gradients(net, in, t1).loss).epsilon(1e-9));
}

TEST_CASE("teacher forcing reduces to the recursive loss for a one-step horizon") {
  const auto net = tiny(4, 2, 8);
  const auto in = wave(12, 1.0);
  const std::vector<double> target{170.0};
  CHECK(loss_and_gradients(net, in, target, TrainMode::TeacherForcing).loss ==
        doctest::Approx(loss_and_gradients(net, in, target).loss));
}

TEST_CASE("adam step") {
  AdamState a;
  a.lr = 0.1;
  std::vector<double> p{1.0, -1.0}, g{0.5, -2.0};
  a.step(p, g);
  // First bias-corrected step moves each weight by lr against the gradient sign.
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == doctest::Approx(-0.9));
  CHECK(a.t == 1);
}

TEST_CASE("training lowers the loss and is deterministic") {
  PreparedSet set;
  for (int e = 0; e < 200; ++e) {
    const auto v = wave(24, 0.37 * e);
    set.train.push_back({std::vector<double>(v.begin(), v.begin() + 20),
                         std::vector<double>(v.begin() + 20, v.end()), 0, 0});
  }
  set.test.assign(set.train.begin(), set.train.begin() + 20);
  TrainOptions o;
  o.epochs = 5;
  o.batch = 16;
  o.lr = 0.01;
  o.heuristic_test_n = 10;
  const auto r = train(tiny(4, 2, 2), set, o);
  REQUIRE(r.curve.size() == 5);
  REQUIRE(r.checkpoints.size() == 5);
  CHECK(r.curve.back().train_loss < r.curve.front().train_loss);
  CHECK(r.best_epoch >= 1);
  CHECK(r.curve[0].heuristic_rmse_mgdl.has_value());
  const auto again = train(tiny(4, 2, 2), set, o);
  CHECK(again.checkpoints == r.checkpoints);

  o.threads = 2;
  const auto two = train(tiny(4, 2, 2), set, o);
  const auto again_two = train(tiny(4, 2, 2), set, o);
  CHECK(two.checkpoints == again_two.checkpoints);

  std::ostringstream curve;
  write_training_curve_csv(curve, r);
  CHECK(curve.str().rfind("epoch,train_loss,train_rmse_mgdl,heuristic_rmse_mgdl\n", 0) == 0);
  CHECK_THROWS_AS(train(tiny(4, 2, 2), PreparedSet{}, o), Error);
}

TEST_CASE("model files") {
  const auto dir = oracle::scratch_dir("lstm");
  const auto net = tiny(5, 2, 77);
  save_lstm(net, dir / "m.glyflstm", R"({"fold":1})");
  const auto back = load_lstm(dir / "m.glyflstm");
  CHECK(back == net);
  CHECK(back.hidden_size() == 5);
  CHECK(back.n_layers() == 2);
  CHECK(back.scaler == net.scaler);
  const auto in = wave(30, 0.2);
  CHECK(rollout(back, in, 12).predictions == rollout(net, in, 12).predictions);

  std::filesystem::resize_file(dir / "m.glyflstm", std::filesystem::file_size(dir / "m.glyflstm") - 8);
  try {
    (void)load_lstm(dir / "m.glyflstm");
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
  std::filesystem::remove_all(dir);
}

}
