#include <doctest.h>

#include <filesystem>
#include <random>

#include "autosmote/nn.hpp"
#include "gradcheck.hpp"

using namespace autosmote;
using namespace autosmote::nn;

namespace {

double regression_loss(const Mlp& net, const Matrix& x, const Matrix& y) {
  return 0.5 * (forward(net, x) - y).squaredNorm();
}

}  // namespace

TEST_CASE("mlp shapes and initialization bounds") {
  const auto net = Mlp::create({6, 5, 3}, false, 1);
  CHECK(net.input_size() == 6);
  CHECK(net.output_size() == 3);
  CHECK(parameter_count(net) == 6 * 5 + 5 + 5 * 3 + 3);
  CHECK(net.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK(net.layers[1].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(5.0));
  CHECK(flatten(Mlp::create({6, 5, 3}, false, 1)) == flatten(net));
  CHECK(flatten(Mlp::create({6, 5, 3}, false, 2)) != flatten(net));
  CHECK_THROWS(forward(net, Matrix(Matrix::Zero(5, 1))));
  Matrix bad = Matrix::Zero(6, 1);
  bad(0, 0) = std::nan("");
  CHECK_THROWS(forward(net, bad));
}

TEST_CASE("trunk output is non-negative") {
  const auto trunk = Mlp::create({4, 8, 8}, true, 3);
  CHECK((forward(trunk, Matrix(Matrix::Random(4, 10))).array() >= 0.0).all());
}

TEST_CASE("mlp backward matches finite differences") {
  std::mt19937_64 rng(11);
  for (int instance = 0; instance < 20; ++instance) {
    const auto net = Mlp::create({3, 4, 4, 2}, instance % 2 == 0, rng());
    const Matrix x = Matrix::Random(3, 5);
    const Matrix y = Matrix::Random(2, 5);
    MlpTape tape;
    const Matrix out = forward(net, x, &tape);
    auto grads = zeros_like(net);
    const Matrix dx = backward(net, tape, out - y, grads);
    const double err = gradcheck::max_relative_error(net, grads, [&](const Mlp& n) { return regression_loss(n, x, y); });
    CHECK(err < 1e-4);
    // Input gradient too.
    Matrix xp = x;
    xp(1, 2) += gradcheck::kStep;
    Matrix xm = x;
    xm(1, 2) -= gradcheck::kStep;
    const double numeric = (regression_loss(net, xp, y) - regression_loss(net, xm, y)) / (2 * gradcheck::kStep);
    CHECK(gradcheck::relative_error(dx(1, 2), numeric) < 1e-4);
  }
}

TEST_CASE("action scorer equals an mlp on the concatenation") {
  const auto s = ActionScorer::create(4, 3, 6, 5);
  Mlp concat;
  concat.layers.push_back({Matrix(6, 7), s.hidden_bias});
  concat.layers[0].weight << s.state_weight, s.action_weight;
  concat.layers.push_back({s.output_weight.transpose(), s.output_bias});
  const Vector h = Vector::Random(4);
  const Matrix actions = Matrix::Random(3, 9);
  const Vector scores = score(s, h, actions);
  for (Index j = 0; j < actions.cols(); ++j) {
    Vector in(7);
    in << h, actions.col(j);
    CHECK(scores(j) == doctest::Approx(forward(concat, in)(0)).epsilon(1e-12));
  }
}

TEST_CASE("action scorer backward matches finite differences") {
  std::mt19937_64 rng(13);
  for (int instance = 0; instance < 20; ++instance) {
    const auto s = ActionScorer::create(4, 3, 5, rng());
    const Vector h = Vector::Random(4);
    const Matrix actions = Matrix::Random(3, 6);
    const Vector c = Vector::Random(6);
    ScorerTape tape;
    score(s, h, actions, &tape);
    auto grads = zeros_like(s);
    const Vector dh = backward(s, h, actions, tape, c, grads);
    auto loss = [&](const ActionScorer& n) { return c.dot(score(n, h, actions)); };
    CHECK(gradcheck::max_relative_error(s, grads, loss) < 1e-4);
    for (Index i = 0; i < h.size(); ++i) {
      Vector hp = h, hm = h;
      hp(i) += gradcheck::kStep;
      hm(i) -= gradcheck::kStep;
      const double numeric = (c.dot(score(s, hp, actions)) - c.dot(score(s, hm, actions))) / (2 * gradcheck::kStep);
      CHECK(gradcheck::relative_error(dh(i), numeric) < 1e-4);
    }
  }
}

TEST_CASE("softmax is stable and normalized") {
  Vector z(3);
  z << 1000, 1001, 999;
  const Vector p = softmax(z);
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK(p.allFinite());
  CHECK(p(1) > p(0));
  CHECK_THROWS(softmax(Vector()));
  const Matrix cols = softmax_columns(Matrix::Random(4, 3) * 50);
  CHECK((cols.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Vector p = Vector::Zero(3);
  Vector g(3);
  g << 2.0, -0.5, 1e-3;
  AdamState st;
  AdamConfig cfg;
  REQUIRE(adam_step(p, g, st, cfg) == StepStatus::applied);
  // m_hat = g, v_hat = g^2 after bias correction.
  for (Index i = 0; i < 3; ++i) {
    CHECK(p(i) == doctest::Approx(-cfg.learning_rate * g(i) / (std::abs(g(i)) + cfg.epsilon)).epsilon(1e-12));
  }
}

TEST_CASE("adam clips the global norm and skips non-finite gradients") {
  Vector p = Vector::Zero(2);
  AdamState st;
  AdamConfig cfg;
  cfg.clip_norm = 1.0;
  Vector g(2);
  g << 300.0, 400.0;
  adam_step(p, g, st, cfg);
  CHECK(st.m(0) == doctest::Approx(0.1 * 0.6));
  CHECK(st.m(1) == doctest::Approx(0.1 * 0.8));
  const Vector before = p;
  g(0) = std::numeric_limits<double>::infinity();
  CHECK(adam_step(p, g, st, cfg) == StepStatus::skipped_non_finite);
  CHECK(p == before);
  CHECK(st.step == 1);
}

TEST_CASE("xor is learnable") {
  Matrix x(2, 4);
  x << 0, 0, 1, 1, 0, 1, 0, 1;
  RowVector y(4);
  y << 0, 1, 1, 0;
  auto net = Mlp::create({2, 16, 1}, false, 7);
  AdamState st;
  AdamConfig cfg;
  cfg.learning_rate = 0.02;
  double ce = 1.0;
  for (int step = 0; step < 2000 && ce >= 0.1; ++step) {
    MlpTape tape;
    const Matrix logits = forward(net, x, &tape);
    const RowVector prob = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    ce = -(y.array() * prob.array().log() + (1 - y.array()) * (1 - prob.array()).log()).mean();
    auto grads = zeros_like(net);
    backward(net, tape, (prob - y) / 4.0, grads);
    adam_step(net, grads, st, cfg);
  }
  CHECK(ce < 0.1);
}

TEST_CASE("checkpoint round trip") {
  const auto net = Mlp::create({3, 4, 2}, true, 9);
  const auto path = std::filesystem::temp_directory_path() / "autosmote_ckpt_test.json";
  save_checkpoint(path, {make_entry("trunk", net)});
  const auto entries = load_checkpoint(path);
  REQUIRE(entries.size() == 1);
  auto other = Mlp::create({3, 4, 2}, true, 10);
  restore(other, entries[0]);
  CHECK(flatten(other) == flatten(net));
  auto wrong = Mlp::create({3, 5, 2}, true, 10);
  CHECK_THROWS_AS(restore(wrong, entries[0]), DataError);
  std::filesystem::remove(path);
}
