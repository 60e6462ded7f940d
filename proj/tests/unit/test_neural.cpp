#include <cmath>
#include <bit>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "w2flow/mlp.hpp"

using namespace w2flow;

namespace {

// Scalar-loop forward pass reading the flat layout directly: per layer,
// W row-major (out x in) then b.
Vector reference_forward(const std::vector<int>& sizes, Activation act, const Vector& flat, const Vector& x) {
  Vector h = x;
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    Vector next(out);
    for (int o = 0; o < out; ++o) {
      double acc = flat[offset + in * out + o];
      for (int i = 0; i < in; ++i) acc += flat[offset + o * in + i] * h[i];
      next[o] = acc;
    }
    offset += in * out + out;
    if (l + 2 < sizes.size()) {
      for (int o = 0; o < out; ++o) {
        if (act == Activation::Relu) next[o] = next[o] > 0.0 ? next[o] : 0.0;
        if (act == Activation::Tanh) next[o] = std::tanh(next[o]);
      }
    }
    h = next;
  }
  return h;
}

Mlp with_params(Mlp net, const Vector& flat) {
  net.set_parameters(flat);
  return net;
}

Matrix random_batch(Eigen::Index m, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  return testing::random_points(m, d, rng, 1.5);
}

// One-parameter net y = w x.
Mlp scalar_linear(double w) {
  Mlp net({1, 1}, Activation::Identity);
  Vector p(2);
  p << w, 0.0;
  net.set_parameters(p);
  return net;
}

}  // namespace

TEST_CASE("mlp_new") {
  const Mlp a = mlp_new({2, 16, 16, 2}, Activation::Tanh, 7);
  CHECK(a.parameter_count() == 354);
  CHECK(a.parameters().size() == 354);
  CHECK(a.parameters() == mlp_new({2, 16, 16, 2}, Activation::Tanh, 7).parameters());
  CHECK(a.parameters() != mlp_new({2, 16, 16, 2}, Activation::Tanh, 8).parameters());

  const Mlp scaled = mlp_new({4, 9, 1}, Activation::Relu, 1, 0.5);
  CHECK(scaled.layers()[0].weight.cwiseAbs().maxCoeff() <= 0.5 / std::sqrt(4.0));
  CHECK(scaled.layers()[1].weight.cwiseAbs().maxCoeff() <= 0.5 / std::sqrt(9.0));
  CHECK(scaled.layers()[0].bias.isZero());
  CHECK(scaled.layers()[1].bias.isZero());
  CHECK(scaled.layers()[0].weight.rows() == 9);
  CHECK(scaled.layers()[0].weight.cols() == 4);

  // Uniform spread: a large layer fills most of its range.
  const Mlp wide = mlp_new({100, 100, 1}, Activation::Tanh, 3);
  CHECK(wide.layers()[0].weight.cwiseAbs().maxCoeff() > 0.09);
  CHECK(std::abs(wide.layers()[0].weight.mean()) < 0.005);

  CHECK_THROWS_AS(mlp_new({2}, Activation::Tanh, 0), Error);
  CHECK_THROWS_AS(mlp_new({2, 0, 1}, Activation::Tanh, 0), Error);
  CHECK_THROWS_AS(mlp_new({2, 1}, Activation::Tanh, 0, -1.0), Error);
}

TEST_CASE("activation names") {
  for (const Activation a : {Activation::Identity, Activation::Relu, Activation::Tanh})
    CHECK(activation_from_string(to_string(a)) == a);
  CHECK_THROWS_AS(activation_from_string("sigmoid"), Error);
}

TEST_CASE("parameter layout matches the flat convention") {
  const Mlp net = mlp_new({3, 4, 2}, Activation::Tanh, 5);
  const Vector flat = net.parameters();
  CHECK(flat[1] == net.layers()[0].weight(0, 1));
  CHECK(flat[3] == net.layers()[0].weight(1, 0));
  CHECK(flat[12] == net.layers()[0].bias[0]);
  CHECK(flat[16] == net.layers()[1].weight(0, 0));
  CHECK_THROWS_AS(with_params(net, Vector::Zero(5)), Error);
  Vector bad = flat;
  bad[0] = std::nan("");
  CHECK_THROWS_AS(with_params(net, bad), Error);
}

TEST_CASE("forward examples") {
  Mlp id({2, 2}, Activation::Identity);
  id.layers()[0].weight = Matrix::Identity(2, 2);
  const Matrix x = random_batch(4, 2, 1);
  CHECK(id.forward(x) == x);

  Mlp zero({2, 5, 3}, Activation::Tanh);
  zero.layers()[1].bias << 1, -2, 3;
  const Matrix out = zero.forward(x);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(out.row(i) == Eigen::RowVector3d(1, -2, 3));

  // 1 -> relu(2 * 1 - 0.5) -> 3 * 1.5 + 1 = 5.5
  Mlp tiny({1, 1, 1}, Activation::Relu);
  tiny.layers()[0].weight(0, 0) = 2.0;
  tiny.layers()[0].bias[0] = -0.5;
  tiny.layers()[1].weight(0, 0) = 3.0;
  tiny.layers()[1].bias[0] = 1.0;
  CHECK(tiny.forward(Matrix::Constant(1, 1, 1.0))(0, 0) == 5.5);
  CHECK(tiny.forward(Matrix::Constant(1, 1, 0.0))(0, 0) == 1.0);

  CHECK_THROWS_AS(zero.forward(Matrix::Zero(2, 3)), Error);
}

TEST_CASE("forward agrees with the scalar reference") {
  for (const Activation act : {Activation::Tanh, Activation::Relu, Activation::Identity}) {
    const std::vector<int> sizes{3, 7, 5, 2};
    const Mlp net = mlp_new(sizes, act, 11);
    const Matrix x = random_batch(6, 3, 2);
    const Matrix y = net.forward(x);
    CHECK(y == net.forward(x));
    for (Eigen::Index i = 0; i < 6; ++i) {
      const Vector ref = reference_forward(sizes, act, net.parameters(), x.row(i).transpose());
      CHECK((y.row(i).transpose() - ref).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("mse_loss_grad examples") {
  const LossAndGrad one = mse_loss_grad(scalar_linear(0.0), Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0));
  CHECK(one.value == 4.0);
  CHECK(one.grad[0] == -4.0);
  CHECK(one.grad[1] == -4.0);

  const Mlp net = mlp_new({2, 8, 2}, Activation::Tanh, 3);
  const Matrix x = random_batch(5, 2, 3);
  const LossAndGrad fit = mse_loss_grad(net, x, net.forward(x));
  CHECK(fit.value == 0.0);
  CHECK(fit.grad.isZero());

  CHECK_THROWS_AS(mse_loss_grad(net, x, Matrix::Zero(5, 3)), Error);
  CHECK_THROWS_AS(mse_loss_grad(net, x, Matrix::Zero(4, 2)), Error);
}

TEST_CASE("property: analytic gradients match central differences") {
  const std::vector<std::vector<int>> shapes{{2, 1}, {2, 4, 1}, {2, 8, 8, 1}, {2, 16, 16, 1}, {2, 6, 2}};
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto& sizes = shapes[seed % shapes.size()];
    const Activation act = seed % 2 == 0 ? Activation::Tanh : Activation::Relu;
    const Mlp net = mlp_new(sizes, act, 100 + seed);
    const Matrix x = random_batch(7, 2, 200 + seed);
    const Matrix targets = random_batch(7, sizes.back(), 300 + seed);
    const Vector theta = net.parameters();

    const auto mse = [&](const Vector& p) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        total += (targets.row(i).transpose() - reference_forward(sizes, act, p, x.row(i).transpose())).squaredNorm();
      return total / static_cast<double>(x.rows());
    };
    const Vector fd = testing::central_difference(mse, theta, 1e-5);
    CHECK(testing::relative_error(mse_loss_grad(net, x, targets).grad, fd) <= 1e-4);

    if (sizes.back() == 1) {
      const auto mean_out = [&](const Vector& p) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) total += reference_forward(sizes, act, p, x.row(i).transpose())[0];
        return total / static_cast<double>(x.rows());
      };
      const LossAndGrad head = scalar_head_grad(net, x, 1.0);
      CHECK(head.value == doctest::Approx(mean_out(theta)).epsilon(1e-13));
      CHECK(testing::relative_error(head.grad, testing::central_difference(mean_out, theta, 1e-5)) <= 1e-4);

      for (Eigen::Index i = 0; i < 3; ++i) {
        const Vector xi = x.row(i).transpose();
        const auto at = [&](const Vector& y) { return reference_forward(sizes, act, theta, y)[0]; };
        CHECK(testing::relative_error(input_gradient(net, xi), testing::central_difference(at, xi, 1e-5)) <= 1e-4);
      }
    }
    ++checked;
  }
  CHECK(checked == 20);
}

TEST_CASE("scalar_head_grad") {
  Mlp constant({2, 3, 1}, Activation::Tanh);
  constant.layers()[1].bias[0] = 0.7;
  const Matrix x = random_batch(4, 2, 9);
  const LossAndGrad g = scalar_head_grad(constant, x);
  CHECK(g.value == doctest::Approx(0.7));
  // Zero hidden weights: the output weights see tanh(0) = 0, so only the final bias moves.
  for (Eigen::Index k = 0; k + 1 < g.grad.size(); ++k) CHECK(g.grad[k] == 0.0);
  CHECK(g.grad[g.grad.size() - 1] == 1.0);

  const Mlp net = mlp_new({2, 5, 1}, Activation::Tanh, 4);
  CHECK(scalar_head_grad(net, x, -1.0).grad == -scalar_head_grad(net, x, 1.0).grad);
  CHECK_THROWS_AS(scalar_head_grad(mlp_new({2, 2}, Activation::Tanh, 0), x), Error);
}

TEST_CASE("input_gradient") {
  Mlp linear({3, 1}, Activation::Identity);
  linear.layers()[0].weight << 0.5, -1.0, 2.0;
  Vector x(3);
  x << 4, 5, 6;
  CHECK(input_gradient(linear, x) == Eigen::Vector3d(0.5, -1.0, 2.0));

  // relu kink at exactly zero pre-activation: derivative 0.
  Mlp kink({1, 1, 1}, Activation::Relu);
  kink.layers()[0].weight(0, 0) = 1.0;
  kink.layers()[1].weight(0, 0) = 1.0;
  CHECK(input_gradient(kink, Vector::Zero(1))[0] == 0.0);
  CHECK(input_gradient(kink, Vector::Constant(1, 1e-3))[0] == 1.0);

  const Mlp net = mlp_new({2, 6, 1}, Activation::Tanh, 2);
  const Matrix batch = random_batch(5, 2, 5);
  const Matrix rows = input_gradients(net, batch);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(rows.row(i).transpose() == input_gradient(net, batch.row(i).transpose()));
  CHECK_THROWS_AS(input_gradient(mlp_new({2, 2}, Activation::Tanh, 0), Vector::Zero(2)), Error);
}

TEST_CASE("sgd_step and ascent_step") {
  const Mlp net = mlp_new({2, 4, 1}, Activation::Tanh, 1);
  CHECK(sgd_step(net, Vector::Zero(net.parameter_count()), 0.3).parameters() == net.parameters());

  const Mlp start = scalar_linear(0.0);
  const LossAndGrad g = mse_loss_grad(start, Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0));
  CHECK(sgd_step(start, g.grad, 0.1).parameters()[0] == doctest::Approx(0.4).epsilon(1e-15));

  Rng rng(4);
  Vector grad(net.parameter_count());
  for (Eigen::Index k = 0; k < grad.size(); ++k) grad[k] = rng.normal();
  const Mlp twice = sgd_step(sgd_step(net, grad, 0.05), grad, 0.05);
  CHECK((twice.parameters() - sgd_step(net, grad, 0.1).parameters()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(ascent_step(net, grad, 0.1).parameters() == sgd_step(net, -grad, 0.1).parameters());

  Vector bad = grad;
  bad[2] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(sgd_step(net, bad, 0.1), Error);
  CHECK_THROWS_AS(sgd_step(net, grad, -0.1), Error);
  CHECK_THROWS_AS(sgd_step(net, Vector::Zero(3), 0.1), Error);
}

TEST_CASE("persistent_fit") {
  const Mlp net = mlp_new({2, 8, 2}, Activation::Tanh, 6);
  const Matrix x = random_batch(10, 2, 7);
  const Matrix targets = random_batch(10, 2, 8);

  const FitResult one = persistent_fit(net, x, targets, 1, 0.05);
  CHECK(one.net.parameters() == sgd_step(net, mse_loss_grad(net, x, targets).grad, 0.05).parameters());
  REQUIRE(one.losses.size() == 1);

  // K steps versus K manual cycles: bit-identical.
  Mlp manual = net;
  std::vector<double> manual_losses;
  for (int k = 0; k < 6; ++k) {
    const LossAndGrad g = mse_loss_grad(manual, x, targets);
    manual_losses.push_back(g.value);
    manual = sgd_step(manual, g.grad, 0.05);
  }
  std::vector<std::uint64_t> seen;
  const FitResult six = persistent_fit(net, x, targets, 6, 0.05, [&](int, double, const Matrix& t) {
    seen.push_back(static_cast<std::uint64_t>(&t == &targets));
  });
  CHECK(six.net.parameters() == manual.parameters());
  CHECK(six.losses == manual_losses);
  CHECK(seen == std::vector<std::uint64_t>(6, 1));

  const FitResult frozen = persistent_fit(net, x, targets, 3, 0.0);
  CHECK(frozen.net.parameters() == net.parameters());
  CHECK(frozen.losses[0] == frozen.losses[1]);
  CHECK(frozen.losses[1] == frozen.losses[2]);

  const Mlp linear = mlp_new({2, 2}, Activation::Identity, 9);
  const FitResult descent = persistent_fit(linear, x, targets, 20, 0.05);
  for (std::size_t k = 1; k < descent.losses.size(); ++k) CHECK(descent.losses[k] <= descent.losses[k - 1]);

  CHECK_THROWS_AS(persistent_fit(net, x, targets, 0, 0.1), Error);
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "w2flow_test_ckpt.bin";
  const Mlp net = mlp_new({2, 5, 3, 1}, Activation::Relu, 12);
  save_checkpoint(net, path.string(), 987654321ULL);
  CHECK(fs::file_size(path) == static_cast<std::uintmax_t>(8 * net.parameter_count()));

  // First parameter as raw little-endian float64.
  std::ifstream raw(path, std::ios::binary);
  unsigned char bytes[8];
  raw.read(reinterpret_cast<char*>(bytes), 8);
  std::uint64_t bits = 0;
  for (int b = 7; b >= 0; --b) bits = (bits << 8) | bytes[b];
  CHECK(std::bit_cast<double>(bits) == net.parameters()[0]);

  const Checkpoint back = load_checkpoint(path.string());
  CHECK(back.seed == 987654321ULL);
  CHECK(back.net.layer_sizes() == net.layer_sizes());
  CHECK(back.net.activation() == Activation::Relu);
  CHECK(back.net.parameters() == net.parameters());

  fs::resize_file(path, 8 * net.parameter_count() - 8);
  CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
  fs::remove(path);
  fs::remove(path.string() + ".json");
  CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
}
