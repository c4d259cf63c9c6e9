#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lo/autodiff.hpp"
#include "lo/checkpoint.hpp"
#include "lo/errors.hpp"
#include "lo/gradsuite.hpp"
#include "lo/rng.hpp"

using namespace lo;
using D = Tensor<double>;

TEST_CASE("tensor constructors and indexing") {
  const D z = D::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 3);
  CHECK(z.data == std::vector<double>(6, 0.0));

  const D f = D::full({4}, 2.5);
  CHECK(f.data == std::vector<double>(4, 2.5));

  D m = D::zeros({2, 2});
  m(1, 0) = 7.0;
  CHECK(m.data[2] == 7.0);

  CHECK(D::scalar(3.0).shape == std::vector<std::int64_t>{1});
  CHECK(D::vec({1, 2}).shape == std::vector<std::int64_t>{2});
  CHECK(D::row({1, 2}).shape == std::vector<std::int64_t>{1, 2});
}

TEST_CASE("linear computes x*w + b and rejects bad shapes") {
  Tape<double> tape;
  const auto x = tape.input(D::row({1, 2}), false);
  const auto w = tape.input(D{{2, 2}, {1, 0, 0, 1}}, false);
  const auto b = tape.input(D::vec({3, 3}), false);
  const auto y = tape.linear(x, w, b);
  CHECK(tape.value(y).data == std::vector<double>{4, 5});

  const auto w_id = tape.input(D{{2, 2}, {1, 0, 0, 1}}, false);
  const auto b0 = tape.input(D::vec({0, 0}), false);
  CHECK(tape.value(tape.linear(x, w_id, b0)).data == std::vector<double>{1, 2});

  const auto bad = tape.input(D::zeros({3, 3}), false);
  CHECK_THROWS_AS(tape.linear(x, bad, b), ShapeMismatch);
}

TEST_CASE("relu clamps negatives and passes positives") {
  Tape<double> tape;
  const auto x = tape.input(D::row({-2, -0.5, 0, 0.5, 2}), false);
  CHECK(tape.value(tape.relu(x)).data == std::vector<double>{0, 0, 0, 0.5, 2});
}

TEST_CASE("batch norm train mode normalizes with batch statistics") {
  Tape<double> tape;
  const auto gamma = tape.input(D::vec({1, 1}), false);
  const auto beta = tape.input(D::vec({0.5, -0.5}), false);

  SUBCASE("a constant channel collapses to the shift") {
    const auto x = tape.input(D{{3, 2}, {4, 1, 4, 2, 4, 3}}, false);
    const auto y = tape.batch_norm(x, gamma, beta, Mode::Train, nullptr, nullptr);
    for (int i = 0; i < 3; ++i) CHECK(tape.value(y)(i, 0) == 0.5);
  }

  SUBCASE("a standardized channel passes through within epsilon") {
    const auto x = tape.input(D{{2, 2}, {-1, -1, 1, 1}}, false);
    const auto b0 = tape.input(D::vec({0, 0}), false);
    const auto y = tape.batch_norm(x, gamma, b0, Mode::Train, nullptr, nullptr);
    // mean 0, variance 1; the 1e-5 epsilon shaves ~5e-6 off unit values
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(std::abs(tape.value(y).data[i] - tape.value(x).data[i]) <= 1e-5);
  }

  SUBCASE("a single row is degenerate") {
    const auto x = tape.input(D::row({1, 2}), false);
    CHECK_THROWS_AS(
        tape.batch_norm(x, gamma, beta, Mode::Train, nullptr, nullptr),
        DegenerateBatch);
  }
}

TEST_CASE("batch norm infer mode uses the supplied running statistics") {
  Tape<double> tape;
  const auto x = tape.input(D{{1, 2}, {3, 8}}, false);
  const auto gamma = tape.input(D::vec({2, 1}), false);
  const auto beta = tape.input(D::vec({0, 1}), false);
  const D rmean = D::vec({1, 8});
  const D rvar = D::vec({4, 1});
  const auto y = tape.batch_norm(x, gamma, beta, Mode::Infer, &rmean, &rvar);
  // channel 0: 2 * (3-1)/sqrt(4+eps); channel 1: (8-8)/1 + 1
  CHECK(std::abs(tape.value(y)(0, 0) - 2.0) <= 1e-5);
  CHECK(tape.value(y)(0, 1) == 1.0);
}

TEST_CASE("batch norm train mode folds batch stats into the running buffers") {
  Tape<double> tape;
  const auto x = tape.input(D{{2, 1}, {0, 4}}, false);
  const auto gamma = tape.input(D::vec({1}), false);
  const auto beta = tape.input(D::vec({0}), false);
  D rmean = D::vec({10});
  D rvar = D::vec({1});
  tape.batch_norm(x, gamma, beta, Mode::Train, &rmean, &rvar, &rmean, &rvar);
  // batch mean 2, biased variance 4: running = 0.9*old + 0.1*batch
  CHECK(std::abs(rmean.data[0] - (0.9 * 10 + 0.1 * 2)) <= 1e-12);
  CHECK(std::abs(rvar.data[0] - (0.9 * 1 + 0.1 * 4)) <= 1e-12);
}

TEST_CASE("max pooling keeps the valid prefix maximum per channel") {
  Tape<double> tape;
  // x: [2,3,2], row 0 valid 3, row 1 valid 1
  const auto x = tape.input(
      D{{2, 3, 2}, {1, 9, 5, 2, 3, 8, 7, 4, -1, 99, -2, 99}}, true);
  const auto y = tape.max_pool_set(x, {3, 1});
  CHECK(tape.value(y).data == std::vector<double>{5, 9, 7, 4});

  const auto s = tape.sum(y);
  tape.backward(s);
  // gradient lands only on the argmax entries
  const D& g = tape.grad(x);
  CHECK(g.data == std::vector<double>{0, 1, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0});
}

TEST_CASE("max pooling ties route the gradient to the first index") {
  Tape<double> tape;
  const auto x = tape.input(D{{1, 3, 1}, {5, 5, 5}}, true);
  const auto y = tape.max_pool_set(x, {3});
  tape.backward(tape.sum(y));
  CHECK(tape.grad(x).data == std::vector<double>{1, 0, 0});
}

TEST_CASE("max pooling is invariant under permuting the valid entries") {
  Tape<double> tape;
  const auto a = tape.input(D{{1, 4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}}, false);
  const auto b = tape.input(D{{1, 4, 2}, {7, 8, 1, 2, 5, 6, 3, 4}}, false);
  // copies, because growing the tape invalidates value() references
  const std::vector<double> va = tape.value(tape.max_pool_set(a, {4})).data;
  const std::vector<double> vb = tape.value(tape.max_pool_set(b, {4})).data;
  CHECK(va == std::vector<double>{7, 8});
  CHECK(va == vb);
}

TEST_CASE("elementwise ops and reductions compute exact forward values") {
  Tape<double> tape;
  const auto a = tape.input(D::row({2, -3}), false);
  const auto b = tape.input(D::row({4, 2}), false);
  CHECK(tape.value(tape.add(a, b)).data == std::vector<double>{6, -1});
  CHECK(tape.value(tape.sub(a, b)).data == std::vector<double>{-2, -5});
  CHECK(tape.value(tape.mul(a, b)).data == std::vector<double>{8, -6});
  CHECK(tape.value(tape.div(a, b)).data == std::vector<double>{0.5, -1.5});
  CHECK(tape.value(tape.abs(a)).data == std::vector<double>{2, 3});
  CHECK(tape.value(tape.sum(a)).data == std::vector<double>{-1});
  CHECK(tape.value(tape.affine(a, 2.0, 1.0)).data == std::vector<double>{5, -5});
  const auto sq = tape.input(D::row({4, 9}), false);
  CHECK(tape.value(tape.sqrt(sq)).data == std::vector<double>{2, 3});
}

TEST_CASE("structural ops rearrange values and validate shapes") {
  Tape<double> tape;
  const auto x = tape.input(D{{2, 2}, {1, 2, 3, 4}}, false);
  CHECK(tape.value(tape.reshape(x, {4, 1})).shape ==
        std::vector<std::int64_t>{4, 1});
  CHECK_THROWS_AS(tape.reshape(x, {3, 1}), ShapeMismatch);

  const auto g = tape.gather_rows(x, {1, 0, 1});
  CHECK(tape.value(g).data == std::vector<double>{3, 4, 1, 2, 3, 4});
  CHECK_THROWS_AS(tape.gather_rows(x, {2}), InvalidConfig);

  const auto y = tape.input(D{{2, 1}, {9, 8}}, false);
  const auto cat = tape.concat_cols(x, y);
  CHECK(tape.value(cat).data == std::vector<double>{1, 2, 9, 3, 4, 8});

  const auto sl = tape.slice_cols(cat, 1, 2);
  CHECK(tape.value(sl).data == std::vector<double>{2, 9, 4, 8});
  CHECK_THROWS_AS(tape.slice_cols(cat, 2, 2), ShapeMismatch);
}

TEST_CASE("repeated gather indices accumulate gradient") {
  Tape<double> tape;
  const auto x = tape.input(D{{2, 1}, {3, 5}}, true);
  const auto g = tape.gather_rows(x, {1, 1, 0});
  tape.backward(tape.sum(g));
  CHECK(tape.grad(x).data == std::vector<double>{1, 2});
}

TEST_CASE("non-finite forward values raise the diagnostic error") {
  Tape<double> tape;
  const auto a = tape.input(D::row({1}), false);
  const auto zero = tape.input(D::row({0}), false);
  CHECK_THROWS_AS(tape.div(a, zero), NonFiniteValue);
}

TEST_CASE("adam takes signed steps and optimizes a quadratic") {
  using M = std::map<std::string, Tensor<double>>;

  SUBCASE("zero gradient leaves parameters unchanged") {
    M params{{"w", D::row({1.5, -2.5})}};
    M grads{{"w", D::row({0, 0})}};
    AdamState<double> state;
    adam_step(params, grads, state, 0.1);
    CHECK(params.at("w").data == std::vector<double>{1.5, -2.5});
  }

  SUBCASE("the first step is close to -lr * sign(grad)") {
    M params{{"w", D::row({0, 0})}};
    M grads{{"w", D::row({0.5, -3.0})}};
    AdamState<double> state;
    adam_step(params, grads, state, 0.01);
    CHECK(std::abs(params.at("w").data[0] - -0.01) <= 1e-7);
    CHECK(std::abs(params.at("w").data[1] - 0.01) <= 1e-7);
  }

  SUBCASE("three steps on w^2 decrease it monotonically") {
    M params{{"w", D::row({1.0})}};
    AdamState<double> state;
    double prev = 1.0;
    for (int i = 0; i < 3; ++i) {
      M grads{{"w", D::row({2.0 * params.at("w").data[0]})}};
      adam_step(params, grads, state, 0.05);
      const double f = params.at("w").data[0] * params.at("w").data[0];
      CHECK(f < prev);
      prev = f;
    }
  }

  SUBCASE("unknown or misshapen gradients are rejected") {
    M params{{"w", D::row({1.0})}};
    AdamState<double> state;
    M bad_name{{"v", D::row({1.0})}};
    CHECK_THROWS_AS(adam_step(params, bad_name, state, 0.1), ShapeMismatch);
    M bad_shape{{"w", D::row({1.0, 2.0})}};
    CHECK_THROWS_AS(adam_step(params, bad_shape, state, 0.1), ShapeMismatch);
  }
}

TEST_CASE("grad_check verifies a linear layer to tight tolerance") {
  Rng rng(41);
  D x = D::zeros({3, 4}), w = D::zeros({4, 2}), b = D::zeros({2});
  for (double& v : x.data) v = rng.uniform(-1, 1);
  for (double& v : w.data) v = rng.uniform(-1, 1);
  for (double& v : b.data) v = rng.uniform(-1, 1);
  const GraphFn<double> fn = [](Tape<double>& t,
                                const std::vector<Tape<double>::Id>& ids) {
    return t.sum(t.linear(ids[0], ids[1], ids[2]));
  };
  CHECK(grad_check<double>(fn, {x, w, b}) < 1e-6);
  // out-of-range h is clamped rather than honored
  CHECK(grad_check<double>(fn, {x, w, b}, 1.0) < 1e-6);
}

TEST_CASE("the full gradient suite passes its thresholds") {
  for (const GradCheckResult& r : run_gradient_suite(true, 7)) {
    INFO(r.name);
    CHECK(r.pass);
  }
}

TEST_CASE("checkpoints round trip bit-exactly in both precisions") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "lo_test_ckpt.bin";

  CheckpointData data;
  Rng rng(42);
  Tensor<float> tf = Tensor<float>::zeros({3, 5});
  for (float& v : tf.data) v = static_cast<float>(rng.uniform(-2, 2));
  Tensor<double> td = Tensor<double>::zeros({7});
  for (double& v : td.data) v = rng.uniform(-2, 2);
  data.f32.emplace("layer.w", tf);
  data.f64.emplace("verify.w", td);

  write_checkpoint(path.string(), data);
  const CheckpointData back = read_checkpoint(path.string());
  REQUIRE(back.f32.count("layer.w") == 1);
  REQUIRE(back.f64.count("verify.w") == 1);
  CHECK(back.f32.at("layer.w").shape == tf.shape);
  CHECK(back.f32.at("layer.w").data == tf.data);
  CHECK(back.f64.at("verify.w").data == td.data);
  fs::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "lo_test_ckpt_bad.bin";
  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint at all";
  }
  CHECK_THROWS_AS(read_checkpoint(path.string()), MalformedCheckpoint);
  CHECK_THROWS_AS(read_checkpoint((path.parent_path() / "lo_absent.bin").string()),
                  MalformedCheckpoint);
  fs::remove(path);
}
