#include "lo/gradsuite.hpp"

#include <algorithm>

#include "lo/rng.hpp"
#include "lo/training.hpp"

namespace lo {

namespace {

using Id = Tape<double>::Id;

Tensor<double> random_tensor(Rng& rng, std::vector<std::int64_t> shape,
                             double lo_v = -1.0, double hi_v = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo_v, hi_v);
  return t;
}

// Keeps every coordinate away from the ReLU/abs kink and from max-pool
// ties so central differences stay on one smooth branch.
void separate(Tensor<double>& t, double margin) {
  for (double& v : t.data) {
    if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
  }
}

double check_linear(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    const std::int64_t R = 1 + static_cast<std::int64_t>(rng.uniform_index(4));
    const std::int64_t a = 1 + static_cast<std::int64_t>(rng.uniform_index(5));
    const std::int64_t b = 1 + static_cast<std::int64_t>(rng.uniform_index(5));
    const GraphFn<double> fn = [](Tape<double>& t, const std::vector<Id>& in) {
      return t.sum(t.linear(in[0], in[1], in[2]));
    };
    worst = std::max(worst,
                     grad_check<double>(fn, {random_tensor(rng, {R, a}),
                                             random_tensor(rng, {a, b}),
                                             random_tensor(rng, {b})}));
  }
  return worst;
}

double check_relu(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    Tensor<double> x = random_tensor(rng, {3, 4});
    separate(x, 1e-3);
    // A non-uniform weighting so the gradient mask is exercised per entry.
    Tensor<double> w = random_tensor(rng, {3, 4});
    const GraphFn<double> fn = [](Tape<double>& t, const std::vector<Id>& in) {
      return t.sum(t.mul(t.relu(in[0]), in[1]));
    };
    worst = std::max(worst, grad_check<double>(fn, {x, w}));
  }
  return worst;
}

double check_max_pool(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    Tensor<double> x = random_tensor(rng, {2, 3, 4});
    const std::vector<std::int64_t> counts{
        1 + static_cast<std::int64_t>(rng.uniform_index(3)),
        1 + static_cast<std::int64_t>(rng.uniform_index(3))};
    Tensor<double> w = random_tensor(rng, {2, 4});
    const GraphFn<double> fn = [counts](Tape<double>& t, const std::vector<Id>& in) {
      return t.sum(t.mul(t.max_pool_set(in[0], counts), in[1]));
    };
    worst = std::max(worst, grad_check<double>(fn, {x, w}));
  }
  return worst;
}

double check_batch_norm(Rng& rng, Mode mode) {
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    const std::int64_t N = 3 + static_cast<std::int64_t>(rng.uniform_index(4));
    const std::int64_t C = 1 + static_cast<std::int64_t>(rng.uniform_index(4));
    Tensor<double> x = random_tensor(rng, {N, C}, -2.0, 2.0);
    Tensor<double> gamma = random_tensor(rng, {C}, 0.5, 1.5);
    Tensor<double> beta = random_tensor(rng, {C}, -0.5, 0.5);
    Tensor<double> w = random_tensor(rng, {N, C});
    const Tensor<double> rmean = random_tensor(rng, {C}, -0.5, 0.5);
    const Tensor<double> rvar = random_tensor(rng, {C}, 0.5, 2.0);
    const GraphFn<double> fn = [mode, rmean, rvar](Tape<double>& t,
                                                   const std::vector<Id>& in) {
      return t.sum(t.mul(t.batch_norm(in[0], in[1], in[2], mode, &rmean, &rvar),
                         in[3]));
    };
    worst = std::max(worst, grad_check<double>(fn, {x, gamma, beta, w}));
  }
  return worst;
}

double check_elementwise(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    Tensor<double> a = random_tensor(rng, {2, 3});
    Tensor<double> b = random_tensor(rng, {2, 3}, 0.5, 2.0);  // safe divisor
    separate(a, 1e-3);
    const GraphFn<double> fn = [](Tape<double>& t, const std::vector<Id>& in) {
      const auto prod = t.mul(t.add(in[0], in[1]), t.sub(in[0], in[1]));
      const auto quot = t.div(in[0], in[1]);
      return t.sum(t.add(t.abs(prod), quot));
    };
    worst = std::max(worst, grad_check<double>(fn, {a, b}));
  }
  return worst;
}

double check_sqrt_affine(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    Tensor<double> x = random_tensor(rng, {2, 3}, 0.5, 3.0);
    const GraphFn<double> fn = [](Tape<double>& t, const std::vector<Id>& in) {
      return t.sum(t.affine(t.sqrt(in[0]), 2.0, -0.25));
    };
    worst = std::max(worst, grad_check<double>(fn, {x}));
  }
  return worst;
}

double check_gather_concat_slice(Rng& rng) {
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    Tensor<double> a = random_tensor(rng, {4, 3});
    Tensor<double> b = random_tensor(rng, {3, 2});
    const GraphFn<double> fn = [](Tape<double>& t, const std::vector<Id>& in) {
      const auto g = t.gather_rows(in[0], {0, 2, 2});  // repeated index
      const auto cat = t.concat_cols(g, in[1]);
      return t.sum(t.slice_cols(cat, 1, 3));
    };
    worst = std::max(worst, grad_check<double>(fn, {a, b}));
  }
  return worst;
}

// The harness must flag a wrong backward; a deliberately corrupted ReLU
// gradient (mask >= 0 instead of > 0, doubled) has to blow past 1e-2.
double corrupted_backward_error() {
  Tensor<double> x = Tensor<double>::row({-0.4, 0.7, 1.3});
  Tape<double> tape;
  const Id xi = tape.input(x, true);
  const Id y = tape.relu(xi);
  const Id out = tape.sum(y);
  tape.backward(out);
  double worst = 0.0;
  for (std::size_t j = 0; j < x.data.size(); ++j) {
    const double corrupted = 2.0 * (x.data[j] >= 0.0 ? 1.0 : 0.0);
    const double h = 1e-5;
    Tensor<double> xp = x, xm = x;
    xp.data[j] += h;
    xm.data[j] -= h;
    const auto eval = [](const Tensor<double>& t) {
      Tape<double> t2;
      double acc = 0.0;
      const Tensor<double>& v = t2.value(t2.relu(t2.input(t, false)));
      for (double u : v.data) acc += u;
      return acc;
    };
    const double numeric = (eval(xp) - eval(xm)) / (2.0 * h);
    worst = std::max(worst, std::abs(corrupted - numeric) /
                                std::max({std::abs(corrupted), std::abs(numeric), 1e-8}));
  }
  return worst;
}

}  // namespace

double model_grad_check(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, 0x6c0de);

  PointCloud p = make_cloud(8, cfg.input_feature_channels);
  PointCloud q = make_cloud(8, cfg.input_feature_channels);
  for (Eigen::Index i = 0; i < 8; ++i) {
    for (int k = 0; k < 3; ++k) {
      p.xyz(i, k) = rng.uniform(-3.0, 3.0);
      q.xyz(i, k) = rng.uniform(-3.0, 3.0);
    }
    for (Eigen::Index c = 0; c < p.feature_width(); ++c) {
      p.features(i, c) = rng.uniform01();
      q.features(i, c) = rng.uniform01();
    }
  }
  PoseDelta target;
  target.t = Eigen::Vector3d(0.3, -0.2, 0.1);
  target.r = Eigen::Vector3d(2.0, -1.0, 3.0);

  TrainConfig tcfg;
  tcfg.cos_reg_weight = 0.1;  // exercise the regularizer path too

  ModelParams<double> params = init_params<double>(cfg, seed);

  // Analytic gradients once.
  std::map<std::string, Tensor<double>> analytic;
  {
    Tape<double> tape;
    const auto graph =
        model_forward_graph(tape, p, q, params, cfg, Mode::Train, false, 0);
    const auto loss = detail::pair_loss_graph(tape, graph.output, target, tcfg);
    tape.backward(loss);
    for (const auto& [name, id] : graph.param_ids) analytic.emplace(name, tape.grad(id));
  }

  const auto eval_loss = [&]() {
    Tape<double> tape;
    const auto graph =
        model_forward_graph(tape, p, q, params, cfg, Mode::Train, false, 0);
    const auto loss = detail::pair_loss_graph(tape, graph.output, target, tcfg);
    return tape.value(loss).data[0];
  };

  const double h = 1e-5;
  double worst = 0.0;
  for (auto& [name, tensor] : params.tensors) {
    if (!ModelParams<double>::is_trainable(name)) continue;
    const Tensor<double>& a = analytic.at(name);
    for (std::size_t j = 0; j < tensor.data.size(); ++j) {
      const double keep = tensor.data[j];
      tensor.data[j] = keep + h;
      const double fp = eval_loss();
      tensor.data[j] = keep - h;
      const double fm = eval_loss();
      tensor.data[j] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      // Central differences on an O(1) loss carry ~eps/(2h) of roundoff
      // (~1e-11 here), so dead-path coordinates where both gradients sit
      // below that noise are compared against an absolute floor instead of
      // their own magnitude.
      const double rel = std::abs(a.data[j] - numeric) /
                         std::max({std::abs(a.data[j]), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

std::vector<GradCheckResult> run_gradient_suite(bool quick, std::uint64_t seed) {
  Rng rng = Rng::fork(seed, 0x9d5);
  std::vector<GradCheckResult> results;
  const auto add = [&results](const std::string& name, double err, double thr) {
    results.push_back({name, err, thr, err < thr});
  };

  add("linear", check_linear(rng), 1e-6);
  add("relu", check_relu(rng), 1e-6);
  add("max_pool_set", check_max_pool(rng), 1e-6);
  add("batch_norm_train", check_batch_norm(rng, Mode::Train), 1e-5);
  add("batch_norm_infer", check_batch_norm(rng, Mode::Infer), 1e-5);
  add("elementwise", check_elementwise(rng), 1e-6);
  add("sqrt_affine", check_sqrt_affine(rng), 1e-6);
  add("gather_concat_slice", check_gather_concat_slice(rng), 1e-6);

  const double sens = corrupted_backward_error();
  results.push_back(
      {"harness_sensitivity", sens, 1e-2, sens > 1e-2});  // must EXCEED

  if (!quick) {
    add("full_model", model_grad_check(ModelConfig::reduced(), seed), 1e-4);
  }
  return results;
}

}  // namespace lo
