#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lo/autodiff.hpp"
#include "lo/checkpoint.hpp"
#include "lo/dataio.hpp"
#include "lo/network.hpp"
#include "lo/rng.hpp"

namespace lo {

struct TrainConfig {
  int epochs = 500;
  double lr_base = 1e-3;
  std::vector<int> lr_decay_epochs{300, 400};
  double lr_decay_factor = 0.1;
  int batch_pairs = 8;           // gradient-accumulation batch
  double swap_probability = 0.5;
  double cos_reg_weight = 0.0;   // 0 disables the regularizer
  bool cos_translation_only = false;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int checkpoint_every = 0;      // epochs between checkpoints; 0 = final only
  std::string checkpoint_dir;    // empty = keep checkpoints in memory only

  void validate() const {
    if (epochs < 0) throw InvalidConfig("epochs must be >= 0");
    if (batch_pairs < 1) throw InvalidConfig("batch_pairs must be >= 1");
    if (swap_probability < 0.0 || swap_probability > 1.0)
      throw InvalidConfig("swap_probability must be in [0, 1]");
    if (cos_reg_weight < 0.0) throw InvalidConfig("cos_reg_weight must be >= 0");
    if (!std::is_sorted(lr_decay_epochs.begin(), lr_decay_epochs.end()))
      throw InvalidConfig("lr_decay_epochs must be ascending");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  // Deterministic runs zero out the wall-time column so identical seeds
  // yield byte-identical files.
  std::string to_csv(bool include_seconds = true) const;
};

// (1/6) sum |y_i - yhat_i| over the six pose components.
double mae_loss(const PoseDelta& y, const PoseDelta& yhat);

// 1 - cos(angle between y and yhat); 0 when either norm vanishes.
double cos_dist(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

// With probability swap_probability: exchange p and q and invert the
// target. Always consumes exactly one uniform draw.
FramePair augment_swap(const FramePair& pair, double swap_probability, Rng& rng);

double lr_at(int epoch, const TrainConfig& cfg);

namespace detail {

// Graph-side mae: (1/6) sum |target - yhat|.
template <typename T>
typename Tape<T>::Id mae_loss_graph(Tape<T>& tape, typename Tape<T>::Id yhat,
                                    const PoseDelta& target) {
  const Eigen::Matrix<double, 6, 1> y = target.vec6();
  Tensor<T> yt = Tensor<T>::zeros({1, 6});
  for (int k = 0; k < 6; ++k) yt.data[static_cast<std::size_t>(k)] = static_cast<T>(y(k));
  const auto diff = tape.sub(tape.input(yt, false), yhat);
  return tape.affine(tape.sum(tape.abs(diff)), T(1) / T(6), T(0));
}

// Graph-side cosine distance; returns an id or -1 when the zero-norm
// fallback fires (eager values are known at build time).
template <typename T>
typename Tape<T>::Id cos_dist_graph(Tape<T>& tape, typename Tape<T>::Id yhat,
                                    const PoseDelta& target, bool translation_only) {
  const Eigen::Matrix<double, 6, 1> yfull = target.vec6();
  const int dim = translation_only ? 3 : 6;
  Tensor<T> yt = Tensor<T>::zeros({1, dim});
  for (int k = 0; k < dim; ++k)
    yt.data[static_cast<std::size_t>(k)] = static_cast<T>(yfull(k));

  const auto yh = translation_only ? tape.slice_cols(yhat, 0, 3) : yhat;
  double norm_yh = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double v = static_cast<double>(tape.value(yh).data[static_cast<std::size_t>(k)]);
    norm_yh += v * v;
  }
  const double norm_y = yfull.head(dim).squaredNorm();
  if (norm_y < 1e-24 || norm_yh < 1e-24) return -1;

  const auto y_id = tape.input(yt, false);
  const auto dot = tape.sum(tape.mul(y_id, yh));
  const auto denom =
      tape.sqrt(tape.mul(tape.sum(tape.mul(y_id, y_id)), tape.sum(tape.mul(yh, yh))));
  return tape.affine(tape.div(dot, denom), T(-1), T(1));
}

// Combined training loss for one pair.
template <typename T>
typename Tape<T>::Id pair_loss_graph(Tape<T>& tape, typename Tape<T>::Id yhat,
                                     const PoseDelta& target, const TrainConfig& cfg) {
  auto loss = mae_loss_graph(tape, yhat, target);
  if (cfg.cos_reg_weight > 0.0) {
    const auto reg = cos_dist_graph(tape, yhat, target, cfg.cos_translation_only);
    if (reg >= 0)
      loss = tape.add(loss, tape.affine(reg, static_cast<T>(cfg.cos_reg_weight), T(0)));
  }
  return loss;
}

}  // namespace detail

struct TrainResultTag {};

// Epoch loop of seeded shuffling, swap augmentation, forward/backward,
// gradient accumulation to batch_pairs, and bias-corrected Adam at the
// scheduled rate. Non-finite losses abort with DivergedLoss; checkpoints
// already written stay on disk.
template <typename T>
std::pair<ModelParams<T>, TrainHistory> train(const std::vector<FramePair>& train_pairs,
                                              const std::vector<FramePair>& test_pairs,
                                              const ModelConfig& mcfg,
                                              const TrainConfig& cfg) {
  cfg.validate();
  mcfg.validate();
  if (train_pairs.empty()) throw InvalidConfig("training needs at least one pair");

  ModelParams<T> params = init_params<T>(mcfg, cfg.seed);
  AdamState<T> adam;
  TrainHistory history;

  if (!cfg.checkpoint_dir.empty())
    std::filesystem::create_directories(cfg.checkpoint_dir);

  const auto write_ckpt = [&](const std::string& stem) {
    if (cfg.checkpoint_dir.empty()) return;
    write_checkpoint(cfg.checkpoint_dir + "/" + stem + ".ckpt",
                     pack_checkpoint(params, &adam));
  };

  std::map<std::string, Tensor<T>> grad_acc;
  int acc_count = 0;

  const auto apply_step = [&](double lr) {
    if (acc_count == 0) return;
    for (auto& [name, g] : grad_acc)
      for (T& v : g.data) v /= static_cast<T>(acc_count);
    adam_step(params.tensors, grad_acc, adam, static_cast<T>(lr));
    grad_acc.clear();
    acc_count = 0;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg);

    std::vector<std::size_t> order(train_pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng::fork(cfg.seed, 0x5affe000ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

    Rng swap_rng = Rng::fork(cfg.seed, 0xa46000ULL + static_cast<std::uint64_t>(epoch));

    double train_loss_sum = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const FramePair pair =
          augment_swap(train_pairs[order[k]], cfg.swap_probability, swap_rng);

      const std::uint64_t sub_seed =
          splitmix64(cfg.seed ^ (static_cast<std::uint64_t>(epoch) << 20) ^ order[k]);
      double loss_value = 0.0;
      try {
        Tape<T> tape;
        const auto graph = model_forward_graph(tape, pair.p, pair.q, params, mcfg,
                                               Mode::Train, true, sub_seed);
        const auto loss =
            detail::pair_loss_graph(tape, graph.output, pair.target, cfg);
        loss_value = static_cast<double>(tape.value(loss).data[0]);
        if (!std::isfinite(loss_value))
          throw DivergedLoss("loss is not finite at epoch " + std::to_string(epoch));
        tape.backward(loss);
        for (const auto& [name, id] : graph.param_ids) {
          auto [it, created] = grad_acc.try_emplace(name, tape.grad(id));
          if (!created) {
            Tensor<T>& acc = it->second;
            const Tensor<T>& g = tape.grad(id);
            for (std::size_t i = 0; i < acc.data.size(); ++i)
              acc.data[i] += g.data[i];
          }
        }
      } catch (const NonFiniteValue& e) {
        throw DivergedLoss(std::string("non-finite value at epoch ") +
                           std::to_string(epoch) + " (" + e.what() + ")");
      }
      train_loss_sum += loss_value;
      ++acc_count;
      if (acc_count == cfg.batch_pairs) apply_step(lr);
    }
    apply_step(lr);  // leftover partial batch

    double test_loss_sum = 0.0;
    for (const FramePair& pair : test_pairs) {
      const PoseDelta pred = model_forward(pair.p, pair.q, params, mcfg, 0);
      double l = mae_loss(pair.target, pred);
      if (cfg.cos_reg_weight > 0.0) {
        const Eigen::VectorXd y = cfg.cos_translation_only
                                      ? Eigen::VectorXd(pair.target.t)
                                      : Eigen::VectorXd(pair.target.vec6());
        const Eigen::VectorXd yh =
            cfg.cos_translation_only ? Eigen::VectorXd(pred.t) : Eigen::VectorXd(pred.vec6());
        l += cfg.cos_reg_weight * cos_dist(y, yh);
      }
      test_loss_sum += l;
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.records.push_back(
        {epoch, train_loss_sum / static_cast<double>(train_pairs.size()),
         test_pairs.empty() ? 0.0 : test_loss_sum / static_cast<double>(test_pairs.size()),
         lr, seconds});

    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "epoch_%04d", epoch + 1);
      write_ckpt(stem);
    }
  }

  write_ckpt("final");
  return {std::move(params), std::move(history)};
}

}  // namespace lo
