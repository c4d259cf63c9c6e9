#include "lo/training.hpp"

#include <cstdio>

namespace lo {

std::string TrainHistory::to_csv(bool include_seconds) const {
  std::string out = "epoch,train_loss,test_loss,lr,seconds\n";
  char line[160];
  for (const EpochRecord& r : records) {
    std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.3f\n", r.epoch,
                  r.train_loss, r.test_loss, r.lr,
                  include_seconds ? r.seconds : 0.0);
    out += line;
  }
  return out;
}

double mae_loss(const PoseDelta& y, const PoseDelta& yhat) {
  return (y.vec6() - yhat.vec6()).template lpNorm<1>() / 6.0;
}

double cos_dist(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size())
    throw ShapeMismatch("cos_dist vectors of different lengths");
  const double ny = y.norm();
  const double nh = yhat.norm();
  if (ny < 1e-12 || nh < 1e-12) return 0.0;
  return 1.0 - y.dot(yhat) / (ny * nh);
}

FramePair augment_swap(const FramePair& pair, double swap_probability, Rng& rng) {
  const bool do_swap = rng.uniform01() < swap_probability;
  if (!do_swap) return pair;
  FramePair swapped;
  swapped.p = pair.q;
  swapped.q = pair.p;
  swapped.target =
      transform_to_delta(invert(delta_to_transform(pair.target)));
  return swapped;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  double lr = cfg.lr_base;
  for (int decay : cfg.lr_decay_epochs)
    if (epoch >= decay) lr *= cfg.lr_decay_factor;
  return lr;
}

}  // namespace lo
