#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lo/autodiff.hpp"
#include "lo/checkpoint.hpp"
#include "lo/geometry.hpp"
#include "lo/neighbors.hpp"
#include "lo/pointcloud.hpp"
#include "lo/rng.hpp"

namespace lo {

// Per-layer output widths; the input width of the first layer is implicit
// from context (3+c for SA, 3+2c for FE, c for MPN, the global feature
// width for the head).
struct MlpSpec {
  std::vector<std::int64_t> widths;
};

struct SaConfig {
  double radius = 1.0;
  std::int32_t n_fps = 1;
  std::int32_t n_n = 1;
  MlpSpec mlp;
};

struct FeConfig {
  std::int32_t n_n = 1;
  MlpSpec mlp;
};

// Full pipeline configuration. The defaults are the published 61,290-
// parameter model; reduced() is a desk-scale variant with the same
// topology for tests and verification.
struct ModelConfig {
  SaConfig sa1{1.0, 1024, 8, {{4, 8, 16, 32}}};
  FeConfig fe{16, {{32, 64}}};
  SaConfig sa2{4.0, 256, 32, {{64, 64}}};
  SaConfig sa3{8.0, 64, 8, {{64, 64}}};
  MlpSpec mpn{{64, 256}};
  MlpSpec head{{64, 6}};
  std::int64_t input_feature_channels = 1;
  Eigen::Index pre_subsample = 16384;  // 0 = feed clouds whole
  bool canonical_fps_start = false;    // start FPS at the centroid-most point

  static ModelConfig table1() { return {}; }

  static ModelConfig reduced() {
    ModelConfig cfg;
    cfg.sa1 = {2.0, 64, 8, {{8, 16}}};
    cfg.fe = {8, {{32}}};
    cfg.sa2 = {4.0, 32, 8, {{32}}};
    cfg.sa3 = {8.0, 16, 4, {{32}}};
    cfg.mpn = {{64}};
    cfg.head = {{32, 6}};
    cfg.pre_subsample = 0;
    return cfg;
  }

  void validate() const {
    for (const SaConfig* sa : {&sa1, &sa2, &sa3}) {
      if (sa->radius <= 0.0 || sa->n_fps < 1 || sa->n_n < 1 || sa->mlp.widths.empty())
        throw InvalidConfig("bad set-abstraction config");
    }
    if (fe.n_n < 1 || fe.mlp.widths.empty()) throw InvalidConfig("bad FE config");
    if (mpn.widths.empty() || head.widths.empty())
      throw InvalidConfig("bad MPN/head config");
    if (head.widths.back() != 6)
      throw InvalidConfig("head must end in 6 outputs");
    for (const MlpSpec* spec : {&sa1.mlp, &fe.mlp, &sa2.mlp, &sa3.mlp, &mpn, &head}) {
      for (std::int64_t w : spec->widths)
        if (w < 1) throw InvalidConfig("MLP widths must be >= 1");
    }
    if (input_feature_channels < 1)
      throw InvalidConfig("need at least one input feature channel");
  }
};

// One linear layer plus, unless it is the network-final layer, batch-norm
// affine parameters and running statistics. Tensor keys:
//   <block>.<layer>.w [in,out], .b [out], .gamma/.beta/.rmean/.rvar [out]
template <typename T>
struct ModelParams {
  std::map<std::string, Tensor<T>> tensors;

  static bool is_trainable(const std::string& name) {
    const auto dot = name.rfind('.');
    const std::string suffix = dot == std::string::npos ? name : name.substr(dot + 1);
    return suffix != "rmean" && suffix != "rvar";
  }
};

namespace detail {

struct LayerShape {
  std::string prefix;  // "sa1.0", ...
  std::int64_t in = 0;
  std::int64_t out = 0;
  bool has_bn = true;
};

// The pipeline's layer list in execution order, with the implicit input
// widths resolved. Only the very last head layer goes without batch norm.
inline std::vector<LayerShape> layer_shapes(const ModelConfig& cfg) {
  std::vector<LayerShape> layers;
  auto block = [&layers](const std::string& name, std::int64_t in,
                         const MlpSpec& spec) {
    for (std::size_t l = 0; l < spec.widths.size(); ++l) {
      layers.push_back({name + "." + std::to_string(l), in, spec.widths[l], true});
      in = spec.widths[l];
    }
    return in;
  };
  const std::int64_t c = cfg.input_feature_channels;
  const std::int64_t c1 = block("sa1", 3 + c, cfg.sa1.mlp);
  const std::int64_t cf = block("fe", 3 + 2 * c1, cfg.fe.mlp);
  const std::int64_t c2 = block("sa2", 3 + cf, cfg.sa2.mlp);
  const std::int64_t c3 = block("sa3", 3 + c2, cfg.sa3.mlp);
  const std::int64_t cm = block("mpn", c3, cfg.mpn);
  block("head", cm, cfg.head);
  layers.back().has_bn = false;
  return layers;
}

}  // namespace detail

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights, zero biases, unit
// batch-norm affine, (0, 1) running statistics.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> params;
  Rng rng = Rng::fork(seed, 0x1417);
  for (const auto& layer : detail::layer_shapes(cfg)) {
    Tensor<T> w = Tensor<T>::zeros({layer.in, layer.out});
    const double bound = std::sqrt(1.0 / static_cast<double>(layer.in));
    for (T& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    params.tensors.emplace(layer.prefix + ".w", std::move(w));
    params.tensors.emplace(layer.prefix + ".b", Tensor<T>::zeros({layer.out}));
    if (layer.has_bn) {
      params.tensors.emplace(layer.prefix + ".gamma",
                             Tensor<T>::full({layer.out}, T(1)));
      params.tensors.emplace(layer.prefix + ".beta", Tensor<T>::zeros({layer.out}));
      params.tensors.emplace(layer.prefix + ".rmean", Tensor<T>::zeros({layer.out}));
      params.tensors.emplace(layer.prefix + ".rvar",
                             Tensor<T>::full({layer.out}, T(1)));
    }
  }
  return params;
}

// Trainable scalars: weights, biases, batch-norm gamma/beta. Running
// statistics are state, not parameters.
template <typename T>
std::int64_t count_parameters(const ModelParams<T>& params) {
  std::int64_t n = 0;
  for (const auto& [name, t] : params.tensors)
    if (ModelParams<T>::is_trainable(name)) n += t.numel();
  return n;
}

template <typename T>
struct ModelGraph {
  typename Tape<T>::Id output = 0;  // [1, 6]
  std::map<std::string, typename Tape<T>::Id> param_ids;
};

namespace detail {

template <typename T>
Tensor<T> to_tensor(const Eigen::MatrixXd& m) {
  Tensor<T> t = Tensor<T>::zeros({m.rows(), m.cols()});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t(r, c) = static_cast<T>(m(r, c));
  return t;
}

template <typename T>
class GraphBuilder {
 public:
  GraphBuilder(Tape<T>& tape, ModelParams<T>& params, Mode mode,
               bool update_running)
      : tape_(tape), params_(params), mode_(mode), update_running_(update_running) {
    for (auto& [name, t] : params.tensors) {
      if (ModelParams<T>::is_trainable(name))
        ids_.emplace(name, tape.input(t, mode == Mode::Train));
    }
  }

  const std::map<std::string, typename Tape<T>::Id>& param_ids() const {
    return ids_;
  }

  // linear -> batch norm -> ReLU, shared across all rows. The head's
  // batch norm runs on a single global vector per pair, so it normalizes
  // with frozen (0, 1) statistics in both modes; everything else uses
  // batch statistics in train mode.
  typename Tape<T>::Id mlp(typename Tape<T>::Id x, const std::string& block,
                           std::size_t n_layers, bool final_is_bare,
                           bool frozen_stats = false) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      const std::string p = block + "." + std::to_string(l);
      x = tape_.linear(x, ids_.at(p + ".w"), ids_.at(p + ".b"));
      if (final_is_bare && l + 1 == n_layers) break;
      Tensor<T>& rmean = params_.tensors.at(p + ".rmean");
      Tensor<T>& rvar = params_.tensors.at(p + ".rvar");
      const bool frozen = frozen_stats;
      x = tape_.batch_norm(
          x, ids_.at(p + ".gamma"), ids_.at(p + ".beta"),
          frozen ? Mode::Infer : mode_, &rmean, &rvar,
          (!frozen && update_running_) ? &rmean : nullptr,
          (!frozen && update_running_) ? &rvar : nullptr);
      x = tape_.relu(x);
    }
    return x;
  }

  // Set abstraction: FPS centroids, capped radius grouping, shared MLP on
  // (f_i, x_i - x'_j), channelwise max per centroid.
  struct SaOut {
    Eigen::MatrixX3d xyz;
    typename Tape<T>::Id features;
  };

  SaOut set_abstraction(const Eigen::MatrixX3d& xyz, typename Tape<T>::Id features,
                        const SaConfig& cfg, const std::string& block,
                        bool canonical_start) {
    const std::int32_t start =
        canonical_start ? centroid_most_index(xyz) : 0;
    const std::vector<std::int32_t> centroids =
        farthest_point_sampling(xyz, cfg.n_fps, start);
    const NeighborLists groups =
        radius_group(xyz, centroids, cfg.radius, cfg.n_n);

    std::int64_t rows = 0;
    for (const auto& g : groups) rows += static_cast<std::int64_t>(g.size());

    std::vector<std::int64_t> gather;
    gather.reserve(static_cast<std::size_t>(rows));
    Eigen::MatrixXd rel(rows, 3);
    std::vector<std::pair<std::int64_t, std::int64_t>> segments;
    segments.reserve(groups.size());
    std::int64_t row = 0;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      const std::int32_t cj = centroids[j];
      segments.emplace_back(row, static_cast<std::int64_t>(groups[j].size()));
      for (std::int32_t i : groups[j]) {
        gather.push_back(i);
        rel.row(row) = xyz.row(i) - xyz.row(cj);
        ++row;
      }
    }

    auto in = tape_.concat_cols(tape_.gather_rows(features, gather),
                                tape_.input(to_tensor<T>(rel), false));
    const auto out = tape_.max_pool_segments(
        mlp(in, block, block_width(block), false), std::move(segments));

    SaOut result;
    result.xyz.resize(static_cast<Eigen::Index>(centroids.size()), 3);
    for (std::size_t j = 0; j < centroids.size(); ++j)
      result.xyz.row(static_cast<Eigen::Index>(j)) = xyz.row(centroids[j]);
    result.features = out;
    return result;
  }

  // Flow embedding: kNN from each p-point into q, shared MLP on
  // (f_i, g_j, y_j - x_i), channelwise max per p-point.
  typename Tape<T>::Id flow_embedding(const Eigen::MatrixX3d& p_xyz,
                                      typename Tape<T>::Id p_features,
                                      const Eigen::MatrixX3d& q_xyz,
                                      typename Tape<T>::Id q_features,
                                      const FeConfig& cfg) {
    const NeighborLists nn = knn(p_xyz, q_xyz, cfg.n_n);
    const std::int64_t n = p_xyz.rows();
    const std::int64_t k = cfg.n_n;

    std::vector<std::int64_t> gather_p, gather_q;
    gather_p.reserve(static_cast<std::size_t>(n * k));
    gather_q.reserve(static_cast<std::size_t>(n * k));
    Eigen::MatrixXd rel(n * k, 3);
    std::vector<std::pair<std::int64_t, std::int64_t>> segments;
    segments.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      segments.emplace_back(i * k, k);
      for (std::int32_t j : nn[static_cast<std::size_t>(i)]) {
        gather_p.push_back(i);
        gather_q.push_back(j);
        rel.row(static_cast<Eigen::Index>(gather_p.size()) - 1) =
            q_xyz.row(j) - p_xyz.row(i);
      }
    }

    auto in = tape_.concat_cols(
        tape_.concat_cols(tape_.gather_rows(p_features, gather_p),
                          tape_.gather_rows(q_features, gather_q)),
        tape_.input(to_tensor<T>(rel), false));
    return tape_.max_pool_segments(mlp(in, "fe", block_width("fe"), false),
                                   std::move(segments));
  }

  // Shared MLP per feature vector, then channelwise max over the set.
  typename Tape<T>::Id mini_pointnet(typename Tape<T>::Id features) {
    const std::int64_t n = tape_.value(features).shape[0];
    return tape_.max_pool_segments(
        mlp(features, "mpn", block_width("mpn"), false), {{0, n}});
  }

  typename Tape<T>::Id head(typename Tape<T>::Id global_feature) {
    return mlp(global_feature, "head", block_width("head"), true, true);
  }

  void set_block_widths(const ModelConfig& cfg) {
    widths_ = {{"sa1", cfg.sa1.mlp.widths.size()},
               {"fe", cfg.fe.mlp.widths.size()},
               {"sa2", cfg.sa2.mlp.widths.size()},
               {"sa3", cfg.sa3.mlp.widths.size()},
               {"mpn", cfg.mpn.widths.size()},
               {"head", cfg.head.widths.size()}};
  }

 private:
  std::size_t block_width(const std::string& block) const {
    return widths_.at(block);
  }

  Tape<T>& tape_;
  ModelParams<T>& params_;
  Mode mode_;
  bool update_running_;
  std::map<std::string, typename Tape<T>::Id> ids_;
  std::map<std::string, std::size_t> widths_;
};

}  // namespace detail

// Builds the full forward graph for one frame pair. SA1 runs with shared
// weights on both clouds; the output id holds the [1,6] prediction
// (translation meters, Euler degrees).
template <typename T>
ModelGraph<T> model_forward_graph(Tape<T>& tape, const PointCloud& p,
                                  const PointCloud& q, ModelParams<T>& params,
                                  const ModelConfig& cfg, Mode mode,
                                  bool update_running_stats,
                                  std::uint64_t subsample_seed) {
  cfg.validate();
  if (p.size() < 1 || q.size() < 1) throw EmptyCloud("model_forward needs points");
  if (p.feature_width() != cfg.input_feature_channels ||
      q.feature_width() != cfg.input_feature_channels)
    throw ShapeMismatch("input feature width != config");

  const PointCloud* pp = &p;
  const PointCloud* qq = &q;
  PointCloud p_sub, q_sub;
  if (cfg.pre_subsample > 0) {
    p_sub = random_subsample(p, cfg.pre_subsample, splitmix64(subsample_seed));
    q_sub = random_subsample(q, cfg.pre_subsample, splitmix64(subsample_seed + 1));
    pp = &p_sub;
    qq = &q_sub;
  }

  detail::GraphBuilder<T> builder(tape, params, mode, update_running_stats);
  builder.set_block_widths(cfg);

  const auto p_feat = tape.input(detail::to_tensor<T>(pp->features), false);
  const auto q_feat = tape.input(detail::to_tensor<T>(qq->features), false);

  const auto p1 = builder.set_abstraction(pp->xyz, p_feat, cfg.sa1, "sa1",
                                          cfg.canonical_fps_start);
  const auto q1 = builder.set_abstraction(qq->xyz, q_feat, cfg.sa1, "sa1",
                                          cfg.canonical_fps_start);

  const auto fe = builder.flow_embedding(p1.xyz, p1.features, q1.xyz,
                                         q1.features, cfg.fe);

  const auto p2 = builder.set_abstraction(p1.xyz, fe, cfg.sa2, "sa2",
                                          cfg.canonical_fps_start);
  const auto p3 = builder.set_abstraction(p2.xyz, p2.features, cfg.sa3, "sa3",
                                          cfg.canonical_fps_start);

  const auto global_feature = builder.mini_pointnet(p3.features);

  ModelGraph<T> graph;
  graph.output = builder.head(global_feature);
  graph.param_ids = builder.param_ids();
  return graph;
}

// Inference wrapper: no gradients, running statistics untouched.
template <typename T>
PoseDelta model_forward(const PointCloud& p, const PointCloud& q,
                        ModelParams<T>& params, const ModelConfig& cfg,
                        std::uint64_t subsample_seed = 0) {
  Tape<T> tape;
  const auto graph = model_forward_graph(tape, p, q, params, cfg, Mode::Infer,
                                         false, subsample_seed);
  const Tensor<T>& out = tape.value(graph.output);
  PoseDelta d;
  for (int k = 0; k < 3; ++k) {
    d.t(k) = static_cast<double>(out.data[static_cast<std::size_t>(k)]);
    d.r(k) = static_cast<double>(out.data[static_cast<std::size_t>(3 + k)]);
  }
  return d;
}

// Checkpoint packing: parameter tensors under "param.", Adam moments
// under "adam.m."/"adam.v.", the step counter as a scalar.
template <typename T>
CheckpointData pack_checkpoint(const ModelParams<T>& params,
                               const AdamState<T>* adam = nullptr) {
  CheckpointData data;
  auto& dest = [&]() -> std::map<std::string, Tensor<T>>& {
    if constexpr (std::is_same_v<T, float>) return data.f32;
    else return data.f64;
  }();
  for (const auto& [name, t] : params.tensors) dest.emplace("param." + name, t);
  if (adam != nullptr) {
    for (const auto& [name, t] : adam->m) dest.emplace("adam.m." + name, t);
    for (const auto& [name, t] : adam->v) dest.emplace("adam.v." + name, t);
    dest.emplace("adam.step", Tensor<T>::scalar(static_cast<T>(adam->step)));
  }
  return data;
}

template <typename T>
void unpack_checkpoint(const CheckpointData& data, ModelParams<T>& params,
                       AdamState<T>* adam = nullptr) {
  const auto& src = [&]() -> const std::map<std::string, Tensor<T>>& {
    if constexpr (std::is_same_v<T, float>) return data.f32;
    else return data.f64;
  }();
  params.tensors.clear();
  for (const auto& [name, t] : src) {
    if (name.rfind("param.", 0) == 0) params.tensors.emplace(name.substr(6), t);
  }
  if (params.tensors.empty())
    throw MalformedCheckpoint("checkpoint holds no parameters at this precision");
  if (adam != nullptr) {
    adam->m.clear();
    adam->v.clear();
    adam->step = 0;
    for (const auto& [name, t] : src) {
      if (name.rfind("adam.m.", 0) == 0) adam->m.emplace(name.substr(7), t);
      else if (name.rfind("adam.v.", 0) == 0) adam->v.emplace(name.substr(7), t);
      else if (name == "adam.step") adam->step = static_cast<std::int64_t>(t.data[0]);
    }
  }
}

}  // namespace lo
