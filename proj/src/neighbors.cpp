#include "lo/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "lo/errors.hpp"

namespace lo {

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Uniform voxel grid over the points. Cells hold point indices in
// ascending order because points are inserted in index order.
class VoxelGrid {
 public:
  VoxelGrid(const Eigen::MatrixX3d& points, double cell)
      : points_(points), cell_(cell) {
    const Eigen::Index n = points.rows();
    cells_.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      cells_[key_of(points(i, 0), points(i, 1), points(i, 2))].push_back(
          static_cast<std::int32_t>(i));
    }
  }

  CellKey key_of(double x, double y, double z) const {
    return CellKey{static_cast<std::int64_t>(std::floor(x / cell_)),
                   static_cast<std::int64_t>(std::floor(y / cell_)),
                   static_cast<std::int64_t>(std::floor(z / cell_))};
  }

  const std::vector<std::int32_t>* cell(const CellKey& k) const {
    auto it = cells_.find(k);
    return it == cells_.end() ? nullptr : &it->second;
  }

  double cell_size() const { return cell_; }

 private:
  const Eigen::MatrixX3d& points_;
  double cell_;
  std::unordered_map<CellKey, std::vector<std::int32_t>, CellKeyHash> cells_;
};

inline double point_dist2(const Eigen::MatrixX3d& a, Eigen::Index i,
                          const Eigen::MatrixX3d& b, Eigen::Index j) {
  return dist2(a(i, 0), a(i, 1), a(i, 2), b(j, 0), b(j, 1), b(j, 2));
}

// Selection rule shared by both FPS paths: largest min-distance wins,
// ties to the smallest index, selected points excluded.
std::int32_t argmax_unselected(const std::vector<double>& mind2,
                               const std::vector<char>& selected) {
  std::int32_t best = -1;
  double best_d = -1.0;
  for (std::size_t i = 0; i < mind2.size(); ++i) {
    if (!selected[i] && mind2[i] > best_d) {
      best_d = mind2[i];
      best = static_cast<std::int32_t>(i);
    }
  }
  return best;
}

std::vector<std::int32_t> cycle_to_length(std::vector<std::int32_t> idx,
                                          std::int32_t target) {
  const std::size_t base = idx.size();
  idx.reserve(static_cast<std::size_t>(target));
  for (std::size_t i = base; i < static_cast<std::size_t>(target); ++i) {
    idx.push_back(idx[i % base]);
  }
  return idx;
}

}  // namespace

std::vector<std::int32_t> farthest_point_sampling(const Eigen::MatrixX3d& points,
                                                  std::int32_t n_fps,
                                                  std::int32_t start_index) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw EmptyCloud("farthest_point_sampling on empty cloud");
  if (n_fps < 1) throw InvalidConfig("n_fps must be >= 1");
  if (start_index < 0 || start_index >= n)
    throw InvalidConfig("FPS start index out of range");

  const std::int32_t n_select = static_cast<std::int32_t>(
      std::min<Eigen::Index>(n, static_cast<Eigen::Index>(n_fps)));
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(n_fps));
  out.push_back(start_index);

  std::vector<double> mind2(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  std::vector<char> selected(static_cast<std::size_t>(n), 0);
  selected[static_cast<std::size_t>(start_index)] = 1;

  // Column-major MatrixX3d gives contiguous per-axis arrays.
  const double* xs = points.col(0).data();
  const double* ys = points.col(1).data();
  const double* zs = points.col(2).data();

  std::int32_t last = start_index;
  for (std::int32_t s = 1; s < n_select; ++s) {
    const double lx = xs[last], ly = ys[last], lz = zs[last];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = dist2(xs[i], ys[i], zs[i], lx, ly, lz);
      if (d < mind2[static_cast<std::size_t>(i)])
        mind2[static_cast<std::size_t>(i)] = d;
    }
    last = argmax_unselected(mind2, selected);
    selected[static_cast<std::size_t>(last)] = 1;
    out.push_back(last);
  }

  if (n_fps > n_select) out = cycle_to_length(std::move(out), n_fps);
  return out;
}

std::vector<std::int32_t> farthest_point_sampling_brute(
    const Eigen::MatrixX3d& points, std::int32_t n_fps,
    std::int32_t start_index) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw EmptyCloud("farthest_point_sampling on empty cloud");
  if (n_fps < 1) throw InvalidConfig("n_fps must be >= 1");
  if (start_index < 0 || start_index >= n)
    throw InvalidConfig("FPS start index out of range");

  const std::int32_t n_select = static_cast<std::int32_t>(
      std::min<Eigen::Index>(n, static_cast<Eigen::Index>(n_fps)));
  std::vector<std::int32_t> out{start_index};
  std::vector<char> selected(static_cast<std::size_t>(n), 0);
  selected[static_cast<std::size_t>(start_index)] = 1;

  for (std::int32_t s = 1; s < n_select; ++s) {
    std::vector<double> mind2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::int32_t j : out) {
        best = std::min(best, point_dist2(points, i, points, j));
      }
      mind2[static_cast<std::size_t>(i)] = best;
    }
    const std::int32_t pick = argmax_unselected(mind2, selected);
    selected[static_cast<std::size_t>(pick)] = 1;
    out.push_back(pick);
  }

  if (n_fps > n_select) out = cycle_to_length(std::move(out), n_fps);
  return out;
}

NeighborLists radius_group(const Eigen::MatrixX3d& points,
                           const std::vector<std::int32_t>& centroid_indices,
                           double radius, std::int32_t n_n) {
  if (radius <= 0.0) throw InvalidConfig("grouping radius must be positive");
  if (n_n < 1) throw InvalidConfig("n_n must be >= 1");
  const double r2 = radius * radius;
  const VoxelGrid grid(points, radius);

  NeighborLists out(centroid_indices.size());
  std::vector<std::int32_t> qualifiers;
  for (std::size_t c = 0; c < centroid_indices.size(); ++c) {
    const std::int32_t ci = centroid_indices[c];
    const double cx = points(ci, 0), cy = points(ci, 1), cz = points(ci, 2);
    const CellKey center = grid.key_of(cx, cy, cz);
    qualifiers.clear();
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto* cell =
              grid.cell({center.x + dx, center.y + dy, center.z + dz});
          if (cell == nullptr) continue;
          for (std::int32_t i : *cell) {
            if (dist2(points(i, 0), points(i, 1), points(i, 2), cx, cy, cz) <=
                r2) {
              qualifiers.push_back(i);
            }
          }
        }
      }
    }
    if (qualifiers.empty()) {
      out[c] = {ci};
      continue;
    }
    std::sort(qualifiers.begin(), qualifiers.end());
    if (qualifiers.size() > static_cast<std::size_t>(n_n))
      qualifiers.resize(static_cast<std::size_t>(n_n));
    out[c] = qualifiers;
  }
  return out;
}

NeighborLists radius_group_brute(const Eigen::MatrixX3d& points,
                                 const std::vector<std::int32_t>& centroid_indices,
                                 double radius, std::int32_t n_n) {
  if (radius <= 0.0) throw InvalidConfig("grouping radius must be positive");
  if (n_n < 1) throw InvalidConfig("n_n must be >= 1");
  const double r2 = radius * radius;
  const Eigen::Index n = points.rows();

  NeighborLists out(centroid_indices.size());
  for (std::size_t c = 0; c < centroid_indices.size(); ++c) {
    const std::int32_t ci = centroid_indices[c];
    std::vector<std::int32_t> qualifiers;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (point_dist2(points, i, points, ci) <= r2) {
        qualifiers.push_back(static_cast<std::int32_t>(i));
      }
    }
    if (qualifiers.empty()) {
      out[c] = {ci};
    } else {
      if (qualifiers.size() > static_cast<std::size_t>(n_n))
        qualifiers.resize(static_cast<std::size_t>(n_n));
      out[c] = std::move(qualifiers);
    }
  }
  return out;
}

namespace {

// (d2, index) candidates ordered ascending; the shared kNN tie rule.
struct Cand {
  double d2;
  std::int32_t idx;
  bool operator<(const Cand& o) const {
    return d2 < o.d2 || (d2 == o.d2 && idx < o.idx);
  }
};

std::vector<std::int32_t> take_k_cycled(std::vector<Cand>& cands,
                                        std::int32_t k) {
  std::sort(cands.begin(), cands.end());
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(k));
  const std::size_t base = std::min<std::size_t>(cands.size(),
                                                 static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < base; ++i) out.push_back(cands[i].idx);
  for (std::size_t i = base; i < static_cast<std::size_t>(k); ++i) {
    out.push_back(out[i % base]);
  }
  return out;
}

double knn_cell_size(const Eigen::MatrixX3d& points) {
  const Eigen::Vector3d lo = points.colwise().minCoeff();
  const Eigen::Vector3d hi = points.colwise().maxCoeff();
  const Eigen::Vector3d ext = hi - lo;
  const double max_ext = ext.maxCoeff();
  if (max_ext <= 0.0) return 1.0;  // all points coincide
  // Aim for O(1) points per cell on a near-uniform cloud. Degenerate axes
  // are left out of the density estimate: a planar or collinear cloud must
  // not shrink the cell toward zero.
  double measure = 1.0;
  int live_axes = 0;
  for (int k = 0; k < 3; ++k) {
    if (ext(k) > 1e-9 * max_ext) {
      measure *= ext(k);
      ++live_axes;
    }
  }
  const double cell = std::pow(
      measure / static_cast<double>(std::max<Eigen::Index>(points.rows(), 1)),
      1.0 / static_cast<double>(live_axes));
  // Keep the keys per axis bounded so the ring walk stays cheap even on
  // skewed inputs.
  return std::max(cell, max_ext / 64.0);
}

}  // namespace

NeighborLists knn(const Eigen::MatrixX3d& queries,
                  const Eigen::MatrixX3d& points, std::int32_t k) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw EmptyCloud("knn on empty cloud");
  if (k < 1) throw InvalidConfig("k must be >= 1");

  const double cell = knn_cell_size(points);
  const VoxelGrid grid(points, cell);

  // Grid key bounds, for ring clipping.
  const Eigen::Vector3d lo_pt = points.colwise().minCoeff();
  const Eigen::Vector3d hi_pt = points.colwise().maxCoeff();
  const CellKey key_lo = grid.key_of(lo_pt.x(), lo_pt.y(), lo_pt.z());
  const CellKey key_hi = grid.key_of(hi_pt.x(), hi_pt.y(), hi_pt.z());

  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k),
                                                 static_cast<std::size_t>(n));

  NeighborLists out(static_cast<std::size_t>(queries.rows()));
  std::vector<Cand> cands;
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    const double qx = queries(q, 0), qy = queries(q, 1), qz = queries(q, 2);
    const CellKey qk = grid.key_of(qx, qy, qz);
    cands.clear();

    const std::int64_t max_ring =
        std::max({std::max(std::abs(qk.x - key_lo.x), std::abs(qk.x - key_hi.x)),
                  std::max(std::abs(qk.y - key_lo.y), std::abs(qk.y - key_hi.y)),
                  std::max(std::abs(qk.z - key_lo.z), std::abs(qk.z - key_hi.z))});

    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
      for (std::int64_t dx = -ring; dx <= ring; ++dx) {
        for (std::int64_t dy = -ring; dy <= ring; ++dy) {
          for (std::int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
              continue;  // shell only
            const CellKey ck{qk.x + dx, qk.y + dy, qk.z + dz};
            if (ck.x < key_lo.x || ck.x > key_hi.x || ck.y < key_lo.y ||
                ck.y > key_hi.y || ck.z < key_lo.z || ck.z > key_hi.z)
              continue;
            const auto* cl = grid.cell(ck);
            if (cl == nullptr) continue;
            for (std::int32_t i : *cl) {
              cands.push_back(
                  {dist2(points(i, 0), points(i, 1), points(i, 2), qx, qy, qz),
                   i});
            }
          }
        }
      }
      // Cells beyond ring r start at Chebyshev distance r+1, so their
      // points lie at least ring*cell away. Once the kth-best candidate
      // beats that bound the remaining shells cannot improve the result.
      if (cands.size() >= want) {
        std::nth_element(cands.begin(),
                         cands.begin() + static_cast<std::ptrdiff_t>(want - 1),
                         cands.end());
        const double worst = cands[want - 1].d2;
        const double bound = static_cast<double>(ring) * cell;
        if (bound * bound > worst) break;
      }
    }
    out[static_cast<std::size_t>(q)] = take_k_cycled(cands, k);
  }
  return out;
}

NeighborLists knn_brute(const Eigen::MatrixX3d& queries,
                        const Eigen::MatrixX3d& points, std::int32_t k) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw EmptyCloud("knn on empty cloud");
  if (k < 1) throw InvalidConfig("k must be >= 1");

  NeighborLists out(static_cast<std::size_t>(queries.rows()));
  std::vector<Cand> cands(static_cast<std::size_t>(n));
  for (Eigen::Index q = 0; q < queries.rows(); ++q) {
    for (Eigen::Index i = 0; i < n; ++i) {
      cands[static_cast<std::size_t>(i)] = {
          dist2(points(i, 0), points(i, 1), points(i, 2), queries(q, 0),
                queries(q, 1), queries(q, 2)),
          static_cast<std::int32_t>(i)};
    }
    out[static_cast<std::size_t>(q)] = take_k_cycled(cands, k);
  }
  return out;
}

std::int32_t centroid_most_index(const Eigen::MatrixX3d& points) {
  if (points.rows() == 0) throw EmptyCloud("centroid of empty cloud");
  const Eigen::RowVector3d mean = points.colwise().mean();
  std::int32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double d = dist2(points(i, 0), points(i, 1), points(i, 2), mean(0),
                           mean(1), mean(2));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::int32_t>(i);
    }
  }
  return best;
}

}  // namespace lo
