#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace lo {

// Per-query neighbor index lists. Radius mode: up to n_n indices (the
// smallest qualifying indices) or the self-fallback singleton. kNN mode:
// exactly k indices, cycled when k exceeds the point count.
using NeighborLists = std::vector<std::vector<std::int32_t>>;

// Shared squared-distance kernel. Both the brute-force and the grid paths
// go through this so their floating-point results are bit-identical.
inline double dist2(double ax, double ay, double az, double bx, double by,
                    double bz) {
  const double dx = ax - bx;
  const double dy = ay - by;
  const double dz = az - bz;
  return dx * dx + dy * dy + dz * dz;
}

// Greedy max-min farthest point sampling starting at start_index.
// Distance ties break to the smallest index; already-selected indices are
// never re-picked, so the prefix of length min(n_fps, n) is duplicate-free
// even with coincident points. When n_fps > n the n selected indices cycle
// to length n_fps. Throws EmptyCloud for n = 0.
std::vector<std::int32_t> farthest_point_sampling(const Eigen::MatrixX3d& points,
                                                  std::int32_t n_fps,
                                                  std::int32_t start_index = 0);

// O(n * n_fps^2) reference that recomputes every min-distance from scratch.
std::vector<std::int32_t> farthest_point_sampling_brute(
    const Eigen::MatrixX3d& points, std::int32_t n_fps,
    std::int32_t start_index = 0);

// For each centroid (given as an index into points): the n_n smallest
// point indices with ||x_i - x_c|| <= r. A centroid with no qualifier
// gets exactly its own index. Voxel-grid accelerated, cell size = r.
NeighborLists radius_group(const Eigen::MatrixX3d& points,
                           const std::vector<std::int32_t>& centroid_indices,
                           double radius, std::int32_t n_n);

NeighborLists radius_group_brute(const Eigen::MatrixX3d& points,
                                 const std::vector<std::int32_t>& centroid_indices,
                                 double radius, std::int32_t n_n);

// For each query row: the k nearest point indices, ties by smaller index,
// cycled to length k when k > n. Grid ring search. Throws EmptyCloud for
// n = 0.
NeighborLists knn(const Eigen::MatrixX3d& queries,
                  const Eigen::MatrixX3d& points, std::int32_t k);

NeighborLists knn_brute(const Eigen::MatrixX3d& queries,
                        const Eigen::MatrixX3d& points, std::int32_t k);

// Point closest to the coordinate mean (ties to the lowest index); the
// canonical FPS start used by permutation-invariance checks.
std::int32_t centroid_most_index(const Eigen::MatrixX3d& points);

}  // namespace lo
