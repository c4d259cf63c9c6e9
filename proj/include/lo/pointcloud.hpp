#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "lo/geometry.hpp"

namespace lo {

// Point set with per-point feature channels. xyz in meters; for KITTI
// scans features is the single intensity channel (c = 1). xyz and
// features always agree on the point count.
struct PointCloud {
  Eigen::MatrixX3d xyz;
  Eigen::MatrixXd features;

  Eigen::Index size() const { return xyz.rows(); }
  Eigen::Index feature_width() const { return features.cols(); }
};

PointCloud make_cloud(Eigen::Index n, Eigen::Index c = 1);
bool cloud_finite(const PointCloud& cloud);

// Applies t to every point; features pass through.
PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t);

// Plane {x : normal . x + offset = 0} with unit normal.
struct PlaneModel {
  Eigen::Vector3d normal{0.0, 0.0, 1.0};
  double offset = 0.0;
  Eigen::Index inlier_count = 0;
};

struct PlaneRemovalResult {
  PointCloud cloud;
  PlaneModel plane;
};

// 3-point RANSAC for the dominant plane, least-squares refit on the
// winner's inliers, then removal of every point within `threshold` of the
// refit plane. Ties on inlier count go to the earlier iteration. If the
// best sample covers < 5% of the cloud the input is returned unchanged
// with inlier_count = 0. Throws TooFewPoints for n < 3.
PlaneRemovalResult remove_dominant_plane(const PointCloud& cloud,
                                         double threshold, int iterations,
                                         std::uint64_t rng_seed);

// Uniform sample without replacement down to n_max points, order-stable
// by original index; identity when the cloud is already small enough.
PointCloud random_subsample(const PointCloud& cloud, Eigen::Index n_max,
                            std::uint64_t rng_seed);

}  // namespace lo
