#include "lo/pointcloud.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "lo/errors.hpp"
#include "lo/rng.hpp"

namespace lo {

PointCloud make_cloud(Eigen::Index n, Eigen::Index c) {
  PointCloud cloud;
  cloud.xyz = Eigen::MatrixX3d::Zero(n, 3);
  cloud.features = Eigen::MatrixXd::Zero(n, c);
  return cloud;
}

bool cloud_finite(const PointCloud& cloud) {
  return cloud.xyz.allFinite() && cloud.features.allFinite();
}

PointCloud transform_cloud(const PointCloud& cloud, const RigidTransform& t) {
  PointCloud out;
  const Eigen::Matrix3d R = t.rotation();
  const Eigen::Vector3d tr = t.translation();
  out.xyz = (cloud.xyz * R.transpose()).rowwise() + tr.transpose();
  out.features = cloud.features;
  return out;
}

namespace {

PointCloud gather_points(const PointCloud& cloud,
                         const std::vector<Eigen::Index>& idx) {
  PointCloud out = make_cloud(static_cast<Eigen::Index>(idx.size()),
                              cloud.feature_width());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.xyz.row(static_cast<Eigen::Index>(k)) = cloud.xyz.row(idx[k]);
    out.features.row(static_cast<Eigen::Index>(k)) = cloud.features.row(idx[k]);
  }
  return out;
}

// Least-squares plane through the given points: centroid plus smallest
// principal direction of the scatter matrix.
PlaneModel fit_plane_lsq(const PointCloud& cloud,
                         const std::vector<Eigen::Index>& idx) {
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (Eigen::Index i : idx) centroid += cloud.xyz.row(i).transpose();
  centroid /= static_cast<double>(idx.size());

  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  for (Eigen::Index i : idx) {
    const Eigen::Vector3d d = cloud.xyz.row(i).transpose() - centroid;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter);
  PlaneModel model;
  model.normal = es.eigenvectors().col(0).normalized();
  model.offset = -model.normal.dot(centroid);
  return model;
}

}  // namespace

PlaneRemovalResult remove_dominant_plane(const PointCloud& cloud,
                                         double threshold, int iterations,
                                         std::uint64_t rng_seed) {
  const Eigen::Index n = cloud.size();
  if (n < 3) {
    throw TooFewPoints("plane RANSAC needs at least 3 points, got " +
                       std::to_string(n));
  }

  Rng rng(rng_seed);
  Eigen::Vector3d best_normal(0.0, 0.0, 1.0);
  double best_offset = 0.0;
  Eigen::Index best_count = -1;

  for (int it = 0; it < iterations; ++it) {
    const Eigen::Index i0 = static_cast<Eigen::Index>(rng.uniform_index(n));
    Eigen::Index i1 = i0, i2 = i0;
    while (i1 == i0) i1 = static_cast<Eigen::Index>(rng.uniform_index(n));
    while (i2 == i0 || i2 == i1)
      i2 = static_cast<Eigen::Index>(rng.uniform_index(n));

    const Eigen::Vector3d p0 = cloud.xyz.row(i0).transpose();
    const Eigen::Vector3d cr = (cloud.xyz.row(i1).transpose() - p0)
                                   .cross(cloud.xyz.row(i2).transpose() - p0);
    const double norm = cr.norm();
    if (norm < 1e-12) continue;  // degenerate sample

    const Eigen::Vector3d normal = cr / norm;
    const double offset = -normal.dot(p0);
    const Eigen::Index count =
        (((cloud.xyz * normal).array() + offset).abs() <= threshold).count();
    if (count > best_count) {
      best_count = count;
      best_normal = normal;
      best_offset = offset;
    }
  }

  PlaneRemovalResult result;
  if (best_count < 0 ||
      static_cast<double>(best_count) < 0.05 * static_cast<double>(n)) {
    result.cloud = cloud;
    result.plane.normal = best_normal;
    result.plane.offset = best_offset;
    result.plane.inlier_count = 0;
    return result;
  }

  std::vector<Eigen::Index> winner_inliers;
  winner_inliers.reserve(static_cast<std::size_t>(best_count));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(best_normal.dot(cloud.xyz.row(i).transpose()) + best_offset) <=
        threshold) {
      winner_inliers.push_back(i);
    }
  }

  PlaneModel refit = fit_plane_lsq(cloud, winner_inliers);

  std::vector<Eigen::Index> kept;
  Eigen::Index removed = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dist =
        std::abs(refit.normal.dot(cloud.xyz.row(i).transpose()) + refit.offset);
    if (dist <= threshold) {
      ++removed;
    } else {
      kept.push_back(i);
    }
  }
  refit.inlier_count = removed;
  result.cloud = gather_points(cloud, kept);
  result.plane = refit;
  return result;
}

PointCloud random_subsample(const PointCloud& cloud, Eigen::Index n_max,
                            std::uint64_t rng_seed) {
  const Eigen::Index n = cloud.size();
  if (n_max < 1) throw InvalidConfig("random_subsample needs n_max >= 1");
  if (n <= n_max) return cloud;

  // Partial Fisher-Yates over the index array, then restore input order.
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(rng_seed);
  for (Eigen::Index k = 0; k < n_max; ++k) {
    const std::size_t j =
        static_cast<std::size_t>(k) +
        rng.uniform_index(static_cast<std::size_t>(n - k));
    std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(n_max));
  std::sort(idx.begin(), idx.end());
  return gather_points(cloud, idx);
}

}  // namespace lo
