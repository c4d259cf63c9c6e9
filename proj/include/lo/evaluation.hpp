#pragma once

#include <map>
#include <string>
#include <vector>

#include "lo/geometry.hpp"

namespace lo {

// Trajectory segments used by the sub-sequence metrics: start frame i,
// the first frame j whose ground-truth path distance from i crosses the
// length class, and that distance.
struct SubSequenceEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double length_class = 0.0;  // meters
  double dist = 0.0;          // meters, >= length_class
};

using SubSequenceSet = std::vector<SubSequenceEntry>;

struct ClassErrors {
  std::size_t count = 0;
  double e_t = 0.0;  // ratio (x100 = percent)
  double e_r = 0.0;  // degrees per meter
};

struct OdomErrors {
  std::size_t count = 0;
  double e_t = 0.0;
  double e_r = 0.0;
  std::map<double, ClassErrors> per_class;
};

// Chains deltas from the identity: pose 0 = I, pose t+1 = pose t * T(delta t).
Trajectory accumulate(const std::vector<PoseDelta>& deltas);

std::vector<double> standard_lengths();  // 100, 200, ..., 800 m

// All (i, j) segments: for each start i (stepping by stride) and each
// length L, j is the first frame whose path distance from i reaches L.
SubSequenceSet subsequence_set(const Trajectory& traj,
                               const std::vector<double>& lengths,
                               std::size_t stride = 1);

// Error transform gt^-1 * pred: translation norm in meters and absolute
// rotation angle in degrees.
std::pair<double, double> pose_error(const RigidTransform& gt,
                                     const RigidTransform& pred);

// Mean over the sub-sequence set of end-point error per meter: e_t as a
// dimensionless ratio, e_r in degrees per meter.
OdomErrors odometry_errors(const Trajectory& gt, const Trajectory& pred,
                           const SubSequenceSet& set);

// KITTI pose text (12 reals, row-major 3x4 per line). Round-trips through
// dataio's read_poses.
std::string write_poses(const Trajectory& traj);

// CSV report: one row per length class plus an overall row.
std::string error_report_csv(const OdomErrors& errors);

}  // namespace lo
