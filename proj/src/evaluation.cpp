#include "lo/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "lo/errors.hpp"

namespace lo {

Trajectory accumulate(const std::vector<PoseDelta>& deltas) {
  Trajectory traj;
  traj.reserve(deltas.size() + 1);
  traj.push_back(RigidTransform{});
  for (const PoseDelta& d : deltas)
    traj.push_back(compose(traj.back(), delta_to_transform(d)));
  return traj;
}

std::vector<double> standard_lengths() {
  return {100, 200, 300, 400, 500, 600, 700, 800};
}

SubSequenceSet subsequence_set(const Trajectory& traj,
                               const std::vector<double>& lengths,
                               std::size_t stride) {
  if (traj.size() < 2)
    throw LengthMismatch("sub-sequences need at least 2 poses");
  if (stride < 1) throw InvalidConfig("stride must be >= 1");

  // s[k] = path length accumulated up to frame k.
  std::vector<double> s(traj.size(), 0.0);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k)
    s[k + 1] = s[k] + (traj[k + 1].translation() - traj[k].translation()).norm();

  std::vector<double> asc = lengths;
  std::sort(asc.begin(), asc.end());

  SubSequenceSet set;
  for (std::size_t i = 0; i < traj.size(); i += stride) {
    std::size_t j = i;
    for (double L : asc) {
      while (j < traj.size() && s[j] - s[i] < L) ++j;
      if (j == traj.size()) break;  // longer classes cannot be reached either
      set.push_back({i, j, L, s[j] - s[i]});
    }
  }
  return set;
}

std::pair<double, double> pose_error(const RigidTransform& gt,
                                     const RigidTransform& pred) {
  const RigidTransform err = compose(invert(gt), pred);
  return {err.translation().norm(), rotation_angle_deg(err)};
}

OdomErrors odometry_errors(const Trajectory& gt, const Trajectory& pred,
                           const SubSequenceSet& set) {
  if (gt.size() != pred.size())
    throw LengthMismatch("gt has " + std::to_string(gt.size()) +
                         " poses, pred has " + std::to_string(pred.size()));
  OdomErrors out;
  for (const SubSequenceEntry& e : set) {
    if (e.j >= gt.size()) throw LengthMismatch("sub-sequence index out of range");
    const RigidTransform gt_ij = compose(invert(gt[e.i]), gt[e.j]);
    const RigidTransform pred_ij = compose(invert(pred[e.i]), pred[e.j]);
    const auto [t_err, angle] = pose_error(gt_ij, pred_ij);
    ClassErrors& cls = out.per_class[e.length_class];
    cls.count += 1;
    cls.e_t += t_err / e.dist;
    cls.e_r += angle / e.dist;
    out.count += 1;
    out.e_t += t_err / e.dist;
    out.e_r += angle / e.dist;
  }
  if (out.count > 0) {
    out.e_t /= static_cast<double>(out.count);
    out.e_r /= static_cast<double>(out.count);
  }
  for (auto& [len, cls] : out.per_class) {
    cls.e_t /= static_cast<double>(cls.count);
    cls.e_r /= static_cast<double>(cls.count);
  }
  return out;
}

std::string write_poses(const Trajectory& traj) {
  std::string out;
  char buf[26];
  for (const RigidTransform& t : traj) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t.m(r, c));
        if (r != 0 || c != 0) out += ' ';
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

std::string error_report_csv(const OdomErrors& errors) {
  std::string out = "length_class,count,e_t_percent,e_r_deg_per_m\n";
  char line[112];
  for (const auto& [len, cls] : errors.per_class) {
    std::snprintf(line, sizeof line, "%g,%zu,%.9g,%.9g\n", len, cls.count,
                  100.0 * cls.e_t, cls.e_r);
    out += line;
  }
  std::snprintf(line, sizeof line, "overall,%zu,%.9g,%.9g\n", errors.count,
                100.0 * errors.e_t, errors.e_r);
  out += line;
  return out;
}

}  // namespace lo
