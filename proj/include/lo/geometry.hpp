#pragma once

#include <Eigen/Dense>
#include <vector>

namespace lo {

// 6-DoF motion: translation in meters, rotation as fixed-axis
// roll-pitch-yaw Euler angles in degrees, R = Rz(yaw)*Ry(pitch)*Rx(roll).
// Angles produced by extraction are canonical in (-180, 180].
struct PoseDelta {
  Eigen::Vector3d t{Eigen::Vector3d::Zero()};
  Eigen::Vector3d r{Eigen::Vector3d::Zero()};

  Eigen::Matrix<double, 6, 1> vec6() const {
    Eigen::Matrix<double, 6, 1> v;
    v << t, r;
    return v;
  }
  static PoseDelta from_vec6(const Eigen::Matrix<double, 6, 1>& v) {
    return PoseDelta{v.head<3>(), v.tail<3>()};
  }
};

// Homogeneous SE(3) transform. Invariants: bottom row exactly (0,0,0,1),
// rotation block orthonormal to 1e-9 with positive determinant.
struct RigidTransform {
  Eigen::Matrix4d m{Eigen::Matrix4d::Identity()};

  Eigen::Matrix3d rotation() const { return m.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return m.topRightCorner<3, 1>(); }
};

// Frame-indexed pose sequence; pose 0 defines the world frame.
using Trajectory = std::vector<RigidTransform>;

RigidTransform make_transform(const Eigen::Matrix3d& R, const Eigen::Vector3d& t);
RigidTransform translate(double x, double y, double z);

// Max-norm of R^T R - I; the orthonormality drift measure.
double orthonormality_drift(const RigidTransform& t);
bool is_valid_transform(const RigidTransform& t, double tol = 1e-9);

// Gram-Schmidt on the rotation columns; translation untouched.
RigidTransform orthonormalized(const RigidTransform& t);

// a*b, re-orthonormalizing only when drift exceeds 1e-9.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

// Exact SE(3) inverse via (R^T, -R^T t).
RigidTransform invert(const RigidTransform& t);

// Wraps an angle into (-180, 180]; a tie at -180 maps to +180.
double canonicalize_angle_deg(double deg);

RigidTransform delta_to_transform(const PoseDelta& d);

// Inverse of delta_to_transform. Near pitch = +/-90 deg (within 1e-6 deg)
// the decomposition is not unique; the canonical roll=0 solution is
// returned and *gimbal_lock (when given) is set.
PoseDelta transform_to_delta(const RigidTransform& t, bool* gimbal_lock = nullptr);

// Absolute rotation angle in degrees: arccos((Tr(R)-1)/2), the arccos
// argument clamped to [-1, 1] so round-off cannot produce NaN.
double rotation_angle_deg(const RigidTransform& t);

}  // namespace lo
