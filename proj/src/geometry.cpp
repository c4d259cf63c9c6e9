#include "lo/geometry.hpp"

#include <cmath>

namespace lo {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
constexpr double kRadToDeg = 180.0 / kPi;
}  // namespace

RigidTransform make_transform(const Eigen::Matrix3d& R, const Eigen::Vector3d& t) {
  RigidTransform out;
  out.m.setIdentity();
  out.m.topLeftCorner<3, 3>() = R;
  out.m.topRightCorner<3, 1>() = t;
  return out;
}

RigidTransform translate(double x, double y, double z) {
  return make_transform(Eigen::Matrix3d::Identity(), Eigen::Vector3d(x, y, z));
}

double orthonormality_drift(const RigidTransform& t) {
  const Eigen::Matrix3d R = t.rotation();
  return (R.transpose() * R - Eigen::Matrix3d::Identity())
      .cwiseAbs()
      .maxCoeff();
}

bool is_valid_transform(const RigidTransform& t, double tol) {
  if (!t.m.allFinite()) return false;
  if (t.m(3, 0) != 0.0 || t.m(3, 1) != 0.0 || t.m(3, 2) != 0.0 ||
      t.m(3, 3) != 1.0) {
    return false;
  }
  return orthonormality_drift(t) < tol && t.rotation().determinant() > 0.0;
}

RigidTransform orthonormalized(const RigidTransform& t) {
  Eigen::Matrix3d R = t.rotation();
  Eigen::Vector3d c0 = R.col(0).normalized();
  Eigen::Vector3d c1 = (R.col(1) - c0.dot(R.col(1)) * c0).normalized();
  Eigen::Vector3d c2 = c0.cross(c1);
  Eigen::Matrix3d Q;
  Q << c0, c1, c2;
  return make_transform(Q, t.translation());
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.m = a.m * b.m;
  out.m.row(3) << 0.0, 0.0, 0.0, 1.0;
  if (orthonormality_drift(out) > 1e-9) out = orthonormalized(out);
  return out;
}

RigidTransform invert(const RigidTransform& t) {
  const Eigen::Matrix3d Rt = t.rotation().transpose();
  return make_transform(Rt, -(Rt * t.translation()));
}

double canonicalize_angle_deg(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a > 180.0) a -= 360.0;
  if (a <= -180.0) a += 360.0;
  return a;
}

RigidTransform delta_to_transform(const PoseDelta& d) {
  const double a = d.r(0) * kDegToRad;  // roll,  about x
  const double b = d.r(1) * kDegToRad;  // pitch, about y
  const double c = d.r(2) * kDegToRad;  // yaw,   about z
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  const double cc = std::cos(c), sc = std::sin(c);
  Eigen::Matrix3d R;
  R << cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa,
       sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa,
       -sb,     cb * sa,                cb * ca;
  return make_transform(R, d.t);
}

PoseDelta transform_to_delta(const RigidTransform& t, bool* gimbal_lock) {
  const Eigen::Matrix3d R = t.rotation();
  const double sb = std::clamp(-R(2, 0), -1.0, 1.0);
  const double pitch_deg = std::asin(sb) * kRadToDeg;
  const bool locked = std::abs(90.0 - std::abs(pitch_deg)) < 1e-6;
  if (gimbal_lock != nullptr) *gimbal_lock = locked;

  PoseDelta d;
  d.t = t.translation();
  if (locked) {
    // roll and yaw are coupled; return the roll = 0 solution
    d.r(0) = 0.0;
    d.r(1) = canonicalize_angle_deg(pitch_deg);
    d.r(2) = canonicalize_angle_deg(std::atan2(-R(0, 1), R(1, 1)) * kRadToDeg);
  } else {
    d.r(0) = canonicalize_angle_deg(std::atan2(R(2, 1), R(2, 2)) * kRadToDeg);
    d.r(1) = canonicalize_angle_deg(pitch_deg);
    d.r(2) = canonicalize_angle_deg(std::atan2(R(1, 0), R(0, 0)) * kRadToDeg);
  }
  return d;
}

double rotation_angle_deg(const RigidTransform& t) {
  const double arg = std::clamp((t.rotation().trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(arg) * kRadToDeg;
}

}  // namespace lo
