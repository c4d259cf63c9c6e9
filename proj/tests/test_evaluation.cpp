#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "lo/dataio.hpp"
#include "lo/errors.hpp"
#include "lo/evaluation.hpp"
#include "lo/rng.hpp"

using namespace lo;

namespace {

// poses 0..n-1 spaced 1 m apart along +x, no rotation
Trajectory unit_line(std::size_t n) {
  Trajectory traj(n);
  for (std::size_t k = 0; k < n; ++k)
    traj[k].m(0, 3) = static_cast<double>(k);
  return traj;
}

PoseDelta random_delta(Rng& rng, double max_t, double max_r) {
  PoseDelta d;
  for (int k = 0; k < 3; ++k) {
    d.t(k) = rng.uniform(-max_t, max_t);
    d.r(k) = rng.uniform(-max_r, max_r);
  }
  return d;
}

Trajectory random_trajectory(Rng& rng, std::size_t frames, double max_t,
                             double max_r) {
  std::vector<PoseDelta> deltas;
  for (std::size_t k = 0; k + 1 < frames; ++k)
    deltas.push_back(random_delta(rng, max_t, max_r));
  return accumulate(deltas);
}

}  // namespace

TEST_CASE("accumulate chains deltas from the identity") {
  CHECK(accumulate({}).size() == 1);
  CHECK(accumulate({}).front().m == Eigen::Matrix4d::Identity());

  const Trajectory still = accumulate({PoseDelta{}, PoseDelta{}, PoseDelta{}});
  REQUIRE(still.size() == 4);
  for (const RigidTransform& t : still) CHECK(t.m == Eigen::Matrix4d::Identity());

  // a yaw after a step moves the second step along the rotated axis,
  // so pose 2 tells the composition order apart
  const PoseDelta step{{1, 0, 0}, {0, 0, 0}};
  const PoseDelta turn_step{{1, 0, 0}, {0, 0, 90}};
  const Trajectory traj = accumulate({step, turn_step, step});
  REQUIRE(traj.size() == 4);
  CHECK((traj[2].translation() - Eigen::Vector3d(2, 0, 0)).norm() <= 1e-12);
  CHECK((traj[3].translation() - Eigen::Vector3d(2, 1, 0)).norm() <= 1e-12);
}

TEST_CASE("the standard length classes run 100 to 800") {
  CHECK(standard_lengths() ==
        std::vector<double>{100, 200, 300, 400, 500, 600, 700, 800});
}

TEST_CASE("sub-sequences take the first frame crossing each length") {
  const Trajectory traj = unit_line(850);
  const SubSequenceSet set = subsequence_set(traj, standard_lengths());

  REQUIRE_FALSE(set.empty());
  CHECK(set.front().i == 0);
  CHECK(set.front().j == 100);
  CHECK(set.front().length_class == 100.0);
  CHECK(set.front().dist == 100.0);

  std::map<double, std::size_t> per_class;
  for (const SubSequenceEntry& e : set) {
    per_class[e.length_class] += 1;
    CHECK(e.dist >= e.length_class);
    CHECK(e.j == e.i + static_cast<std::size_t>(e.length_class));
  }
  for (double L : standard_lengths())
    CHECK(per_class.at(L) == 850 - static_cast<std::size_t>(L));
  CHECK(set.size() == 3200);
}

TEST_CASE("the start stride thins the sub-sequence set") {
  const Trajectory traj = unit_line(850);
  const SubSequenceSet set = subsequence_set(traj, standard_lengths(), 10);
  std::size_t class_100 = 0;
  for (const SubSequenceEntry& e : set) {
    CHECK(e.i % 10 == 0);
    if (e.length_class == 100.0) ++class_100;
  }
  CHECK(class_100 == 75);
  CHECK(set.size() == 320);
}

TEST_CASE("paths shorter than every class give an empty set") {
  CHECK(subsequence_set(unit_line(50), standard_lengths()).empty());
  CHECK_THROWS_AS(subsequence_set(unit_line(1), standard_lengths()), LengthMismatch);
  CHECK_THROWS_AS(subsequence_set(unit_line(50), standard_lengths(), 0), InvalidConfig);
}

TEST_CASE("sub-sequence ends are minimal on winding trajectories") {
  Rng rng(64);
  const Trajectory traj = random_trajectory(rng, 400, 1.5, 8.0);
  std::vector<double> s(traj.size(), 0.0);
  for (std::size_t k = 0; k + 1 < traj.size(); ++k)
    s[k + 1] = s[k] + (traj[k + 1].translation() - traj[k].translation()).norm();

  const SubSequenceSet set = subsequence_set(traj, {50, 100});
  REQUIRE_FALSE(set.empty());
  for (const SubSequenceEntry& e : set) {
    CHECK(s[e.j] - s[e.i] >= e.length_class);
    CHECK(s[e.j - 1] - s[e.i] < e.length_class);
    CHECK(std::abs((s[e.j] - s[e.i]) - e.dist) <= 1e-12);
  }
}

TEST_CASE("pose error splits into translation norm and rotation angle") {
  const RigidTransform eye;
  const auto [t0, r0] = pose_error(eye, eye);
  CHECK(t0 == 0.0);
  CHECK(r0 == 0.0);

  const auto [t1, r1] = pose_error(eye, translate(1, 0, 0));
  CHECK(t1 == 1.0);
  CHECK(r1 == 0.0);

  const RigidTransform yaw2 = delta_to_transform(PoseDelta{{0, 0, 0}, {0, 0, 2}});
  const auto [t2, r2] = pose_error(eye, yaw2);
  CHECK(t2 == 0.0);
  CHECK(std::abs(r2 - 2.0) <= 1e-9);

  const RigidTransform yaw10 = delta_to_transform(PoseDelta{{0, 0, 0}, {0, 0, 10}});
  const RigidTransform yaw12 = delta_to_transform(PoseDelta{{0, 0, 0}, {0, 0, 12}});
  const auto [t3, r3] = pose_error(yaw10, yaw12);
  CHECK(std::abs(r3 - 2.0) <= 1e-9);
}

TEST_CASE("a perfect prediction scores exactly zero") {
  const Trajectory gt = unit_line(101);
  const SubSequenceSet set = subsequence_set(gt, standard_lengths());
  REQUIRE(set.size() == 1);
  const OdomErrors e = odometry_errors(gt, gt, set);
  CHECK(e.count == 1);
  CHECK(e.e_t == 0.0);
  CHECK(e.e_r == 0.0);
}

TEST_CASE("a one meter end error over 100 m is exactly one percent") {
  const Trajectory gt = unit_line(101);
  Trajectory pred = gt;
  pred[100].m(1, 3) = 1.0;
  const SubSequenceSet set = subsequence_set(gt, standard_lengths());
  const OdomErrors e = odometry_errors(gt, pred, set);
  CHECK(e.e_t == 0.01);
  CHECK(e.e_r == 0.0);
}

TEST_CASE("trajectory lengths must agree") {
  const Trajectory gt = unit_line(101);
  const Trajectory shorter = unit_line(100);
  const SubSequenceSet set = subsequence_set(gt, standard_lengths());
  CHECK_THROWS_AS(odometry_errors(gt, shorter, set), LengthMismatch);
  CHECK_THROWS_AS(odometry_errors(shorter, shorter, set), LengthMismatch);
}

TEST_CASE("errors are invariant to a common rigid change of world frame") {
  Rng rng(65);
  const Trajectory gt = random_trajectory(rng, 300, 1.5, 6.0);
  Trajectory pred = gt;
  for (std::size_t k = 1; k < pred.size(); ++k) {
    const PoseDelta nudge = random_delta(rng, 0.05, 0.5);
    pred[k] = compose(pred[k], delta_to_transform(nudge));
  }

  const SubSequenceSet set = subsequence_set(gt, {50, 100, 150});
  REQUIRE_FALSE(set.empty());
  const OdomErrors base = odometry_errors(gt, pred, set);

  const RigidTransform q =
      delta_to_transform(PoseDelta{{40, -7, 3}, {30, -20, 110}});
  Trajectory gt_q = gt, pred_q = pred;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    gt_q[k] = compose(q, gt[k]);
    pred_q[k] = compose(q, pred[k]);
  }
  const OdomErrors moved = odometry_errors(gt_q, pred_q, set);

  CHECK(std::abs(moved.e_t - base.e_t) <= 1e-9);
  CHECK(std::abs(moved.e_r - base.e_r) <= 1e-9);
}

TEST_CASE("per-class means aggregate to the overall mean") {
  Rng rng(66);
  const Trajectory gt = random_trajectory(rng, 300, 1.5, 6.0);
  Trajectory pred = gt;
  for (std::size_t k = 1; k < pred.size(); ++k)
    pred[k] = compose(pred[k], delta_to_transform(random_delta(rng, 0.05, 0.5)));

  const SubSequenceSet set = subsequence_set(gt, {50, 100, 150});
  const OdomErrors e = odometry_errors(gt, pred, set);

  std::size_t total = 0;
  double sum_t = 0.0, sum_r = 0.0;
  for (const auto& [len, cls] : e.per_class) {
    CHECK(cls.count > 0);
    total += cls.count;
    sum_t += cls.e_t * static_cast<double>(cls.count);
    sum_r += cls.e_r * static_cast<double>(cls.count);
  }
  CHECK(total == set.size());
  CHECK(e.count == set.size());
  CHECK(std::abs(sum_t / static_cast<double>(total) - e.e_t) <= 1e-12);
  CHECK(std::abs(sum_r / static_cast<double>(total) - e.e_r) <= 1e-12);
  CHECK(e.e_t > 0.0);
  CHECK(e.e_r > 0.0);
}

TEST_CASE("pose text is one 3x4 row-major line per frame") {
  const std::string text = write_poses(unit_line(3));
  CHECK(text ==
        "1 0 0 0 0 1 0 0 0 0 1 0\n"
        "1 0 0 1 0 1 0 0 0 0 1 0\n"
        "1 0 0 2 0 1 0 0 0 0 1 0\n");

  Rng rng(67);
  const Trajectory traj = random_trajectory(rng, 12, 2.0, 20.0);
  const Trajectory back = read_poses(write_poses(traj));
  REQUIRE(back.size() == traj.size());
  for (std::size_t k = 0; k < traj.size(); ++k)
    CHECK((back[k].m - traj[k].m).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("the error report lists each class then an overall row") {
  OdomErrors e;
  e.count = 3;
  e.e_t = 0.03125;
  e.e_r = 0.0625;
  e.per_class[100] = {2, 0.015625, 0.5};
  e.per_class[200] = {1, 0.25, 0.125};
  CHECK(error_report_csv(e) ==
        "length_class,count,e_t_percent,e_r_deg_per_m\n"
        "100,2,1.5625,0.5\n"
        "200,1,25,0.125\n"
        "overall,3,3.125,0.0625\n");
}
