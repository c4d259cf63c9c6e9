#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lo/geometry.hpp"
#include "lo/pointcloud.hpp"

namespace lo {

// Two consecutive scans plus the ground-truth relative motion between
// them, expressed in the frame of the first scan: applying
// delta_to_transform(target) to q's points reproduces p's view of the
// static world.
struct FramePair {
  PointCloud p;
  PointCloud q;
  PoseDelta target;
};

// KITTI odometry sequence splits. Sequence 7 is reserved for validation.
struct SplitSpec {
  std::vector<int> train;
  std::vector<int> test;
  std::vector<int> validation;

  static SplitSpec standard() {
    return {{0, 1, 2, 8, 9}, {3, 4, 5, 6, 10}, {7}};
  }
};

// LiDAR -> camera extrinsic from a KITTI calib.txt "Tr:" line.
struct CalibTr {
  RigidTransform tr;

  static CalibTr identity() { return {RigidTransform{}}; }
};

// Velodyne scan codec: 16-byte records of little-endian float32
// (x, y, z, intensity). read(write(c)) is bit-exact.
PointCloud read_scan(const std::string& bytes);
std::string write_scan(const PointCloud& cloud);
PointCloud read_scan_file(const std::string& path);
void write_scan_file(const std::string& path, const PointCloud& cloud);

// KITTI pose text: 12 whitespace-separated reals per line, the row-major
// upper 3x4 of the pose, bottom row (0,0,0,1) implied.
Trajectory read_poses(const std::string& text);
Trajectory read_poses_file(const std::string& path);

// calib.txt parser; only the "Tr:" line (12 reals) is consumed.
CalibTr read_calib(const std::string& text);
CalibTr read_calib_file(const std::string& path);

// Per-step relative motion in the LiDAR frame:
//   T_velo,t = Tr^-1 * T_cam,t^-1 * T_cam,t+1 * Tr
// With identity calib this is the camera-frame relative motion.
std::vector<PoseDelta> relative_gt(const Trajectory& traj_cam,
                                   const CalibTr& calib);

// KITTI odometry directory layout helpers.
std::string sequence_name(int seq);                           // "00", "01", ...
std::string scan_path(const std::string& root, int seq, int frame);
std::string poses_path(const std::string& root, int seq);
std::string calib_path(const std::string& root, int seq);

// A located sequence: sorted scan files plus parsed poses and calib.
struct SequenceData {
  std::vector<std::string> scan_files;
  Trajectory poses_cam;
  CalibTr calib;
};

// Scans are required; poses/calib are optional (identity calib and empty
// trajectory when absent) so inference can run on scan-only data.
SequenceData locate_sequence(const std::string& root, int seq);

// Synthetic scene/pair generation, the desk-scale oracle dataset.
struct SynthConfig {
  std::int32_t n_points = 512;
  double max_t = 0.5;        // meters, per translation component
  double max_r = 5.0;        // degrees, per Euler component
  double noise_sigma = 0.0;  // meters, isotropic Gaussian on q
  double overlap = 1.0;      // fraction of q's points retained
  double extent = 10.0;      // half-width of the ground plane, meters
  double plane_fraction = 0.45;
};

// One ground plane (z = 0 exactly) plus 3-10 clusters floating above it.
// on_plane flags the exact-plane points for recall checks.
struct SyntheticScene {
  PointCloud cloud;
  std::vector<char> on_plane;
};

SyntheticScene synthetic_street_scene(std::uint64_t rng_seed,
                                      std::int32_t n_points,
                                      double plane_fraction,
                                      double extent = 20.0);

// Scene + a pose delta drawn uniformly within (max_t, max_r); q is the
// scene carried through the inverse motion, plus noise and dropout to
// fraction `overlap`. The target is exact for noise_sigma = 0.
FramePair make_synthetic_pair(std::uint64_t rng_seed, const SynthConfig& cfg);

}  // namespace lo
