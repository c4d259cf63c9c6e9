#include "lo/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lo/errors.hpp"
#include "lo/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "scan codec assumes a little-endian host");

namespace lo {

namespace fs = std::filesystem;

namespace {

std::string read_binary_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedScan(std::string("cannot open ") + what + " " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

std::vector<double> parse_reals(const std::string& line) {
  std::istringstream ss(line);
  std::vector<double> vals;
  double v;
  while (ss >> v) vals.push_back(v);
  if (!ss.eof()) vals.push_back(std::nan(""));  // trailing junk token
  return vals;
}

RigidTransform transform_from_12(const std::vector<double>& v) {
  RigidTransform t;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) t.m(r, c) = v[static_cast<std::size_t>(r * 4 + c)];
  return t;
}

}  // namespace

PointCloud read_scan(const std::string& bytes) {
  if (bytes.size() % 16 != 0)
    throw MalformedScan("scan byte length " + std::to_string(bytes.size()) +
                        " is not a multiple of 16");
  const Eigen::Index n = static_cast<Eigen::Index>(bytes.size() / 16);
  PointCloud cloud = make_cloud(n, 1);
  const char* src = bytes.data();
  for (Eigen::Index i = 0; i < n; ++i) {
    float rec[4];
    std::memcpy(rec, src + i * 16, 16);
    for (float v : rec) {
      if (!std::isfinite(v))
        throw MalformedScan("non-finite value in record " + std::to_string(i));
    }
    cloud.xyz(i, 0) = rec[0];
    cloud.xyz(i, 1) = rec[1];
    cloud.xyz(i, 2) = rec[2];
    cloud.features(i, 0) = rec[3];
  }
  return cloud;
}

std::string write_scan(const PointCloud& cloud) {
  if (cloud.feature_width() != 1)
    throw MalformedScan("scan encoder expects exactly one feature channel");
  if (!cloud_finite(cloud)) throw MalformedScan("non-finite cloud");
  std::string bytes(static_cast<std::size_t>(cloud.size()) * 16, '\0');
  char* dst = bytes.data();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const float rec[4] = {static_cast<float>(cloud.xyz(i, 0)),
                          static_cast<float>(cloud.xyz(i, 1)),
                          static_cast<float>(cloud.xyz(i, 2)),
                          static_cast<float>(cloud.features(i, 0))};
    std::memcpy(dst + i * 16, rec, 16);
  }
  return bytes;
}

PointCloud read_scan_file(const std::string& path) {
  return read_scan(read_binary_file(path, "scan"));
}

void write_scan_file(const std::string& path, const PointCloud& cloud) {
  const std::string bytes = write_scan(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedScan("cannot write scan " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Trajectory read_poses(const std::string& text) {
  Trajectory traj;
  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<double> vals = parse_reals(line);
    if (vals.size() != 12)
      throw MalformedPose("line " + std::to_string(line_no) + " has " +
                          std::to_string(vals.size()) + " values, expected 12");
    for (double v : vals) {
      if (!std::isfinite(v))
        throw MalformedPose("non-finite value on line " + std::to_string(line_no));
    }
    traj.push_back(transform_from_12(vals));
  }
  return traj;
}

Trajectory read_poses_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedPose("cannot open pose file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_poses(buf.str());
}

CalibTr read_calib(const std::string& text) {
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("Tr:", 0) != 0) continue;
    const std::vector<double> vals = parse_reals(line.substr(3));
    if (vals.size() != 12)
      throw MalformedCalib("Tr line has " + std::to_string(vals.size()) +
                           " values, expected 12");
    for (double v : vals) {
      if (!std::isfinite(v)) throw MalformedCalib("non-finite value on Tr line");
    }
    const RigidTransform tr = transform_from_12(vals);
    if (!is_valid_transform(tr, 1e-6))
      throw MalformedCalib("Tr is not a rigid transform");
    return {orthonormalized(tr)};
  }
  throw MalformedCalib("no Tr line found");
}

CalibTr read_calib_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedCalib("cannot open calib file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return read_calib(buf.str());
}

std::vector<PoseDelta> relative_gt(const Trajectory& traj_cam,
                                   const CalibTr& calib) {
  if (traj_cam.size() < 2)
    throw MalformedPose("relative motion needs at least 2 poses");
  const RigidTransform tr_inv = invert(calib.tr);
  std::vector<PoseDelta> deltas;
  deltas.reserve(traj_cam.size() - 1);
  for (std::size_t t = 0; t + 1 < traj_cam.size(); ++t) {
    const RigidTransform rel_cam = compose(invert(traj_cam[t]), traj_cam[t + 1]);
    const RigidTransform rel_velo = compose(tr_inv, compose(rel_cam, calib.tr));
    deltas.push_back(transform_to_delta(rel_velo));
  }
  return deltas;
}

std::string sequence_name(int seq) {
  std::string s = std::to_string(seq);
  return s.size() < 2 ? "0" + s : s;
}

std::string scan_path(const std::string& root, int seq, int frame) {
  std::string f = std::to_string(frame);
  f.insert(0, f.size() < 6 ? 6 - f.size() : 0, '0');
  return (fs::path(root) / "sequences" / sequence_name(seq) / "velodyne" /
          (f + ".bin"))
      .string();
}

std::string poses_path(const std::string& root, int seq) {
  return (fs::path(root) / "poses" / (sequence_name(seq) + ".txt")).string();
}

std::string calib_path(const std::string& root, int seq) {
  return (fs::path(root) / "sequences" / sequence_name(seq) / "calib.txt")
      .string();
}

SequenceData locate_sequence(const std::string& root, int seq) {
  SequenceData data;
  const fs::path scan_dir =
      fs::path(root) / "sequences" / sequence_name(seq) / "velodyne";
  if (!fs::is_directory(scan_dir))
    throw MalformedScan("no scan directory at " + scan_dir.string());
  for (const auto& entry : fs::directory_iterator(scan_dir)) {
    if (entry.path().extension() == ".bin")
      data.scan_files.push_back(entry.path().string());
  }
  std::sort(data.scan_files.begin(), data.scan_files.end());
  if (data.scan_files.empty())
    throw MalformedScan("no .bin scans under " + scan_dir.string());

  const std::string poses = poses_path(root, seq);
  if (fs::exists(poses)) data.poses_cam = read_poses(read_text_file(poses));
  const std::string calib = calib_path(root, seq);
  data.calib = fs::exists(calib) ? read_calib(read_text_file(calib))
                                 : CalibTr::identity();
  return data;
}

namespace {

// Ground plane at z = 0 exactly, then 3-10 Gaussian clusters floating
// well above the plane-removal threshold.
SyntheticScene build_scene(Rng& rng, std::int32_t n_points,
                           double plane_fraction, double extent) {
  SyntheticScene scene;
  scene.cloud = make_cloud(n_points, 1);
  scene.on_plane.assign(static_cast<std::size_t>(n_points), 0);

  const Eigen::Index n_plane =
      static_cast<Eigen::Index>(std::llround(plane_fraction * n_points));
  const int n_clusters = 3 + static_cast<int>(rng.uniform_index(8));
  Eigen::MatrixX3d centers(n_clusters, 3);
  for (int k = 0; k < n_clusters; ++k) {
    centers(k, 0) = rng.uniform(-0.8 * extent, 0.8 * extent);
    centers(k, 1) = rng.uniform(-0.8 * extent, 0.8 * extent);
    centers(k, 2) = rng.uniform(1.5, 6.0);
  }

  for (Eigen::Index i = 0; i < n_points; ++i) {
    if (i < n_plane) {
      scene.cloud.xyz(i, 0) = rng.uniform(-extent, extent);
      scene.cloud.xyz(i, 1) = rng.uniform(-extent, extent);
      scene.cloud.xyz(i, 2) = 0.0;
      scene.on_plane[static_cast<std::size_t>(i)] = 1;
    } else {
      const int k = static_cast<int>(rng.uniform_index(
          static_cast<std::size_t>(n_clusters)));
      scene.cloud.xyz(i, 0) = centers(k, 0) + 0.6 * rng.gaussian();
      scene.cloud.xyz(i, 1) = centers(k, 1) + 0.6 * rng.gaussian();
      scene.cloud.xyz(i, 2) =
          std::max(centers(k, 2) + 0.6 * rng.gaussian(), 1.0);
    }
    scene.cloud.features(i, 0) = rng.uniform01();
  }
  return scene;
}

}  // namespace

SyntheticScene synthetic_street_scene(std::uint64_t rng_seed,
                                      std::int32_t n_points,
                                      double plane_fraction, double extent) {
  if (n_points < 1) throw InvalidConfig("scene needs at least one point");
  Rng rng = Rng::fork(rng_seed, 0x5ce4e);
  return build_scene(rng, n_points, plane_fraction, extent);
}

FramePair make_synthetic_pair(std::uint64_t rng_seed, const SynthConfig& cfg) {
  if (cfg.n_points < 16) throw InvalidConfig("synthetic pair needs >= 16 points");
  if (cfg.overlap <= 0.0 || cfg.overlap > 1.0)
    throw InvalidConfig("overlap must be in (0, 1]");

  Rng rng = Rng::fork(rng_seed, 0x9a17);
  FramePair pair;
  pair.p = build_scene(rng, cfg.n_points, cfg.plane_fraction, cfg.extent).cloud;

  for (int k = 0; k < 3; ++k) pair.target.t(k) = rng.uniform(-cfg.max_t, cfg.max_t);
  for (int k = 0; k < 3; ++k) pair.target.r(k) = rng.uniform(-cfg.max_r, cfg.max_r);

  // q sees the same world one frame later: x_p = T * x_q, so q's points
  // are p's carried through the inverse motion.
  pair.q = transform_cloud(pair.p, invert(delta_to_transform(pair.target)));
  if (cfg.noise_sigma > 0.0) {
    for (Eigen::Index i = 0; i < pair.q.size(); ++i)
      for (int k = 0; k < 3; ++k)
        pair.q.xyz(i, k) += cfg.noise_sigma * rng.gaussian();
  }
  if (cfg.overlap < 1.0) {
    const Eigen::Index keep = std::max<Eigen::Index>(
        1, static_cast<Eigen::Index>(std::llround(cfg.overlap * pair.q.size())));
    pair.q = random_subsample(pair.q, keep, rng.next_u64());
  }
  return pair;
}

}  // namespace lo
