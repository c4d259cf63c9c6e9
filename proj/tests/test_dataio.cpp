#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lo/dataio.hpp"
#include "lo/errors.hpp"
#include "lo/evaluation.hpp"
#include "lo/rng.hpp"

using namespace lo;
namespace fs = std::filesystem;

namespace {

std::string encode_record(float x, float y, float z, float i) {
  const float vals[4] = {x, y, z, i};
  std::string bytes(16, '\0');
  std::memcpy(bytes.data(), vals, 16);
  return bytes;
}

PoseDelta random_delta(Rng& rng, double max_t, double max_r) {
  PoseDelta d;
  for (int k = 0; k < 3; ++k) {
    d.t(k) = rng.uniform(-max_t, max_t);
    d.r(k) = rng.uniform(-max_r, max_r);
  }
  return d;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("lo_dataio_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("read_scan decodes 16-byte float records") {
  const PointCloud one = read_scan(encode_record(1.0f, 2.0f, 3.0f, 0.5f));
  CHECK(one.size() == 1);
  CHECK(one.xyz(0, 0) == 1.0);
  CHECK(one.xyz(0, 1) == 2.0);
  CHECK(one.xyz(0, 2) == 3.0);
  CHECK(one.features(0, 0) == 0.5);

  CHECK(read_scan("").size() == 0);
  CHECK_THROWS_AS(read_scan(std::string(17, 'x')), MalformedScan);

  const float bad = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(read_scan(encode_record(bad, 0, 0, 0)), MalformedScan);
}

TEST_CASE("scan write/read round trip is bit exact") {
  PointCloud c = make_cloud(257);
  Rng rng(21);
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k)
      c.xyz(i, k) = static_cast<float>(rng.uniform(-80, 80));
    c.features(i, 0) = static_cast<float>(rng.uniform01());
  }
  const std::string bytes = write_scan(c);
  CHECK(bytes.size() == 257 * 16);
  const PointCloud back = read_scan(bytes);
  CHECK(back.xyz == c.xyz);
  CHECK(back.features == c.features);
  CHECK(write_scan(back) == bytes);
}

TEST_CASE("scan files round trip through the filesystem") {
  TempDir dir("scanfile");
  PointCloud c = make_cloud(10);
  c.xyz.setConstant(1.25);
  const std::string path = (dir.path / "scan.bin").string();
  write_scan_file(path, c);
  const PointCloud back = read_scan_file(path);
  CHECK(back.xyz == c.xyz);
  CHECK_THROWS_AS(read_scan_file((dir.path / "missing.bin").string()), MalformedScan);
}

TEST_CASE("read_poses parses KITTI pose lines") {
  const Trajectory id = read_poses("1 0 0 0 0 1 0 0 0 0 1 0\n");
  CHECK(id.size() == 1);
  CHECK(id[0].m == RigidTransform{}.m);

  const Trajectory tx = read_poses("1 0 0 5 0 1 0 0 0 0 1 0");
  CHECK(tx[0].m == translate(5, 0, 0).m);

  CHECK(read_poses("").empty());
  CHECK_THROWS_AS(read_poses("1 0 0 0 0 1 0 0 0 0 1"), MalformedPose);
  CHECK_THROWS_AS(read_poses("1 0 0 0 0 1 0 0 0 0 1 nan"), MalformedPose);
  CHECK_THROWS_AS(read_poses("1 0 0 0 0 1 0 0 0 0 1 0 0"), MalformedPose);
}

TEST_CASE("pose text round trip preserves a random trajectory") {
  Rng rng(22);
  std::vector<PoseDelta> deltas;
  for (int i = 0; i < 40; ++i) deltas.push_back(random_delta(rng, 2.0, 30.0));
  const Trajectory traj = accumulate(deltas);
  const Trajectory back = read_poses(write_poses(traj));
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i)
    CHECK((back[i].m - traj[i].m).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("read_calib consumes only the Tr line") {
  const std::string text =
      "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"
      "Tr: 1 0 0 0.5 0 0 -1 0.1 0 1 0 -0.2\n";
  const CalibTr calib = read_calib(text);
  CHECK(std::abs(calib.tr.m(0, 3) - 0.5) <= 1e-15);
  CHECK(std::abs(calib.tr.m(1, 2) - -1.0) <= 1e-9);
  CHECK(is_valid_transform(calib.tr));

  CHECK_THROWS_AS(read_calib("P0: 1 0 0 0 0 1 0 0 0 0 1 0\n"), MalformedCalib);
  CHECK_THROWS_AS(read_calib("Tr: 1 0 0\n"), MalformedCalib);
}

TEST_CASE("relative_gt conjugates camera motion into the LiDAR frame") {
  SUBCASE("identical poses give a zero delta") {
    Trajectory traj(3);
    const auto deltas = relative_gt(traj, CalibTr::identity());
    REQUIRE(deltas.size() == 2);
    for (const PoseDelta& d : deltas)
      CHECK(d.vec6().cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("camera z-advance has the full magnitude under identity calib") {
    Trajectory traj(2);
    traj[1] = translate(0, 0, 5);
    const auto deltas = relative_gt(traj, CalibTr::identity());
    CHECK(std::abs(deltas[0].t.norm() - 5.0) <= 1e-12);
  }

  SUBCASE("accumulating the deltas reproduces the camera trajectory") {
    Rng rng(23);
    CalibTr calib;
    calib.tr = delta_to_transform(random_delta(rng, 1.0, 40.0));
    std::vector<PoseDelta> steps;
    for (int i = 0; i < 30; ++i) steps.push_back(random_delta(rng, 1.0, 10.0));
    Trajectory cam;
    cam.push_back(RigidTransform{});
    for (const PoseDelta& d : steps)
      cam.push_back(compose(cam.back(), delta_to_transform(d)));

    const auto deltas = relative_gt(cam, calib);
    RigidTransform t = cam[0];
    for (std::size_t i = 0; i < deltas.size(); ++i) {
      t = compose(t, compose(compose(calib.tr, delta_to_transform(deltas[i])),
                             invert(calib.tr)));
      CHECK((t.m - cam[i + 1].m).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("sequence path helpers follow the KITTI layout") {
  CHECK(sequence_name(0) == "00");
  CHECK(sequence_name(10) == "10");
  CHECK(scan_path("root", 2, 7) == "root/sequences/02/velodyne/000007.bin");
  CHECK(poses_path("root", 2) == "root/poses/02.txt");
  CHECK(calib_path("root", 2) == "root/sequences/02/calib.txt");
}

TEST_CASE("locate_sequence finds scans and optional metadata") {
  TempDir dir("locate");
  const fs::path velo = dir.path / "sequences" / "00" / "velodyne";
  fs::create_directories(velo);
  fs::create_directories(dir.path / "poses");
  PointCloud c = make_cloud(4);
  write_scan_file((velo / "000001.bin").string(), c);
  write_scan_file((velo / "000000.bin").string(), c);
  {
    std::ofstream poses(dir.path / "poses" / "00.txt");
    poses << "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 1 0 1 0 0 0 0 1 0\n";
  }

  const SequenceData seq = locate_sequence(dir.path.string(), 0);
  REQUIRE(seq.scan_files.size() == 2);
  CHECK(seq.scan_files[0] < seq.scan_files[1]);  // sorted
  CHECK(seq.poses_cam.size() == 2);
  CHECK(seq.calib.tr.m == RigidTransform{}.m);  // absent -> identity
}

TEST_CASE("split spec keeps the three sets disjoint") {
  const SplitSpec split = SplitSpec::standard();
  for (int s : split.train)
    for (int t : split.test) CHECK(s != t);
  for (int s : split.train)
    for (int v : split.validation) CHECK(s != v);
  for (int t : split.test)
    for (int v : split.validation) CHECK(t != v);
  REQUIRE(split.validation.size() == 1);
  CHECK(split.validation[0] == 7);
}

TEST_CASE("synthetic street scene hits its plane fraction exactly") {
  const SyntheticScene scene = synthetic_street_scene(5, 10000, 0.45);
  REQUIRE(scene.cloud.size() == 10000);
  Eigen::Index on = 0;
  for (Eigen::Index i = 0; i < scene.cloud.size(); ++i) {
    if (scene.on_plane[static_cast<std::size_t>(i)]) {
      ++on;
      CHECK(scene.cloud.xyz(i, 2) == 0.0);
    } else {
      CHECK(scene.cloud.xyz(i, 2) >= 1.0);
    }
  }
  CHECK(std::abs(static_cast<double>(on) / 10000.0 - 0.45) <= 0.001);

  const SyntheticScene again = synthetic_street_scene(5, 10000, 0.45);
  CHECK(again.cloud.xyz == scene.cloud.xyz);
}

TEST_CASE("make_synthetic_pair produces an exact noise-free target") {
  SynthConfig cfg;

  SUBCASE("zero motion bounds give a zero target") {
    cfg.max_t = 0.0;
    cfg.max_r = 0.0;
    const FramePair pair = make_synthetic_pair(3, cfg);
    CHECK(pair.target.vec6().cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("applying the target transform to q reproduces p") {
    const FramePair pair = make_synthetic_pair(4, cfg);
    REQUIRE(pair.p.size() == cfg.n_points);
    REQUIRE(pair.q.size() == cfg.n_points);
    const PointCloud q_in_p = transform_cloud(pair.q, delta_to_transform(pair.target));
    CHECK((q_in_p.xyz - pair.p.xyz).cwiseAbs().maxCoeff() <= 1e-9);
  }

  SUBCASE("the same seed is bit-reproducible") {
    const FramePair a = make_synthetic_pair(9, cfg);
    const FramePair b = make_synthetic_pair(9, cfg);
    CHECK(a.p.xyz == b.p.xyz);
    CHECK(a.q.xyz == b.q.xyz);
    CHECK(a.target.vec6() == b.target.vec6());
  }

  SUBCASE("dropout keeps the requested overlap fraction") {
    cfg.overlap = 0.5;
    const FramePair pair = make_synthetic_pair(6, cfg);
    CHECK(pair.p.size() == cfg.n_points);
    CHECK(pair.q.size() == cfg.n_points / 2);
  }

  SUBCASE("noise perturbs q by roughly sigma") {
    cfg.noise_sigma = 0.01;
    const FramePair pair = make_synthetic_pair(7, cfg);
    const PointCloud q_in_p = transform_cloud(pair.q, delta_to_transform(pair.target));
    const double worst = (q_in_p.xyz - pair.p.xyz).cwiseAbs().maxCoeff();
    CHECK(worst > 1e-6);
    CHECK(worst < 0.1);
  }
}
