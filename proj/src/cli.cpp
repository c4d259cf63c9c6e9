#include "lo/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "lo/dataio.hpp"
#include "lo/evaluation.hpp"
#include "lo/gradsuite.hpp"
#include "lo/training.hpp"

namespace lo {

namespace fs = std::filesystem;

namespace {

ModelConfig preset_config(const std::string& preset) {
  if (preset == "table1") return ModelConfig::table1();
  if (preset == "reduced") return ModelConfig::reduced();
  throw InvalidConfig("unknown preset '" + preset + "' (table1|reduced)");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidConfig("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

void echo_resolved_config(CLI::App* sub, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text_file((fs::path(out_dir) / "resolved.cfg").string(),
                  sub->config_to_str(true, false));
}

// Frame pairs of one sequence, eagerly decoded. max_pairs = 0 keeps all.
void append_sequence_pairs(const std::string& root, int seq, bool lidar_frame,
                           std::size_t max_pairs, std::vector<FramePair>* pairs) {
  const SequenceData data = locate_sequence(root, seq);
  if (data.poses_cam.size() < 2)
    throw MalformedPose("sequence " + sequence_name(seq) +
                        " has no pose ground truth");
  const CalibTr calib = lidar_frame ? CalibTr::identity() : data.calib;
  const std::vector<PoseDelta> deltas = relative_gt(data.poses_cam, calib);
  const std::size_t n_pairs =
      std::min(deltas.size(), data.scan_files.size() > 0 ? data.scan_files.size() - 1
                                                         : std::size_t{0});
  for (std::size_t t = 0; t < n_pairs; ++t) {
    if (max_pairs > 0 && pairs->size() >= max_pairs) return;
    FramePair pair;
    pair.p = read_scan_file(data.scan_files[t]);
    pair.q = read_scan_file(data.scan_files[t + 1]);
    pair.target = deltas[t];
    pairs->push_back(std::move(pair));
  }
}

struct TrainCli {
  std::string root;
  std::vector<int> sequences = SplitSpec::standard().train;
  std::vector<int> test_sequences = SplitSpec::standard().test;
  std::string out = "run";
  std::string preset = "table1";
  std::string precision = "float";
  std::string frame = "kitti";
  std::size_t max_pairs = 0;
  Eigen::Index pre_subsample = 16384;
  bool full_cloud = false;
  bool non_deterministic = false;
  bool canonical_fps = false;
  TrainConfig cfg;
};

template <typename T>
void run_train(const TrainCli& opt, const ModelConfig& mcfg,
               const std::vector<FramePair>& train_pairs,
               const std::vector<FramePair>& test_pairs) {
  TrainConfig cfg = opt.cfg;
  cfg.checkpoint_dir = (fs::path(opt.out) / "checkpoints").string();
  const auto [params, history] = train<T>(train_pairs, test_pairs, mcfg, cfg);
  write_text_file((fs::path(opt.out) / "history.csv").string(),
                  history.to_csv(!cfg.deterministic));
  if (!history.records.empty()) {
    const EpochRecord& last = history.records.back();
    std::printf("final epoch %d train_loss %.9g test_loss %.9g\n", last.epoch,
                last.train_loss, last.test_loss);
  }
  std::printf("parameters %lld\n",
              static_cast<long long>(count_parameters(params)));
}

int cmd_train(CLI::App* sub, TrainCli& opt) {
  ModelConfig mcfg = preset_config(opt.preset);
  mcfg.pre_subsample = opt.full_cloud ? 0 : opt.pre_subsample;
  mcfg.canonical_fps_start = opt.canonical_fps;
  opt.cfg.deterministic = !opt.non_deterministic;

  const bool lidar_frame = opt.frame == "lidar";
  std::vector<FramePair> train_pairs, test_pairs;
  for (int seq : opt.sequences)
    append_sequence_pairs(opt.root, seq, lidar_frame, opt.max_pairs, &train_pairs);
  for (int seq : opt.test_sequences)
    append_sequence_pairs(opt.root, seq, lidar_frame, opt.max_pairs, &test_pairs);

  echo_resolved_config(sub, opt.out);
  if (opt.precision == "float") run_train<float>(opt, mcfg, train_pairs, test_pairs);
  else if (opt.precision == "double") run_train<double>(opt, mcfg, train_pairs, test_pairs);
  else throw InvalidConfig("precision must be float or double");
  return 0;
}

struct InferCli {
  std::string root;
  int sequence = 0;
  std::string out = "run";
  std::string checkpoint;
  std::string preset = "table1";
  std::string precision = "float";
  std::string frame = "kitti";
  Eigen::Index pre_subsample = 16384;
  bool full_cloud = false;
  bool use_gt_deltas = false;
  std::uint64_t seed = 0;
};

template <typename T>
std::vector<PoseDelta> network_deltas(const InferCli& opt, const ModelConfig& mcfg,
                                      const SequenceData& data) {
  ModelParams<T> params;
  unpack_checkpoint(read_checkpoint(opt.checkpoint), params);
  std::vector<PoseDelta> deltas;
  PointCloud prev = read_scan_file(data.scan_files[0]);
  for (std::size_t t = 1; t < data.scan_files.size(); ++t) {
    PointCloud next = read_scan_file(data.scan_files[t]);
    deltas.push_back(model_forward(prev, next, params, mcfg,
                                   splitmix64(opt.seed ^ t)));
    prev = std::move(next);
  }
  return deltas;
}

int cmd_infer(CLI::App* sub, InferCli& opt) {
  ModelConfig mcfg = preset_config(opt.preset);
  mcfg.pre_subsample = opt.full_cloud ? 0 : opt.pre_subsample;

  const SequenceData data = locate_sequence(opt.root, opt.sequence);
  const bool lidar_frame = opt.frame == "lidar";
  const CalibTr calib = lidar_frame ? CalibTr::identity() : data.calib;

  std::vector<PoseDelta> deltas;
  if (opt.use_gt_deltas) {
    if (data.poses_cam.size() < 2)
      throw MalformedPose("--use-gt-deltas needs pose ground truth");
    deltas = relative_gt(data.poses_cam, calib);
  } else {
    if (opt.checkpoint.empty())
      throw InvalidConfig("--checkpoint is required without --use-gt-deltas");
    if (opt.precision == "float") deltas = network_deltas<float>(opt, mcfg, data);
    else if (opt.precision == "double") deltas = network_deltas<double>(opt, mcfg, data);
    else throw InvalidConfig("precision must be float or double");
  }

  echo_resolved_config(sub, opt.out);
  const fs::path out(opt.out);
  fs::create_directories(out / "predictions");
  fs::create_directories(out / "deltas");

  std::string csv = "tx,ty,tz,rx,ry,rz\n";
  char line[200];
  for (const PoseDelta& d : deltas) {
    std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", d.t(0),
                  d.t(1), d.t(2), d.r(0), d.r(1), d.r(2));
    csv += line;
  }
  write_text_file((out / "deltas" / (sequence_name(opt.sequence) + ".csv")).string(),
                  csv);

  // Deltas live in the LiDAR frame; conjugate the accumulated trajectory
  // back through Tr so predictions share the ground-truth pose frame.
  Trajectory traj = accumulate(deltas);
  if (!lidar_frame) {
    const RigidTransform tr_inv = invert(data.calib.tr);
    for (RigidTransform& t : traj)
      t = compose(data.calib.tr, compose(t, tr_inv));
  }
  write_text_file(
      (out / "predictions" / (sequence_name(opt.sequence) + ".txt")).string(),
      write_poses(traj));
  std::printf("wrote %zu poses\n", traj.size());
  return 0;
}

int cmd_evaluate(CLI::App* sub, const std::string& gt_file,
                 const std::string& pred_file, std::vector<double> lengths,
                 std::size_t stride, const std::string& out_dir) {
  const Trajectory gt = read_poses_file(gt_file);
  const Trajectory pred = read_poses_file(pred_file);
  if (lengths.empty()) lengths = standard_lengths();
  const SubSequenceSet set = subsequence_set(gt, lengths, stride);
  const OdomErrors errors = odometry_errors(gt, pred, set);
  const std::string report = error_report_csv(errors);
  if (!out_dir.empty()) {
    echo_resolved_config(sub, out_dir);
    write_text_file((fs::path(out_dir) / "report.csv").string(), report);
  }
  std::fputs(report.c_str(), stdout);
  return 0;
}

int cmd_preprocess(CLI::App* sub, const std::string& root, int seq,
                   const std::string& out_root, double threshold, int iterations,
                   std::uint64_t seed) {
  const SequenceData data = locate_sequence(root, seq);
  const fs::path scan_dir =
      fs::path(out_root) / "sequences" / sequence_name(seq) / "velodyne";
  fs::create_directories(scan_dir);
  echo_resolved_config(sub, out_root);

  for (std::size_t t = 0; t < data.scan_files.size(); ++t) {
    const PointCloud cloud = read_scan_file(data.scan_files[t]);
    const PlaneRemovalResult result = remove_dominant_plane(
        cloud, threshold, iterations, splitmix64(seed ^ t));
    const std::string name = fs::path(data.scan_files[t]).filename().string();
    write_scan_file((scan_dir / name).string(), result.cloud);
    const double fraction =
        cloud.size() > 0
            ? static_cast<double>(result.plane.inlier_count) /
                  static_cast<double>(cloud.size())
            : 0.0;
    std::printf("%s %.6f\n", fs::path(name).stem().string().c_str(), fraction);
  }

  const std::string calib_src = calib_path(root, seq);
  if (fs::exists(calib_src)) {
    fs::create_directories(fs::path(calib_path(out_root, seq)).parent_path());
    fs::copy_file(calib_src, calib_path(out_root, seq),
                  fs::copy_options::overwrite_existing);
  }
  const std::string poses_src = poses_path(root, seq);
  if (fs::exists(poses_src)) {
    fs::create_directories(fs::path(poses_path(out_root, seq)).parent_path());
    fs::copy_file(poses_src, poses_path(out_root, seq),
                  fs::copy_options::overwrite_existing);
  }
  return 0;
}

int cmd_synth(CLI::App* sub, const std::string& out_root, int seq, int frames,
              std::int32_t points, std::uint64_t seed, double max_t, double max_r,
              double noise, double plane_fraction, double extent) {
  if (frames < 2) throw InvalidConfig("synth needs at least 2 frames");
  echo_resolved_config(sub, out_root);
  const fs::path scan_dir =
      fs::path(out_root) / "sequences" / sequence_name(seq) / "velodyne";
  fs::create_directories(scan_dir);
  fs::create_directories(fs::path(out_root) / "poses");

  const SyntheticScene scene =
      synthetic_street_scene(seed, points, plane_fraction, extent);

  Rng rng = Rng::fork(seed, 0x20f1);
  Trajectory traj{RigidTransform{}};
  for (int t = 1; t < frames; ++t) {
    PoseDelta d;
    d.t(0) = max_t * rng.uniform(0.5, 1.0);  // forward-dominant motion
    d.t(1) = max_t * rng.uniform(-0.1, 0.1);
    d.t(2) = max_t * rng.uniform(-0.05, 0.05);
    for (int k = 0; k < 3; ++k) d.r(k) = rng.uniform(-max_r, max_r);
    traj.push_back(compose(traj.back(), delta_to_transform(d)));
  }

  for (int t = 0; t < frames; ++t) {
    PointCloud view = transform_cloud(scene.cloud, invert(traj[static_cast<std::size_t>(t)]));
    if (noise > 0.0) {
      for (Eigen::Index i = 0; i < view.size(); ++i)
        for (int k = 0; k < 3; ++k) view.xyz(i, k) += noise * rng.gaussian();
    }
    char name[16];
    std::snprintf(name, sizeof name, "%06d.bin", t);
    write_scan_file((scan_dir / name).string(), view);
  }

  write_text_file(poses_path(out_root, seq), write_poses(traj));
  write_text_file(calib_path(out_root, seq),
                  "Tr: 1 0 0 0 0 1 0 0 0 0 1 0\n");
  std::printf("wrote %d frames to %s\n", frames, out_root.c_str());
  return 0;
}

int cmd_params(const std::string& preset) {
  const ModelConfig cfg = preset_config(preset);
  const ModelParams<float> params = init_params<float>(cfg, 0);
  std::printf("%lld\n", static_cast<long long>(count_parameters(params)));
  return 0;
}

int cmd_gradcheck(bool quick, std::uint64_t seed) {
  const std::vector<GradCheckResult> results = run_gradient_suite(quick, seed);
  bool all_pass = true;
  for (const GradCheckResult& r : results) {
    std::printf("%-20s %12.5g (threshold %g) %s\n", r.name.c_str(), r.max_rel_err,
                r.threshold, r.pass ? "PASS" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) {
    std::fprintf(stderr, "gradient verification failed\n");
    return 1;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"LiDAR odometry network: preprocessing, training, inference, "
               "and KITTI sub-sequence evaluation"};
  app.require_subcommand(1);

  // --- preprocess ---
  auto* pre = app.add_subcommand("preprocess", "RANSAC plane removal over a sequence");
  std::string pre_root, pre_out;
  int pre_seq = 0;
  double pre_threshold = 0.3;
  int pre_iterations = 200;
  std::uint64_t pre_seed = 0;
  pre->add_option("--root", pre_root, "Dataset root")->required();
  pre->add_option("--sequence", pre_seq, "Sequence id");
  pre->add_option("--out", pre_out, "Output dataset root")->required();
  pre->add_option("--threshold", pre_threshold, "Inlier distance, meters");
  pre->add_option("--iterations", pre_iterations, "RANSAC iterations");
  pre->add_option("--seed", pre_seed, "RNG seed");
  pre->set_config("--config");

  // --- train ---
  auto* tr = app.add_subcommand("train", "Train the odometry network");
  TrainCli tropt;
  tr->add_option("--root", tropt.root, "Dataset root")->required();
  tr->add_option("--sequences", tropt.sequences, "Training sequence ids")
      ->delimiter(',');
  tr->add_option("--test-sequences", tropt.test_sequences,
                 "Held-out sequence ids for the per-epoch test loss")
      ->delimiter(',');
  tr->add_option("--out", tropt.out, "Output directory");
  tr->add_option("--preset", tropt.preset, "Model preset (table1|reduced)");
  tr->add_option("--precision", tropt.precision, "float|double");
  tr->add_option("--frame", tropt.frame,
                 "kitti: conjugate camera poses through Tr; lidar: poses are "
                 "already LiDAR-frame");
  tr->add_option("--max-pairs", tropt.max_pairs, "Cap on loaded pairs (0 = all)");
  tr->add_option("--pre-subsample", tropt.pre_subsample,
                 "Input cloud cap before SA1 (0 = whole cloud)");
  tr->add_flag("--full-cloud", tropt.full_cloud, "Feed clouds whole");
  tr->add_flag("--canonical-fps", tropt.canonical_fps,
               "Start FPS at the centroid-most point");
  tr->add_option("--epochs", tropt.cfg.epochs, "Training epochs");
  tr->add_option("--lr", tropt.cfg.lr_base, "Base learning rate");
  tr->add_option("--decay-epochs", tropt.cfg.lr_decay_epochs,
                 "Epochs where the rate decays")
      ->delimiter(',');
  tr->add_option("--decay-factor", tropt.cfg.lr_decay_factor, "Decay multiplier");
  tr->add_option("--batch-pairs", tropt.cfg.batch_pairs,
                 "Pairs per gradient-accumulation batch");
  tr->add_option("--swap-prob", tropt.cfg.swap_probability,
                 "Pair order swap probability");
  tr->add_option("--cos-weight", tropt.cfg.cos_reg_weight,
                 "Cosine distance regularizer weight (0 disables)");
  tr->add_flag("--cos-translation-only", tropt.cfg.cos_translation_only,
               "Regularize the translation components only");
  tr->add_option("--seed", tropt.cfg.seed, "RNG seed");
  tr->add_flag("--non-deterministic", tropt.non_deterministic,
               "Allow wall-clock data in outputs");
  tr->add_option("--checkpoint-every", tropt.cfg.checkpoint_every,
                 "Checkpoint period in epochs (0 = final only)");
  tr->set_config("--config");

  // --- infer ---
  auto* in = app.add_subcommand("infer", "Per-pair deltas and accumulated trajectory");
  InferCli inopt;
  in->add_option("--root", inopt.root, "Dataset root")->required();
  in->add_option("--sequence", inopt.sequence, "Sequence id");
  in->add_option("--out", inopt.out, "Output directory");
  in->add_option("--checkpoint", inopt.checkpoint, "Model checkpoint");
  in->add_option("--preset", inopt.preset, "Model preset (table1|reduced)");
  in->add_option("--precision", inopt.precision, "float|double");
  in->add_option("--frame", inopt.frame, "kitti|lidar (see train)");
  in->add_option("--pre-subsample", inopt.pre_subsample,
                 "Input cloud cap before SA1 (0 = whole cloud)");
  in->add_flag("--full-cloud", inopt.full_cloud, "Feed clouds whole");
  in->add_flag("--use-gt-deltas", inopt.use_gt_deltas,
               "Inject ground-truth deltas instead of running the network");
  in->add_option("--seed", inopt.seed, "RNG seed for pre-subsampling");
  in->set_config("--config");

  // --- evaluate ---
  auto* ev = app.add_subcommand("evaluate", "KITTI sub-sequence error report");
  std::string ev_gt, ev_pred, ev_out;
  std::vector<double> ev_lengths;
  std::size_t ev_stride = 1;
  ev->add_option("--gt", ev_gt, "Ground-truth pose file")->required();
  ev->add_option("--pred", ev_pred, "Predicted pose file")->required();
  ev->add_option("--lengths", ev_lengths, "Sub-sequence lengths, meters")
      ->delimiter(',');
  ev->add_option("--stride", ev_stride, "Start-frame stride");
  ev->add_option("--out", ev_out, "Output directory for report.csv");
  ev->set_config("--config");

  // --- params ---
  auto* pa = app.add_subcommand("params", "Print the trainable parameter count");
  std::string pa_preset = "table1";
  pa->add_option("--preset", pa_preset, "Model preset (table1|reduced)");

  // --- gradcheck ---
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference verification suite");
  bool gc_quick = false;
  std::uint64_t gc_seed = 7;
  gc->add_flag("--quick", gc_quick, "Skip the full-model check");
  gc->add_option("--seed", gc_seed, "RNG seed");

  // --- synth ---
  auto* sy = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  std::string sy_out;
  int sy_seq = 0, sy_frames = 32;
  std::int32_t sy_points = 512;
  std::uint64_t sy_seed = 0;
  double sy_max_t = 0.3, sy_max_r = 2.0, sy_noise = 0.0;
  double sy_plane_fraction = 0.45, sy_extent = 10.0;
  sy->add_option("--out", sy_out, "Output dataset root")->required();
  sy->add_option("--sequence", sy_seq, "Sequence id");
  sy->add_option("--frames", sy_frames, "Frame count");
  sy->add_option("--points", sy_points, "Points per scan");
  sy->add_option("--seed", sy_seed, "RNG seed");
  sy->add_option("--max-t", sy_max_t, "Per-step translation bound, meters");
  sy->add_option("--max-r", sy_max_r, "Per-step rotation bound, degrees");
  sy->add_option("--noise", sy_noise, "Per-frame point noise sigma, meters");
  sy->add_option("--plane-fraction", sy_plane_fraction, "Exact plane-point fraction");
  sy->add_option("--extent", sy_extent, "Ground plane half-width, meters");
  sy->set_config("--config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pre->parsed())
      return cmd_preprocess(pre, pre_root, pre_seq, pre_out, pre_threshold,
                            pre_iterations, pre_seed);
    if (tr->parsed()) return cmd_train(tr, tropt);
    if (in->parsed()) return cmd_infer(in, inopt);
    if (ev->parsed())
      return cmd_evaluate(ev, ev_gt, ev_pred, ev_lengths, ev_stride, ev_out);
    if (pa->parsed()) return cmd_params(pa_preset);
    if (gc->parsed()) return cmd_gradcheck(gc_quick, gc_seed);
    if (sy->parsed())
      return cmd_synth(sy, sy_out, sy_seq, sy_frames, sy_points, sy_seed, sy_max_t,
                       sy_max_r, sy_noise, sy_plane_fraction, sy_extent);
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

}  // namespace lo
