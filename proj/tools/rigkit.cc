// rigkit command-line tool. JSON (or CSV) results go to stdout or --out,
// human-readable progress to stderr.
//
// Exit codes: 0 success, 1 a requested --assert threshold failed, 2 usage
// or I/O error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rigkit/container.h"
#include "rigkit/discovery.h"
#include "rigkit/metrics.h"
#include "rigkit/micromodel.h"
#include "rigkit/parallel.h"
#include "rigkit/synthetic.h"

namespace {

using json = nlohmann::json;
using namespace rigkit;

constexpr int kExitAssert = 1;
constexpr int kExitUsage = 2;

// Thrown when an --assert threshold is not met.
struct AssertionFailed {
  std::string what;
};

std::pair<int, int> ParseSize(const std::string& text) {
  int rows = 0;
  int cols = 0;
  char x = 0;
  std::istringstream in(text);
  in >> rows >> x >> cols;
  RIGKIT_CHECK(in && !in.rdbuf()->in_avail() && (x == 'x' || x == 'X') &&
                   rows > 0 && cols > 0,
               ErrorCode::kInvalidInput,
               "size must look like HxW, got '" + text + "'");
  return {rows, cols};
}

json PoseJson(const Pose& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({pose.rotation(r, 0), pose.rotation(r, 1),
                   pose.rotation(r, 2)});
  }
  return {{"rotation", rot},
          {"center", {pose.center.x(), pose.center.y(), pose.center.z()}}};
}

void PrintJson(const json& j) { std::cout << j.dump(2) << std::endl; }

void Check(bool ok, const std::string& what) {
  if (!ok) throw AssertionFailed{what};
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  int cameras = 5;
  int frames = 24;
  std::string size = "64x64";
  std::uint64_t seed = 0;
  std::string trajectory = "line";
  double speed = 5.0;
  std::string out;
};

int RunGen(const GenArgs& a) {
  GenerateOptions opt;
  opt.num_cameras = a.cameras;
  opt.num_frames = a.frames;
  std::tie(opt.rows, opt.cols) = ParseSize(a.size);
  opt.seed = a.seed;
  opt.trajectory = ParseTrajectoryKind(a.trajectory);
  opt.speed = a.speed;
  const SceneContainer scene = GenerateScene(opt).ToContainer();
  WriteContainer(scene, a.out);
  std::cerr << "wrote " << scene.frames.size() << " frames from a "
            << a.cameras << "-camera rig to " << a.out << "\n";
  PrintJson({{"out", a.out},
             {"frames", scene.frames.size()},
             {"cameras", a.cameras},
             {"size", {opt.rows, opt.cols}}});
  return 0;
}

// ---------------------------------------------------------------- recover

struct RecoverArgs {
  std::string raymap;
  std::string size;
  std::string scene;
  int pairs = 256;
  std::uint64_t seed = 0;
  double assert_tol = -1.0;
};

json CameraJson(const Camera& cam) {
  json j = PoseJson(cam.pose());
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  return j;
}

int RunRecover(const RecoverArgs& a) {
  const CameraRecoveryOptions opt{a.pairs, a.seed};
  json cameras = json::array();
  if (!a.raymap.empty()) {
    RIGKIT_CHECK(!a.size.empty(), ErrorCode::kInvalidInput,
                 "--raymap needs --size HxW");
    const auto [rows, cols] = ParseSize(a.size);
    const Blob blob = ReadBlobFile(a.raymap, {rows, cols, 6});
    const Camera cam = CameraFromRaymap(RaymapFromBlob(blob, FrameTag::kPose), opt);
    cameras.push_back(CameraJson(cam));
    PrintJson({{"cameras", cameras}});
    return 0;
  }
  RIGKIT_CHECK(!a.scene.empty(), ErrorCode::kInvalidInput,
               "give --raymap FILE --size HxW or --scene DIR");
  const SceneContainer scene = ReadContainer(a.scene);
  double max_focal = 0.0;
  double max_rot = 0.0;
  double max_center = 0.0;
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const FrameRecord& frame = scene.frames[f];
    const Camera cam = CameraFromRaymap(FramePoseRaymap(frame), opt);
    const double focal_err =
        std::max(std::abs(cam.fx - frame.intrinsics.fx) / frame.intrinsics.fx,
                 std::abs(cam.fy - frame.intrinsics.fy) / frame.intrinsics.fy);
    const double rot_err =
        RotationAngle(cam.rotation, frame.world_pose.rotation);
    const double center_err = (cam.center - frame.world_pose.center).norm();
    max_focal = std::max(max_focal, focal_err);
    max_rot = std::max(max_rot, rot_err);
    max_center = std::max(max_center, center_err);
    json j = CameraJson(cam);
    j["frame"] = f;
    j["camera_id"] = frame.camera_id;
    j["error"] = {{"focal_rel", focal_err},
                  {"rotation_rad", rot_err},
                  {"center", center_err}};
    cameras.push_back(j);
  }
  std::cerr << "recovered " << cameras.size()
            << " cameras; max focal rel err " << max_focal
            << ", max rotation err " << max_rot << " rad, max center err "
            << max_center << "\n";
  PrintJson({{"cameras", cameras},
             {"max_error",
              {{"focal_rel", max_focal},
               {"rotation_rad", max_rot},
               {"center", max_center}}}});
  if (a.assert_tol >= 0.0) {
    Check(max_focal <= a.assert_tol && max_rot <= a.assert_tol &&
              max_center <= a.assert_tol,
          "recovery error above --assert-tol");
  }
  return 0;
}

// ---------------------------------------------------------------- discover

struct DiscoverArgs {
  std::string scene;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double threshold = 0.25;
  double gamma = 0.5;
  double assert_accuracy = -1.0;
};

int RunDiscover(const DiscoverArgs& a) {
  const SceneContainer scene = ReadContainer(a.scene);
  RIGKIT_CHECK(!scene.frames.empty(), ErrorCode::kInvalidInput,
               "scene has no frames");
  const ClusterOptions opt{a.threshold, a.gamma};
  const std::vector<int> ids = CameraIds(scene);

  std::vector<Pose> decoded(scene.frames.size());
  if (a.noise_sigma > 0.0) {
    RIGKIT_CHECK(scene.rig.has_value(), ErrorCode::kInvalidInput,
                 "--noise-sigma needs a scene with rig calibration");
    std::mt19937_64 rng(a.seed);
    std::vector<std::uint64_t> seeds(decoded.size());
    for (auto& s : seeds) s = rng();
    ParallelFor(decoded.size(), [&](std::size_t f) {
      const RigCalibration noisy = PerturbRig(*scene.rig, a.noise_sigma, seeds[f]);
      decoded[f] = DecodeRigPose(RigRaymap(noisy, ids[f], scene.rows, scene.cols));
    });
  } else {
    ParallelFor(decoded.size(), [&](std::size_t f) {
      decoded[f] = DecodeRigPose(FrameRigRaymap(scene.frames[f]));
    });
  }
  const RigCalibration* gt_rig = scene.rig ? &*scene.rig : nullptr;
  const DiscoveryReport report =
      DiscoverRigFromPoses(decoded, opt, std::span<const int>(ids), gt_rig);

  json clusters = json::array();
  for (int c = 0; c < report.clusters.num_clusters; ++c) {
    json j = PoseJson(report.cluster_poses[c]);
    j["cluster"] = c;
    j["matched_camera"] = report.matching->cluster_to_camera[c];
    clusters.push_back(j);
  }
  json out = {{"frames", decoded.size()},
              {"num_clusters", report.clusters.num_clusters},
              {"no_rig", report.no_rig},
              {"labels", report.clusters.labels},
              {"clusters", clusters},
              {"rig_id_accuracy", report.matching->accuracy}};
  if (report.rig_maa) {
    out["rig_maa"] = report.rig_maa->value;
    out["rig_maa_valid"] = report.rig_maa->valid;
    if (!report.rig_maa->note.empty()) out["note"] = report.rig_maa->note;
  }
  std::cerr << "discovered " << report.clusters.num_clusters << " camera(s)"
            << (report.no_rig ? " (no rig)" : "") << ", rig-ID accuracy "
            << report.matching->accuracy << "\n";
  PrintJson(out);
  if (a.assert_accuracy >= 0.0) {
    Check(report.matching->accuracy >= a.assert_accuracy,
          "rig-ID accuracy below --assert-accuracy");
  }
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string mode = "both";
  std::string align = "none";
  double tau = 15.0;
  double assert_maa = -1.0;
  double assert_chamfer = -1.0;
};

std::vector<Pose> PosesOf(const SceneContainer& scene) {
  std::vector<Pose> poses(scene.frames.size());
  ParallelFor(poses.size(), [&](std::size_t f) {
    const FrameRecord& frame = scene.frames[f];
    poses[f] = frame.Has("pose_raymap")
                   ? CameraFromRaymap(FramePoseRaymap(frame)).pose()
                   : frame.world_pose;
  });
  return poses;
}

json EvaluateScenes(const SceneContainer& pred, const SceneContainer& gt,
                    const std::string& mode, Alignment align, double tau) {
  RIGKIT_CHECK(mode == "pose" || mode == "points" || mode == "both",
               ErrorCode::kInvalidInput, "--mode must be pose, points or both");
  RIGKIT_CHECK(pred.frames.size() == gt.frames.size(),
               ErrorCode::kShapeMismatch,
               "prediction has " + std::to_string(pred.frames.size()) +
                   " frames, ground truth " + std::to_string(gt.frames.size()));
  json out;
  if (mode != "points") {
    const std::vector<Pose> pp = PosesOf(pred);
    const std::vector<Pose> gp = WorldPoses(gt);
    const PairwiseErrors errors = ComputePairwiseErrors(pp, gp);
    const PoseAccuracy acc = RraRta(errors, tau);
    out["pose"] = {{"pairs", errors.pairs.size()},
                   {"tau_deg", tau},
                   {"rra", acc.rra},
                   {"rta", acc.rta},
                   {"maa", Maa(errors)}};
  }
  if (mode != "pose") {
    std::vector<Pointmap> pm;
    std::vector<Pointmap> gm;
    for (std::size_t f = 0; f < gt.frames.size(); ++f) {
      pm.push_back(FramePointmap(pred.frames[f]));
      gm.push_back(FramePointmap(gt.frames[f]));
    }
    const PointcloudScores s = PointcloudMetrics(pm, gm, align);
    out["points"] = {{"accuracy", s.accuracy},
                     {"completeness", s.completeness},
                     {"chamfer", s.chamfer},
                     {"scale", s.scale}};
  }
  return out;
}

void CheckEvalAsserts(const json& out, double assert_maa,
                      double assert_chamfer) {
  if (assert_maa >= 0.0 && out.contains("pose")) {
    Check(out["pose"]["maa"].get<double>() >= assert_maa,
          "mAA below --assert-maa");
  }
  if (assert_chamfer >= 0.0 && out.contains("points")) {
    Check(out["points"]["chamfer"].get<double>() <= assert_chamfer,
          "chamfer above --assert-chamfer");
  }
}

int RunEval(const EvalArgs& a) {
  const SceneContainer pred = ReadContainer(a.pred);
  const SceneContainer gt = ReadContainer(a.gt);
  const json out = EvaluateScenes(pred, gt, a.mode, ParseAlignment(a.align), a.tau);
  std::cerr << "evaluated " << gt.frames.size() << " frames\n";
  PrintJson(out);
  CheckEvalAsserts(out, a.assert_maa, a.assert_chamfer);
  return 0;
}

// ---------------------------------------------------------------- noise-sweep

struct SweepArgs {
  std::string scene;
  std::vector<double> sigmas = {0.0, 0.05, 0.1, 0.2, 0.4};
  int trials = 20;
  std::uint64_t seed = 0;
  std::string out;
  double threshold = 0.25;
  double gamma = 0.5;
};

int RunNoiseSweep(const SweepArgs& a) {
  const SceneContainer scene = ReadContainer(a.scene);
  RIGKIT_CHECK(scene.rig.has_value(), ErrorCode::kInvalidInput,
               "noise sweep needs a scene with rig calibration");
  RIGKIT_CHECK(a.trials >= 1, ErrorCode::kInvalidInput,
               "--trials must be positive");
  const std::vector<int> ids = CameraIds(scene);
  const ClusterOptions opt{a.threshold, a.gamma};

  std::ostringstream csv;
  csv << "sigma,trial,rig_maa,rig_id_accuracy,num_clusters,aggregate\n";
  csv.precision(10);
  json summary = json::array();
  for (double sigma : a.sigmas) {
    double sum_maa = 0.0;
    double sum_acc = 0.0;
    double sum_k = 0.0;
    for (int t = 0; t < a.trials; ++t) {
      // Trial t uses the same seed at every sigma, so noise directions are
      // shared across levels and only their magnitude changes.
      const NoiseTrialResult r = RunNoiseTrial(
          *scene.rig, ids, scene.rows, scene.cols, sigma, a.seed + t, opt);
      csv << sigma << "," << t << "," << r.rig_maa << "," << r.rig_id_accuracy
          << "," << r.num_clusters << ",0\n";
      sum_maa += r.rig_maa;
      sum_acc += r.rig_id_accuracy;
      sum_k += r.num_clusters;
    }
    const double n = a.trials;
    csv << sigma << ",mean," << sum_maa / n << "," << sum_acc / n << ","
        << sum_k / n << ",1\n";
    summary.push_back({{"sigma", sigma},
                       {"mean_rig_maa", sum_maa / n},
                       {"mean_rig_id_accuracy", sum_acc / n},
                       {"mean_num_clusters", sum_k / n}});
    std::cerr << "sigma " << sigma << ": mean rig mAA " << sum_maa / n
              << ", mean rig-ID accuracy " << sum_acc / n << "\n";
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream file(a.out);
    file << csv.str();
    RIGKIT_CHECK(file.good(), ErrorCode::kIo, "cannot write " + a.out);
    PrintJson({{"out", a.out}, {"trials", a.trials}, {"levels", summary}});
  }
  return 0;
}

// ---------------------------------------------------------------- micromodel

MicroModelConfig LoadConfig(const std::string& path) {
  if (path.empty()) return MicroModelConfig::Tiny();
  std::ifstream in(path);
  RIGKIT_CHECK(in.good(), ErrorCode::kIo, "cannot read config " + path);
  std::stringstream text;
  text << in.rdbuf();
  return MicroModelConfig::FromJson(text.str());
}

struct CheckGradArgs {
  std::string config;
  std::uint64_t seed = 0;
  double eps = 1e-4;
  double tolerance = 1e-4;
  bool assert_pass = false;
};

int RunCheckGrad(const CheckGradArgs& a) {
  MicroModelConfig cfg = LoadConfig(a.config);
  GenerateOptions gen;
  gen.num_cameras = 3;
  gen.num_frames = std::max(cfg.frames, 1);
  gen.rows = cfg.rows;
  gen.cols = cfg.cols;
  gen.seed = a.seed;
  const TrainingSample sample =
      SampleFromScene(GenerateScene(gen).ToContainer(), cfg);
  const ModelState state = InitModel(cfg);
  const GradCheckReport report =
      CheckGradients(state, sample.input, sample.targets, a.eps, a.tolerance);
  json groups = json::array();
  for (const GradCheckGroup& g : report.groups) {
    groups.push_back({{"name", g.name},
                      {"checked", g.checked},
                      {"max_rel_error", g.max_rel_error},
                      {"passed", g.passed}});
  }
  std::cerr << (report.passed ? "PASS" : "FAIL")
            << " gradient check: max relative error " << report.max_rel_error
            << " over " << report.groups.size() << " tensors\n";
  PrintJson({{"passed", report.passed},
             {"max_rel_error", report.max_rel_error},
             {"tolerance", a.tolerance},
             {"groups", groups}});
  if (a.assert_pass) Check(report.passed, "gradient check failed");
  return 0;
}

json LossJson(const LossBreakdown& l) {
  return {{"total", l.total},
          {"pointmap", l.pointmap},
          {"pointmap_residual", l.pointmap_residual},
          {"pose_raymap", l.pose_raymap},
          {"rig_raymap", l.rig_raymap},
          {"zbar", l.zbar}};
}

struct TrainArgs {
  std::string scene;
  std::string config;
  int steps = 2000;
  double step_size = 1e-3;
  std::string out;
  std::string curve;
  double assert_ratio = -1.0;
};

int RunTrain(const TrainArgs& a) {
  const MicroModelConfig cfg = LoadConfig(a.config);
  const TrainingSample sample = SampleFromScene(ReadContainer(a.scene), cfg);
  const TrainResult r = TrainOverfit(
      cfg, sample, a.steps, a.step_size, [&](int step, double loss) {
        if ((step + 1) % 100 == 0) {
          std::cerr << "step " << step + 1 << " loss " << loss << "\n";
        }
      });
  if (!a.out.empty()) SaveCheckpoint(r.state, a.out);
  if (!a.curve.empty()) {
    std::ofstream file(a.curve);
    file.precision(17);
    file << "step,loss\n";
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
      file << i << "," << r.loss_curve[i] << "\n";
    }
    RIGKIT_CHECK(file.good(), ErrorCode::kIo, "cannot write " + a.curve);
  }
  const double ratio = r.final.total / r.initial.total;
  std::cerr << "final/initial loss ratio " << ratio
            << (r.diverged ? " (diverged: " + r.message + ")" : "") << "\n";
  PrintJson({{"steps_run", r.steps_run},
             {"initial", LossJson(r.initial)},
             {"final", LossJson(r.final)},
             {"ratio", ratio},
             {"diverged", r.diverged},
             {"message", r.message},
             {"checkpoint", a.out}});
  if (r.diverged) throw AssertionFailed{"training diverged: " + r.message};
  if (a.assert_ratio >= 0.0) {
    Check(ratio < a.assert_ratio, "loss ratio not below --assert-ratio");
  }
  return 0;
}

struct ModelEvalArgs {
  std::string ckpt;
  std::string scene;
  std::string out;
  std::string mode = "both";
  std::string align = "scale";
  double tau = 15.0;
  double assert_maa = -1.0;
  double assert_chamfer = -1.0;
};

int RunModelEval(const ModelEvalArgs& a) {
  const ModelState state = LoadCheckpoint(a.ckpt);
  SceneContainer gt = ReadContainer(a.scene);
  const TrainingSample sample = SampleFromScene(gt, state.config);
  gt.frames.resize(sample.input.images.size());
  const std::vector<FrameOutput> outputs = Forward(state, sample.input);

  SceneContainer pred;
  pred.kind = "prediction";
  pred.rows = gt.rows;
  pred.cols = gt.cols;
  for (std::size_t f = 0; f < outputs.size(); ++f) {
    FrameRecord frame = gt.frames[f];
    frame.blobs.clear();
    frame.blobs["pose_raymap"] = RaymapToBlob(PredictedPoseRaymap(outputs[f]));
    frame.blobs["rig_raymap"] = RaymapToBlob(PredictedRigRaymap(outputs[f]));
    frame.blobs["pointmap"] = PointsToBlob(outputs[f].points);
    frame.blobs["confidence"] =
        ScalarsToBlob(ConfidenceMap::FromRaw(outputs[f].conf_raw).values);
    pred.frames.push_back(std::move(frame));
  }
  if (!a.out.empty()) WriteContainer(pred, a.out);
  const json out =
      EvaluateScenes(pred, gt, a.mode, ParseAlignment(a.align), a.tau);
  std::cerr << "evaluated checkpoint on " << pred.frames.size() << " frames\n";
  PrintJson(out);
  CheckEvalAsserts(out, a.assert_maa, a.assert_chamfer);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rigkit: raymap camera recovery, rig discovery and evaluation"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads (default: RIGKIT_THREADS or all cores)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Render a synthetic rig scene");
  gen_cmd->add_option("--cameras", gen.cameras, "Rig size (1, 3, 5 or 7)")
      ->check(CLI::IsMember({1, 3, 5, 7}));
  gen_cmd->add_option("--frames", gen.frames, "Number of frames");
  gen_cmd->add_option("--size", gen.size, "Image size HxW");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--trajectory", gen.trajectory, "line, arc or still")
      ->check(CLI::IsMember({"line", "arc", "still"}));
  gen_cmd->add_option("--speed", gen.speed, "Ego speed in units per second");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  RecoverArgs rec;
  auto* rec_cmd =
      app.add_subcommand("recover", "Recover cameras from pose raymaps");
  auto* rec_raymap =
      rec_cmd->add_option("--raymap", rec.raymap, "Raw float32 HxWx6 file");
  rec_cmd->add_option("--size", rec.size, "Raymap size HxW")->needs(rec_raymap);
  auto* rec_scene = rec_cmd->add_option("--scene", rec.scene, "Scene directory");
  rec_raymap->excludes(rec_scene);
  rec_cmd->add_option("--pairs", rec.pairs, "Pixel pairs for the focal fit");
  rec_cmd->add_option("--seed", rec.seed, "Pixel pair sampling seed");
  rec_cmd->add_option("--assert-tol", rec.assert_tol,
                      "Fail if any error against the manifest exceeds this");

  DiscoverArgs disc;
  auto* disc_cmd =
      app.add_subcommand("discover", "Discover the rig from rig raymaps");
  disc_cmd->add_option("--scene", disc.scene, "Scene directory")->required();
  disc_cmd->add_option("--noise-sigma", disc.noise_sigma,
                       "Perturb the rig per frame before decoding");
  disc_cmd->add_option("--seed", disc.seed, "Noise seed");
  disc_cmd->add_option("--threshold", disc.threshold, "Merge threshold");
  disc_cmd->add_option("--gamma", disc.gamma, "Rig units per radian");
  disc_cmd->add_option("--assert-accuracy", disc.assert_accuracy,
                       "Minimum rig-ID accuracy");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions");
  eval_cmd->add_option("--pred", ev.pred, "Prediction directory")->required();
  eval_cmd->add_option("--gt", ev.gt, "Ground-truth directory")->required();
  eval_cmd->add_option("--mode", ev.mode, "pose, points or both")
      ->check(CLI::IsMember({"pose", "points", "both"}));
  eval_cmd->add_option("--align", ev.align, "none or scale")
      ->check(CLI::IsMember({"none", "scale"}));
  eval_cmd->add_option("--tau", ev.tau, "RRA/RTA threshold in degrees");
  eval_cmd->add_option("--assert-maa", ev.assert_maa, "Minimum mAA");
  eval_cmd->add_option("--assert-chamfer", ev.assert_chamfer,
                       "Maximum chamfer distance");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand(
      "noise-sweep", "Rig discovery under calibration noise");
  sweep_cmd->add_option("--scene", sweep.scene, "Scene directory")->required();
  sweep_cmd->add_option("--sigmas", sweep.sigmas, "Noise levels")
      ->delimiter(',');
  sweep_cmd->add_option("--trials", sweep.trials, "Trials per level");
  sweep_cmd->add_option("--seed", sweep.seed, "Base seed");
  sweep_cmd->add_option("--out", sweep.out, "CSV output (default stdout)");
  sweep_cmd->add_option("--threshold", sweep.threshold, "Merge threshold");
  sweep_cmd->add_option("--gamma", sweep.gamma, "Rig units per radian");

  auto* mm_cmd = app.add_subcommand("micromodel", "Toy transformer tools");
  mm_cmd->require_subcommand(1);

  CheckGradArgs cg;
  auto* cg_cmd =
      mm_cmd->add_subcommand("check-grad", "Finite-difference gradient check");
  cg_cmd->add_option("--config", cg.config, "Config JSON (default: tiny)");
  cg_cmd->add_option("--seed", cg.seed, "Scene seed");
  cg_cmd->add_option("--eps", cg.eps, "Finite-difference step");
  cg_cmd->add_option("--tolerance", cg.tolerance, "Relative error tolerance");
  cg_cmd->add_flag("--assert", cg.assert_pass, "Exit 1 on failure");

  TrainArgs tr;
  auto* tr_cmd = mm_cmd->add_subcommand("train", "Overfit one scene");
  tr_cmd->add_option("--scene", tr.scene, "Scene directory")->required();
  tr_cmd->add_option("--config", tr.config, "Config JSON (default: tiny)");
  tr_cmd->add_option("--steps", tr.steps, "Gradient steps");
  tr_cmd->add_option("--step-size", tr.step_size, "Learning rate");
  tr_cmd->add_option("--out", tr.out, "Checkpoint directory");
  tr_cmd->add_option("--curve", tr.curve, "Loss curve CSV");
  tr_cmd->add_option("--assert-ratio", tr.assert_ratio,
                     "Maximum final/initial loss ratio");

  ModelEvalArgs me;
  auto* me_cmd = mm_cmd->add_subcommand("eval", "Evaluate a checkpoint");
  me_cmd->add_option("--ckpt", me.ckpt, "Checkpoint directory")->required();
  me_cmd->add_option("--scene", me.scene, "Scene directory")->required();
  me_cmd->add_option("--out", me.out, "Write predictions as a container");
  me_cmd->add_option("--mode", me.mode, "pose, points or both")
      ->check(CLI::IsMember({"pose", "points", "both"}));
  me_cmd->add_option("--align", me.align, "none or scale")
      ->check(CLI::IsMember({"none", "scale"}));
  me_cmd->add_option("--tau", me.tau, "RRA/RTA threshold in degrees");
  me_cmd->add_option("--assert-maa", me.assert_maa, "Minimum mAA");
  me_cmd->add_option("--assert-chamfer", me.assert_chamfer,
                     "Maximum chamfer distance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (threads > 0) SetThreadCount(threads);
    if (*gen_cmd) return RunGen(gen);
    if (*rec_cmd) return RunRecover(rec);
    if (*disc_cmd) return RunDiscover(disc);
    if (*eval_cmd) return RunEval(ev);
    if (*sweep_cmd) return RunNoiseSweep(sweep);
    if (*cg_cmd) return RunCheckGrad(cg);
    if (*tr_cmd) return RunTrain(tr);
    if (*me_cmd) return RunModelEval(me);
  } catch (const AssertionFailed& e) {
    std::cerr << "assertion failed: " << e.what << "\n";
    return kExitAssert;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
