// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1).

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.h"
#include "rigkit/discovery.h"
#include "rigkit/embeddings.h"
#include "rigkit/losses.h"
#include "rigkit/metrics.h"
#include "rigkit/micromodel.h"
#include "rigkit/parallel.h"
#include "rigkit/synthetic.h"

namespace {

using namespace rigkit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

Outcome RecoveryRoundTrip() {
  SetThreadCount(1);
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> focal(50.0, 1000.0);
  std::uniform_real_distribution<double> coord(-10.0, 10.0);
  double max_focal = 0.0, max_rot = 0.0;
  bool centers_exact = true;
  const auto start = Clock::now();
  for (int i = 0; i < 100; ++i) {
    const Pose pose{oracle::RandomRotation(rng), Vec3(coord(rng), coord(rng), coord(rng))};
    const Camera cam = Camera::FromPose(focal(rng), focal(rng), 64, 64, pose);
    const Camera got = CameraFromRaymap(RaymapFromCamera(cam, 64, 64));
    max_focal = std::max({max_focal, std::abs(got.fx / cam.fx - 1.0),
                          std::abs(got.fy / cam.fy - 1.0)});
    max_rot = std::max(max_rot, oracle::AngleRad(got.rotation, cam.rotation));
    centers_exact = centers_exact && got.center == cam.center;
  }
  const double secs = Seconds(start);
  SetThreadCount(DefaultThreadCount());
  return {max_focal <= 1e-6 && max_rot <= 1e-6 && centers_exact && secs < 10.0,
          Fmt("max focal rel %.2e, max rotation %.2e rad, centers %s, %.2f s single-core",
              max_focal, max_rot, centers_exact ? "exact" : "NOT exact", secs)};
}

Outcome RotationRobustness() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> n(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1e-3);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Mat3 truth = oracle::RandomRotation(rng);
    std::vector<Vec3> cam, world;
    for (int k = 0; k < 100; ++k) {
      cam.push_back(Vec3(n(rng), n(rng), n(rng)).normalized());
      world.push_back(
          (truth * cam.back() + Vec3(noise(rng), noise(rng), noise(rng))).normalized());
    }
    const Mat3 r = RotationFromRayPairs(cam, world);
    worst = std::max(worst, oracle::AngleRad(r, truth) * 180.0 / std::numbers::pi);
  }
  return {worst < 0.1, Fmt("worst geodesic error %.4f deg over 100 trials", worst)};
}

Outcome MetricOracles() {
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst_pair = 0.0, worst_maa = 0.0, worst_cloud = 0.0;
  for (int t = 0; t < 50; ++t) {
    const int frames = 2 + static_cast<int>(rng() % 9);
    std::vector<Pose> gt, pred;
    for (int f = 0; f < frames; ++f) {
      gt.push_back(oracle::RandomPose(rng, 5.0));
      Pose p = gt.back();
      const double s = 0.05 * (1 + t % 8);
      p.rotation = p.rotation * AxisAngle(Vec3(n(rng), n(rng), n(rng)), s * n(rng));
      p.center += s * Vec3(n(rng), n(rng), n(rng));
      pred.push_back(p);
    }
    const PairwiseErrors e = ComputePairwiseErrors(pred, gt);
    const auto want = oracle::PairwiseErrors(pred, gt);
    for (std::size_t k = 0; k < want.size(); ++k) {
      worst_pair = std::max({worst_pair, std::abs(e.pairs[k].rotation_deg - want[k].rot),
                             std::abs(e.pairs[k].translation_deg - want[k].trans)});
    }
    worst_maa = std::max(worst_maa, std::abs(Maa(e) - oracle::Maa(want)));

    const int np = 1 + static_cast<int>(rng() % 1000);
    const int ng = 1 + static_cast<int>(rng() % 1000);
    std::vector<Vec3> pc(np), gc(ng);
    for (Vec3& p : pc) p = Vec3(n(rng), n(rng), 4.0 + n(rng));
    for (Vec3& g : gc) g = Vec3(n(rng), n(rng), 4.0 + n(rng));
    const bool scale = t % 2 == 1;
    const PointcloudScores s =
        PointcloudMetrics(pc, gc, scale ? Alignment::kScale : Alignment::kNone);
    const oracle::Cloud c = oracle::PointcloudMetrics(pc, gc, scale);
    worst_cloud = std::max({worst_cloud, std::abs(s.accuracy - c.accuracy),
                            std::abs(s.completeness - c.completeness),
                            std::abs(s.chamfer - c.chamfer)});
  }
  PairwiseErrors single;
  single.pairs.push_back({0, 1, 10.0, 0.0});
  const double example = Maa(single);
  const bool ok = worst_pair <= 1e-9 && worst_maa <= 1e-9 && worst_cloud <= 1e-9 &&
                  example == 0.7;
  return {ok, Fmt("max |diff| pairwise %.1e, mAA %.1e, pointcloud %.1e; single-pair mAA %.17g",
                  worst_pair, worst_maa, worst_cloud, example)};
}

Outcome RigDiscovery() {
  bool ok = true;
  std::ostringstream detail;
  for (int cams : {1, 3, 5, 7}) {
    GenerateOptions o;
    o.num_cameras = cams;
    o.num_frames = 24;
    o.rows = 32;
    o.cols = 32;
    o.seed = 404;
    const RenderedScene scene = GenerateScene(o);
    std::vector<Raymap> raymaps;
    std::vector<int> ids;
    for (const RenderedView& v : scene.views) {
      raymaps.push_back(v.rig_raymap);
      ids.push_back(v.record.camera_id);
    }
    const DiscoveryReport r = DiscoverRig(raymaps, {}, std::span<const int>(ids), &scene.rig);
    const double acc = r.matching->accuracy;
    bool this_ok = r.clusters.num_clusters == cams && acc == 1.0;
    if (cams == 1) {
      this_ok = this_ok && r.no_rig;
      detail << "1 cam: K=" << r.clusters.num_clusters << (r.no_rig ? " no_rig" : " (no flag)");
    } else {
      this_ok = this_ok && !r.no_rig && r.rig_maa->valid && r.rig_maa->value == 1.0;
      detail << "; " << cams << " cams: K=" << r.clusters.num_clusters << " acc=" << acc
             << " mAA=" << r.rig_maa->value;
    }
    ok = ok && this_ok;
  }
  return {ok, detail.str()};
}

Outcome NoiseTrend() {
  const RigCalibration rig = MakePresetRig(5, 64, 64);
  std::vector<int> ids;
  for (int f = 0; f < 24; ++f) ids.push_back(f % 5);
  const double sigmas[] = {0.0, 0.05, 0.1, 0.2, 0.4};
  std::vector<double> means;
  const auto start = Clock::now();
  for (double sigma : sigmas) {
    double sum = 0.0;
    for (int t = 0; t < 20; ++t) {
      sum += RunNoiseTrial(rig, ids, 64, 64, sigma, 5000 + t).rig_maa;
    }
    means.push_back(sum / 20.0);
  }
  const double secs = Seconds(start);
  bool decreasing = true;
  for (std::size_t i = 1; i < means.size(); ++i) decreasing = decreasing && means[i] < means[i - 1];
  std::ostringstream detail;
  detail << "mean rig mAA";
  for (std::size_t i = 0; i < means.size(); ++i) {
    detail << Fmt(" %.3g@%.2g", means[i], sigmas[i]);
  }
  detail << Fmt(", %.1f s", secs);
  return {decreasing && means[0] >= 0.99 && secs < 120.0, detail.str()};
}

Outcome LossCorrectness() {
  std::mt19937_64 rng(606);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> depth(1.0, 10.0);
  double worst_p = 0.0, worst_r = 0.0, worst_t = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int rows = 4 + t % 5, cols = 3 + t % 7;
    Grid<Vec3> pred(rows, cols), dirs(rows, cols);
    Grid<double> raw(rows, cols);
    Pointmap gt{Grid<Vec3>(rows, cols), Grid<std::uint8_t>(rows, cols, 1)};
    Raymap gr{Grid<Vec3>(rows, cols), Vec3(n(rng), n(rng), n(rng)), FrameTag::kPose};
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = Vec3(n(rng), n(rng), n(rng));
      raw[i] = 2.0 * n(rng);
      gt.points[i] = Vec3(n(rng), n(rng), depth(rng));
      gt.valid[i] = (i % 7) != 2;
      dirs[i] = Vec3(n(rng), n(rng), n(rng));
      gr.directions[i] = Vec3(n(rng), n(rng), n(rng)).normalized();
    }
    const Vec3 center(n(rng), n(rng), n(rng));
    const double zbar = MeanSceneDepth(std::span<const Pointmap>(&gt, 1));
    const double lp = PointmapLoss(pred, raw, gt, zbar, 0.2);
    const double op = oracle::PointmapLoss(pred, raw, gt, zbar, 0.2);
    const double lr = RaymapLoss(dirs, center, gr, zbar, 1.0);
    const double orr = oracle::RaymapLoss(dirs, center, gr, zbar, 1.0);
    const LossWeights w{0.7, 0.3, 0.2, 1.0};
    const double lt = TotalLoss(lp, lr, 2.0 * lr, w);
    const long double ot = static_cast<long double>(op) + 0.7L * orr + 0.3L * 2.0L * orr;
    worst_p = std::max(worst_p, std::abs(lp - op) / std::max(1.0, std::abs(op)));
    worst_r = std::max(worst_r, std::abs(lr - orr) / std::max(1.0, std::abs(orr)));
    worst_t = std::max(worst_t, static_cast<double>(std::abs(lt - ot)) /
                                    std::max(1.0, std::abs(static_cast<double>(ot))));
  }

  // Scale normalization: multiply gt and z-bar by s.
  Grid<Vec3> pred(6, 6);
  Grid<double> raw(6, 6);
  Pointmap gt{Grid<Vec3>(6, 6), Grid<std::uint8_t>(6, 6, 1)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = Vec3(n(rng), n(rng), n(rng));
    raw[i] = n(rng);
    gt.points[i] = Vec3(n(rng), n(rng), depth(rng));
  }
  const double zbar = MeanSceneDepth(std::span<const Pointmap>(&gt, 1));
  const double base = PointmapLoss(pred, raw, gt, zbar, 0.2);
  bool pow2_exact = true;
  double worst_scale = 0.0;
  for (double s : {0.25, 0.5, 2.0, 8.0, 1024.0, 0.3, 1.7, 13.0, 123.4}) {
    Pointmap scaled = gt;
    for (Vec3& p : scaled.points) p *= s;
    const double l = PointmapLoss(pred, raw, scaled, zbar * s, 0.2);
    if (std::exp2(std::round(std::log2(s))) == s) pow2_exact = pow2_exact && l == base;
    worst_scale = std::max(worst_scale, std::abs(l - base) / std::abs(base));
  }

  // Confidence stationary point C* = alpha / e, and that it is a minimum.
  Pointmap one{Grid<Vec3>(1, 1, Vec3(0, 0, 2)), Grid<std::uint8_t>(1, 1, 1)};
  Grid<Vec3> p1(1, 1, Vec3(0.03, 0.0, 1.0));
  const double alpha = 0.2, err = 0.03;
  const double raw_star = std::log(alpha / err - 1.0);
  auto loss_at = [&](double r) {
    return PointmapLoss(p1, Grid<double>(1, 1, r), one, 2.0, alpha);
  };
  const double h = 1e-5;
  const double fd = (loss_at(raw_star + h) - loss_at(raw_star - h)) / (2 * h);
  const bool minimum =
      loss_at(raw_star + 0.05) > loss_at(raw_star) && loss_at(raw_star - 0.05) > loss_at(raw_star);

  const bool ok = worst_p <= 1e-10 && worst_r <= 1e-10 && worst_t <= 1e-10 && pow2_exact &&
                  worst_scale <= 1e-12 && std::abs(fd) < 1e-8 && minimum;
  return {ok, Fmt("oracle rel diff pointmap %.1e raymap %.1e total %.1e; scale: pow2 %s, "
                  "other s %.1e; stationary FD slope %.1e",
                  worst_p, worst_r, worst_t, pow2_exact ? "bitwise" : "NOT bitwise",
                  worst_scale, fd)};
}

SceneContainer TinyScene() {
  GenerateOptions o;
  o.num_cameras = 3;
  o.num_frames = 2;
  o.rows = 8;
  o.cols = 8;
  o.seed = 3;
  return GenerateScene(o).ToContainer();
}

Outcome Gradients() {
  const MicroModelConfig cfg = MicroModelConfig::Tiny();
  const TrainingSample s = SampleFromScene(TinyScene(), cfg);
  const auto start = Clock::now();
  const GradCheckReport r = CheckGradients(InitModel(cfg), s.input, s.targets, 1e-4, 1e-4);
  const double secs = Seconds(start);
  std::size_t checked = 0;
  std::string worst;
  double worst_err = -1.0;
  for (const GradCheckGroup& g : r.groups) {
    checked += g.checked;
    if (g.max_rel_error > worst_err) {
      worst_err = g.max_rel_error;
      worst = g.name;
    }
  }
  return {r.passed && secs < 60.0,
          Fmt("%zu groups, %zu entries, max rel %.2e (%s), %.1f s", r.groups.size(), checked,
              r.max_rel_error, worst.c_str(), secs)};
}

Outcome Overfit() {
  const MicroModelConfig cfg = MicroModelConfig::Tiny();
  const TrainingSample s = SampleFromScene(TinyScene(), cfg);
  const TrainResult r = TrainOverfit(cfg, s, 2000, 1e-3);
  const LossWeights& w = cfg.weights;
  auto fit = [&](const LossBreakdown& l) {
    return l.pointmap_residual + w.lambda_p * l.pose_raymap + w.lambda_r * l.rig_raymap;
  };
  const double total_ratio = r.final.total / r.initial.total;
  const double fit_ratio = fit(r.final) / fit(r.initial);
  const std::vector<FrameOutput> out = Forward(r.state, s.input);
  std::vector<Pose> decoded;
  for (const FrameOutput& f : out) decoded.push_back(CameraFromRaymap(PredictedPoseRaymap(f)).pose());
  const PoseAccuracy acc = RraRta(ComputePairwiseErrors(decoded, s.gt_poses), 15.0);
  const bool ok = !r.diverged && r.final.total < 0.05 * r.initial.total && fit_ratio < 0.05 &&
                  acc.rra == 1.0 && acc.rta == 1.0;
  return {ok, Fmt("total %.4g -> %.4g (ratio %.4f), fit terms ratio %.4f, RRA@15 %.2f RTA@15 %.2f",
                  r.initial.total, r.final.total, total_ratio, fit_ratio, acc.rra, acc.rta)};
}

bool SameOutputs(const std::vector<FrameOutput>& a, const std::vector<FrameOutput>& b) {
  for (std::size_t f = 0; f < a.size(); ++f) {
    if (a[f].points.data() != b[f].points.data() ||
        a[f].conf_raw.data() != b[f].conf_raw.data() ||
        a[f].pose_dirs.data() != b[f].pose_dirs.data() ||
        a[f].rig_dirs.data() != b[f].rig_dirs.data() || a[f].pose_center != b[f].pose_center ||
        a[f].rig_center != b[f].rig_center) {
      return false;
    }
  }
  return a.size() == b.size();
}

Outcome DropoutParity() {
  const MicroModelConfig cfg = MicroModelConfig::Tiny();
  const TrainingSample s = SampleFromScene(TinyScene(), cfg);
  const ModelState state = InitModel(cfg);
  bool parity = true;
  const char* names[] = {"camera_id", "timestamp", "rig"};
  std::string failed;
  for (int field = 0; field < 3; ++field) {
    FieldMask drop;
    ModelInput absent = s.input;
    for (MetadataTuple& m : absent.metadata) {
      if (field == 0) m.camera_id.reset();
      if (field == 1) m.timestamp.reset();
      if (field == 2) m.rig_patches.reset();
    }
    (field == 0 ? drop.camera_id : field == 1 ? drop.timestamp : drop.rig) = true;
    ModelInput dropped = s.input;
    dropped.drop = {drop};
    if (!SameOutputs(Forward(state, dropped), Forward(state, absent))) {
      parity = false;
      failed += std::string(" ") + names[field];
    }
  }
  const int draws = 100000;
  int counts[3] = {0, 0, 0};
  for (int d = 0; d < draws; ++d) {
    const FieldMask m = DropoutMask(0.5, 9000000 + d);
    counts[0] += m.camera_id;
    counts[1] += m.timestamp;
    counts[2] += m.rig;
  }
  bool freq_ok = true;
  double f[3];
  for (int k = 0; k < 3; ++k) {
    f[k] = static_cast<double>(counts[k]) / draws;
    freq_ok = freq_ok && std::abs(f[k] - 0.5) <= 0.01;
  }
  return {parity && freq_ok,
          Fmt("forward parity %s%s; drop frequency %.4f %.4f %.4f over 1e5 draws",
              parity ? "bitwise for all fields" : "FAILED for", failed.c_str(), f[0], f[1], f[2])};
}

std::string ReadAll(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

bool SameTree(const fs::path& a, const fs::path& b, std::size_t* files) {
  std::size_t count_a = 0, count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++count_a;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || ReadAll(e.path()) != ReadAll(other)) return false;
  }
  *files = count_a;
  return count_a == count_b;
}

Outcome ContainerDeterminism() {
  const fs::path root = fs::temp_directory_path() / ("rigkit_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string gen = std::string(RIGKIT_CLI_PATH) +
                          " gen --cameras 5 --frames 24 --size 64x64 --seed 10 --out ";
  const int rc1 = std::system((gen + (root / "a").string() + " > /dev/null").c_str());
  const int rc2 = std::system((gen + (root / "b").string() + " > /dev/null").c_str());
  std::size_t files = 0;
  const bool same_runs = rc1 == 0 && rc2 == 0 && SameTree(root / "a", root / "b", &files);

  const SceneContainer read = ReadContainer(root / "a");
  WriteContainer(read, root / "c");
  std::size_t files_c = 0;
  const SceneContainer again = ReadContainer(root / "c");
  bool blobs_equal = again.frames.size() == read.frames.size();
  for (std::size_t f = 0; blobs_equal && f < read.frames.size(); ++f) {
    blobs_equal = read.frames[f].blobs == again.frames[f].blobs &&
                  read.frames[f].world_pose.rotation == again.frames[f].world_pose.rotation &&
                  read.frames[f].world_pose.center == again.frames[f].world_pose.center;
  }
  const bool round_trip = SameTree(root / "a", root / "c", &files_c) && blobs_equal;
  fs::remove_all(root);
  return {same_runs && round_trip,
          Fmt("two gen runs %s over %zu files; read/write round trip %s",
              same_runs ? "byte-identical" : "DIFFER", files,
              round_trip ? "bitwise" : "NOT bitwise")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"closed-form recovery round trip", RecoveryRoundTrip},
      {"rotation-from-rays robustness", RotationRobustness},
      {"metric oracle equivalence", MetricOracles},
      {"rig discovery on synthetic rigs", RigDiscovery},
      {"noise sweep trend", NoiseTrend},
      {"loss correctness", LossCorrectness},
      {"micromodel gradients", Gradients},
      {"micromodel overfit", Overfit},
      {"embedding dropout parity", DropoutParity},
      {"container determinism", ContainerDeterminism},
  };
  int failed = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << index << "] " << c.name << ": "
              << o.detail << std::endl;
  }
  std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
