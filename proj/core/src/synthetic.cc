#include "rigkit/synthetic.h"

#include <cmath>
#include <random>

#include <json.hpp>

#include "rigkit/parallel.h"

namespace rigkit {
namespace {

constexpr double kFps = 10.0;

double Shade(const Vec3& point, const Vec3& normal, bool on_plane) {
  const Vec3 light = Vec3(0.3, 1.0, 0.2).normalized();
  double albedo = 0.9;
  if (on_plane) {
    const bool odd = (static_cast<long>(std::floor(point.x())) +
                      static_cast<long>(std::floor(point.z()))) &
                     1L;
    albedo = odd ? 0.45 : 0.8;
  }
  return 0.15 + 0.85 * albedo * std::max(0.0, normal.dot(light));
}

}  // namespace

Pose ProceduralScene::DefaultTrajectoryOrigin() {
  Pose origin;
  // Camera x right, y down, z forward inside a y-up scene.
  origin.rotation = Vec3(-1.0, -1.0, 1.0).asDiagonal();
  origin.center = Vec3(0.0, 1.6, 0.0);
  return origin;
}

ProceduralScene ProceduralScene::Random(std::uint64_t seed, int num_spheres) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lateral(3.0, 10.0);
  std::uniform_real_distribution<double> depth(-12.0, 30.0);
  std::uniform_real_distribution<double> radius(0.4, 1.5);
  std::uniform_real_distribution<double> lift(0.0, 1.0);
  std::bernoulli_distribution left(0.5);
  ProceduralScene scene;
  for (int i = 0; i < num_spheres; ++i) {
    Sphere s;
    s.radius = radius(rng);
    const double x = lateral(rng) * (left(rng) ? -1.0 : 1.0);
    const double z = depth(rng);
    s.center = Vec3(x, s.radius + lift(rng), z);
    scene.spheres.push_back(s);
  }
  return scene;
}

void ProceduralScene::Validate() const {
  RIGKIT_CHECK(far_clip > 0.0, ErrorCode::kInvalidInput,
               "far clip must be positive");
  for (const Sphere& s : spheres) {
    RIGKIT_CHECK(s.radius > 0.0, ErrorCode::kInvalidInput,
                 "sphere radius must be positive");
    RIGKIT_CHECK(s.center.y() >= s.radius, ErrorCode::kInvalidInput,
                 "spheres must rest above the ground plane");
  }
}

std::optional<RayHit> CastRay(const ProceduralScene& scene, const Vec3& origin,
                              const Vec3& direction) {
  std::optional<RayHit> best;
  auto consider = [&](double t, const Vec3& normal) {
    if (t > 0.0 && t <= scene.far_clip && (!best || t < best->depth)) {
      best = RayHit{t, normal};
    }
  };
  if (direction.y() != 0.0) {
    consider(-origin.y() / direction.y(), Vec3::UnitY());
  }
  for (const Sphere& s : scene.spheres) {
    // |o + t d - c|^2 = r^2 with |d| = 1.
    const Vec3 oc = origin - s.center;
    const double b = oc.dot(direction);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    // Numerically stable pair of roots.
    const double q = b > 0.0 ? -(b + root) : -(b - root);
    double t0 = q;
    double t1 = q != 0.0 ? c / q : -b;
    if (t0 > t1) std::swap(t0, t1);
    const double t = t0 > 0.0 ? t0 : t1;
    if (t <= 0.0) continue;
    consider(t, (origin + t * direction - s.center) / s.radius);
  }
  return best;
}

TrajectoryKind ParseTrajectoryKind(const std::string& name) {
  if (name == "line") return TrajectoryKind::kLine;
  if (name == "arc") return TrajectoryKind::kArc;
  if (name == "still") return TrajectoryKind::kStill;
  throw Error(ErrorCode::kInvalidInput, "unknown trajectory '" + name + "'");
}

const char* TrajectoryKindName(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kLine:
      return "line";
    case TrajectoryKind::kArc:
      return "arc";
    case TrajectoryKind::kStill:
      return "still";
  }
  return "unknown";
}

std::vector<EgoPose> MakeTrajectory(TrajectoryKind kind, int num_steps,
                                    double speed, std::uint64_t seed) {
  RIGKIT_CHECK(num_steps >= 1, ErrorCode::kInvalidInput,
               "trajectory needs at least one step");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> radius_dist(10.0, 30.0);
  std::bernoulli_distribution turn_left(0.5);
  const double radius = radius_dist(rng);
  const double turn = turn_left(rng) ? -1.0 : 1.0;

  std::vector<EgoPose> poses(num_steps);
  for (int k = 0; k < num_steps; ++k) {
    EgoPose& ego = poses[k];
    ego.timestamp = k / kFps;
    const double travelled = speed * ego.timestamp;
    switch (kind) {
      case TrajectoryKind::kStill:
        break;
      case TrajectoryKind::kLine:
        ego.pose.center = Vec3(0.0, 0.0, travelled);
        break;
      case TrajectoryKind::kArc: {
        // Circle of `radius` about (turn * radius, 0, 0) in the level plane
        // spanned by the rig x and z axes, heading tangent to it.
        const double theta = travelled / radius;
        ego.pose.center = Vec3(turn * radius * (1.0 - std::cos(theta)), 0.0,
                               radius * std::sin(theta));
        ego.pose.rotation =
            Eigen::AngleAxisd(turn * theta, Vec3::UnitY()).toRotationMatrix();
        break;
      }
    }
  }
  return poses;
}

RenderedScene RenderViews(const ProceduralScene& scene,
                          const RigCalibration& rig,
                          const std::vector<EgoPose>& trajectory,
                          const RenderOptions& options) {
  scene.Validate();
  rig.Validate();
  RIGKIT_CHECK(!rig.cameras.empty(), ErrorCode::kInvalidInput, "empty rig");
  RIGKIT_CHECK(options.num_frames >= 1 && options.rows >= 1 &&
                   options.cols >= 1,
               ErrorCode::kInvalidInput, "render options must be positive");
  const std::size_t num_cams = rig.cameras.size();
  const std::size_t steps_needed =
      (static_cast<std::size_t>(options.num_frames) + num_cams - 1) / num_cams;
  RIGKIT_CHECK(trajectory.size() >= steps_needed, ErrorCode::kInvalidInput,
               "trajectory shorter than the requested frame count");

  const Pose& rig_ref = rig.cameras.front().rig_pose;
  const bool ref_is_identity = rig_ref.rotation == Mat3::Identity() &&
                               rig_ref.center == Vec3::Zero();
  const Pose ref_in_scene = scene.trajectory_origin.Compose(
      trajectory.front().pose.Compose(rig_ref));
  const Pose scene_to_ref = ref_in_scene.Inverse();

  RenderedScene out;
  out.rows = options.rows;
  out.cols = options.cols;
  out.rig = rig;
  out.views.resize(options.num_frames);

  ParallelFor(out.views.size(), [&](std::size_t f) {
    const std::size_t step = f / num_cams;
    const RigCamera& cam = rig.cameras[f % num_cams];
    const EgoPose& ego = trajectory[step];

    RenderedView& view = out.views[f];
    FrameRecord& frame = view.record;
    frame.camera_id = cam.camera_id;
    frame.timestamp = ego.timestamp;
    frame.intrinsics = cam.intrinsics;
    frame.intrinsics.width = options.cols;
    frame.intrinsics.height = options.rows;
    frame.rig_pose = cam.rig_pose;
    // Ego pose relative to the reference frame; exactly the identity at the
    // first step when the reference camera is the rig origin.
    frame.ego_pose =
        (step == 0 && ref_is_identity)
            ? Pose{}
            : scene_to_ref.Compose(scene.trajectory_origin.Compose(ego.pose));
    frame.world_pose = ComposeWorldPose({frame.ego_pose, ego.timestamp},
                                        cam.rig_pose);

    const Camera ref_camera =
        Camera::FromPose(cam.intrinsics.fx, cam.intrinsics.fy, options.cols,
                         options.rows, frame.world_pose);
    view.pose_raymap = RaymapFromCamera(ref_camera, options.rows, options.cols);
    const Raymap& pose_raymap = view.pose_raymap;
    const Pose scene_pose = ref_in_scene.Compose(frame.world_pose);
    const Camera scene_camera =
        Camera::FromPose(cam.intrinsics.fx, cam.intrinsics.fy, options.cols,
                         options.rows, scene_pose);
    const Raymap scene_rays =
        RaymapFromCamera(scene_camera, options.rows, options.cols);

    Pointmap& pointmap = view.pointmap;
    pointmap.points = Grid<Vec3>(options.rows, options.cols, Vec3::Zero());
    pointmap.valid = Grid<std::uint8_t>(options.rows, options.cols, 0);
    view.image = Grid<double>(options.rows, options.cols, 1.0);
    Grid<double>& image = view.image;
    for (std::size_t i = 0; i < pointmap.points.size(); ++i) {
      const Vec3& dir = scene_rays.directions[i];
      const std::optional<RayHit> hit =
          CastRay(scene, scene_rays.center, dir);
      if (!hit) continue;
      pointmap.valid[i] = 1;
      pointmap.points[i] =
          pose_raymap.center + hit->depth * pose_raymap.directions[i];
      const Vec3 scene_point = scene_rays.center + hit->depth * dir;
      image[i] = Shade(scene_point, hit->normal,
                       hit->normal == Vec3::UnitY() &&
                           std::abs(scene_point.y()) < 1e-9);
    }

    view.rig_raymap = RigRaymap(rig, cam.camera_id, options.rows, options.cols);
  });
  return out;
}

SceneContainer RenderedScene::ToContainer() const {
  SceneContainer out;
  out.rows = rows;
  out.cols = cols;
  out.rig = rig;
  out.generator_json = generator_json;
  for (const RenderedView& view : views) {
    FrameRecord frame = view.record;
    frame.blobs["image"] = ScalarsToBlob(view.image);
    frame.blobs["pointmap"] = PointsToBlob(view.pointmap.points);
    frame.blobs["valid"] = MaskToBlob(view.pointmap.valid);
    frame.blobs["pose_raymap"] = RaymapToBlob(view.pose_raymap);
    frame.blobs["rig_raymap"] = RaymapToBlob(view.rig_raymap);
    out.frames.push_back(std::move(frame));
  }
  return out;
}

RenderedScene GenerateScene(const GenerateOptions& options) {
  const RigCalibration rig =
      MakePresetRig(options.num_cameras, options.rows, options.cols);
  const ProceduralScene scene = ProceduralScene::Random(options.seed);
  const int steps =
      (options.num_frames + options.num_cameras - 1) / options.num_cameras;
  const std::vector<EgoPose> trajectory = MakeTrajectory(
      options.trajectory, steps, options.speed, options.seed + 1);
  RenderedScene out = RenderViews(
      scene, rig, trajectory, {options.rows, options.cols, options.num_frames});
  nlohmann::json gen = {{"cameras", options.num_cameras},
                        {"frames", options.num_frames},
                        {"size", {options.rows, options.cols}},
                        {"seed", options.seed},
                        {"trajectory", TrajectoryKindName(options.trajectory)},
                        {"speed", options.speed}};
  out.generator_json = gen.dump();
  return out;
}

}  // namespace rigkit
