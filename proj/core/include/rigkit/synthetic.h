#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rigkit/container.h"
#include "rigkit/geometry.h"
#include "rigkit/rig.h"

namespace rigkit {

struct Sphere {
  Vec3 center;
  double radius = 1.0;
};

// Ground plane y = 0 (normal +y) plus spheres resting above it.
struct ProceduralScene {
  std::vector<Sphere> spheres;
  double far_clip = 100.0;
  // Placement of the trajectory origin in scene coordinates. The default
  // puts the rig 1.6 units above the ground, level, with camera axes x right,
  // y down, z forward.
  Pose trajectory_origin = DefaultTrajectoryOrigin();

  static Pose DefaultTrajectoryOrigin();
  static ProceduralScene Random(std::uint64_t seed, int num_spheres = 14);
  void Validate() const;
};

struct RayHit {
  double depth = 0.0;  // distance along the unit ray
  Vec3 normal = Vec3::UnitY();
};

// Nearest positive intersection within the far clip, if any.
std::optional<RayHit> CastRay(const ProceduralScene& scene, const Vec3& origin,
                              const Vec3& direction);

enum class TrajectoryKind { kLine, kArc, kStill };

TrajectoryKind ParseTrajectoryKind(const std::string& name);
const char* TrajectoryKindName(TrajectoryKind kind);

// Ego poses in trajectory coordinates at 10 FPS (t_k = k / 10 s). Line moves
// forward at `speed` units/s; arc follows a circle of seeded radius and turn
// direction; still keeps the identity pose.
std::vector<EgoPose> MakeTrajectory(TrajectoryKind kind, int num_steps,
                                    double speed, std::uint64_t seed);

struct RenderOptions {
  int rows = 64;
  int cols = 64;
  int num_frames = 24;
};

// One rendered view in double precision. `record` carries the metadata that
// goes into a container manifest (its blob map is left empty).
struct RenderedView {
  FrameRecord record;
  Grid<double> image;
  Pointmap pointmap;
  Raymap pose_raymap;
  Raymap rig_raymap;
};

struct RenderedScene {
  int rows = 0;
  int cols = 0;
  RigCalibration rig;
  std::vector<RenderedView> views;
  std::string generator_json = "{}";

  // float32 container with image, pointmap, valid, pose_raymap and
  // rig_raymap blobs per frame.
  SceneContainer ToContainer() const;
};

// Renders frames in time-major order (all cameras at t0, then t1, ...) until
// `num_frames` views exist. Every array is expressed in the coordinate frame
// of the first frame.
RenderedScene RenderViews(const ProceduralScene& scene,
                          const RigCalibration& rig,
                          const std::vector<EgoPose>& trajectory,
                          const RenderOptions& options);

struct GenerateOptions {
  int num_cameras = 5;
  int num_frames = 24;
  int rows = 64;
  int cols = 64;
  std::uint64_t seed = 0;
  TrajectoryKind trajectory = TrajectoryKind::kLine;
  double speed = 5.0;
};

// Preset rig + random scene + trajectory, rendered.
RenderedScene GenerateScene(const GenerateOptions& options);

}  // namespace rigkit
