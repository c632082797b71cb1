#include "rigkit/rig.h"

#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>

namespace rigkit {

const RigCamera& RigCalibration::Find(int camera_id) const {
  return cameras[IndexOf(camera_id)];
}

std::size_t RigCalibration::IndexOf(int camera_id) const {
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].camera_id == camera_id) return i;
  }
  throw Error(ErrorCode::kUnknownCamera,
              "camera id " + std::to_string(camera_id) + " not in rig");
}

void RigCalibration::Validate() const {
  std::set<int> ids;
  for (const RigCamera& cam : cameras) {
    RIGKIT_CHECK(ids.insert(cam.camera_id).second, ErrorCode::kInvalidInput,
                 "duplicate camera id " + std::to_string(cam.camera_id));
    Camera::FromPose(cam.intrinsics.fx, cam.intrinsics.fy,
                     cam.intrinsics.width, cam.intrinsics.height, cam.rig_pose)
        .Validate();
  }
}

Raymap RigRaymap(const RigCalibration& rig, int camera_id, int rows,
                 int cols) {
  const RigCamera& cam = rig.Find(camera_id);
  Raymap raymap = RaymapFromCamera(
      Camera::FromPose(cam.intrinsics.fx, cam.intrinsics.fy, cols, rows,
                       cam.rig_pose),
      rows, cols);
  raymap.frame_tag = FrameTag::kRig;
  return raymap;
}

Pose ComposeWorldPose(const EgoPose& ego, const Pose& rig_pose) {
  return ego.pose.Compose(rig_pose);
}

double RigScale(const RigCalibration& rig) {
  if (rig.cameras.size() < 2) return 0.0;
  const Vec3& ref = rig.cameras.front().rig_pose.center;
  double sum = 0.0;
  for (std::size_t i = 1; i < rig.cameras.size(); ++i) {
    sum += (rig.cameras[i].rig_pose.center - ref).norm();
  }
  return sum / static_cast<double>(rig.cameras.size() - 1);
}

RigCalibration NormalizeRig(const RigCalibration& rig) {
  const double scale = RigScale(rig);
  RIGKIT_CHECK(scale > 1e-12 && std::isfinite(scale), ErrorCode::kDegenerateRig,
               "rig cameras coincide with the reference camera");
  const Pose ref_inv = rig.cameras.front().rig_pose.Inverse();
  RigCalibration out = rig;
  for (RigCamera& cam : out.cameras) {
    Pose rel = ref_inv.Compose(cam.rig_pose);
    rel.center /= scale;
    cam.rig_pose = rel;
  }
  out.cameras.front().rig_pose = Pose{};
  return out;
}

Mat3 RollPitchYaw(double roll, double pitch, double yaw) {
  const Mat3 rz = Eigen::AngleAxisd(roll, Vec3::UnitZ()).toRotationMatrix();
  const Mat3 rx = Eigen::AngleAxisd(pitch, Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
  return rz * rx * ry;
}

RigCalibration PerturbRig(const RigCalibration& rig, double sigma,
                          std::uint64_t seed) {
  RIGKIT_CHECK(sigma >= 0.0 && std::isfinite(sigma), ErrorCode::kInvalidInput,
               "noise sigma must be nonnegative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  RigCalibration out = rig;
  for (std::size_t i = 1; i < out.cameras.size(); ++i) {
    Pose& pose = out.cameras[i].rig_pose;
    const double dx = sigma * normal(rng);
    const double dy = sigma * normal(rng);
    const double dz = sigma * normal(rng);
    const double roll = sigma * normal(rng);
    const double pitch = sigma * normal(rng);
    const double yaw = sigma * normal(rng);
    pose.center += Vec3(dx, dy, dz);
    pose.rotation = pose.rotation * RollPitchYaw(roll, pitch, yaw);
  }
  return out;
}

RigCalibration MakePresetRig(int num_cameras, int rows, int cols) {
  RIGKIT_CHECK(num_cameras == 1 || num_cameras == 3 || num_cameras == 5 ||
                   num_cameras == 7,
               ErrorCode::kInvalidInput,
               "rig presets exist for 1, 3, 5 or 7 cameras");
  constexpr double kDeg = std::numbers::pi / 180.0;
  // Yaw of each camera relative to the front camera; cameras sit on a ring
  // around a mount point behind the front camera.
  const double yaws_deg[] = {0.0, -50.0, 50.0, -100.0, 100.0, -150.0, 150.0};
  const double heights[] = {0.0, 0.05, 0.05, 0.1, 0.1, 0.0, 0.0};
  const double ring_radius = 1.0;
  const Vec3 mount(0.0, 0.0, -ring_radius);

  auto focal_for = [cols](double hfov_deg) {
    return 0.5 * cols / std::tan(0.5 * hfov_deg * kDeg);
  };

  RigCalibration rig;
  for (int k = 0; k < num_cameras; ++k) {
    const double yaw = yaws_deg[k] * kDeg;
    RigCamera cam;
    cam.camera_id = k;
    cam.rig_pose.rotation =
        Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
    cam.rig_pose.center =
        mount + Vec3(ring_radius * std::sin(yaw), heights[k],
                     ring_radius * std::cos(yaw));
    const double f = focal_for(k == 0 ? 60.0 : 70.0);
    cam.intrinsics = {f, f, cols, rows};
    rig.cameras.push_back(cam);
  }
  if (num_cameras == 1) return rig;
  return NormalizeRig(rig);
}

}  // namespace rigkit
