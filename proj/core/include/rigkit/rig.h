#pragma once

#include <cstdint>
#include <vector>

#include "rigkit/geometry.h"

namespace rigkit {

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  int width = 1;
  int height = 1;
};

struct RigCamera {
  int camera_id = 0;
  Pose rig_pose;  // camera-to-rig
  Intrinsics intrinsics;
};

// Fixed set of camera-to-rig poses. The first camera is the reference.
struct RigCalibration {
  std::vector<RigCamera> cameras;

  std::size_t size() const { return cameras.size(); }
  // Throws kUnknownCamera.
  const RigCamera& Find(int camera_id) const;
  std::size_t IndexOf(int camera_id) const;
  // Throws kInvalidInput on duplicate ids or invalid rotations.
  void Validate() const;
};

// Rig-to-world transform at one timestamp.
struct EgoPose {
  Pose pose;
  double timestamp = 0.0;
};

// Raymap of `camera_id` expressed in the rig frame (tagged kRig). Depends
// only on the calibration, never on time.
Raymap RigRaymap(const RigCalibration& rig, int camera_id, int rows, int cols);

// R_world = R_ego * R_rig, c_world = R_ego * c_rig + c_ego.
Pose ComposeWorldPose(const EgoPose& ego, const Pose& rig_pose);

// Re-expresses every camera relative to the reference camera (which becomes
// the identity pose) and scales centers so the mean distance of the
// non-reference cameras from the reference is 1. Throws kDegenerateRig when
// all cameras coincide (this includes single-camera rigs).
RigCalibration NormalizeRig(const RigCalibration& rig);
// Mean distance of non-reference camera centers from the reference camera.
double RigScale(const RigCalibration& rig);

// Calibration-error simulation: every non-reference camera gets i.i.d.
// N(0, sigma^2) center offsets per axis and a body-frame rotation
// Rz(roll) * Rx(pitch) * Ry(yaw) with N(0, sigma^2) radian angles. The
// reference camera is left untouched.
RigCalibration PerturbRig(const RigCalibration& rig, double sigma,
                          std::uint64_t seed);

// Vehicle-style rig presets with 1, 3, 5 or 7 cameras, already normalized.
// Cameras fan out in yaw from the front camera (listed first).
RigCalibration MakePresetRig(int num_cameras, int rows, int cols);

// Rz(roll) * Rx(pitch) * Ry(yaw).
Mat3 RollPitchYaw(double roll, double pitch, double yaw);

}  // namespace rigkit
