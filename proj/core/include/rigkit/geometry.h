#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rigkit/grid.h"

namespace rigkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rigid transform from a local frame (camera or rig) into a parent frame.
// `rotation` maps local directions to parent directions and `center` is the
// local origin expressed in the parent frame.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  // Parent-frame point of a local point.
  Vec3 Apply(const Vec3& local) const { return rotation * local + center; }
  Pose Inverse() const;
  // this * other, i.e. other expressed in this pose's parent frame.
  Pose Compose(const Pose& other) const;
};

// Pinhole camera with the principal point at the image center.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  int width = 1;
  int height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();

  Pose pose() const { return {rotation, center}; }
  static Camera FromPose(double fx, double fy, int width, int height,
                         const Pose& pose);

  // Throws kInvalidInput on non-finite fields, nonpositive focals or a
  // rotation that is not a proper orthonormal matrix (tolerance 1e-9).
  void Validate() const;
};

// Centered pixel coordinates: u = col - (width - 1) / 2, v = row - (height - 1) / 2.
inline double CenteredU(int col, int width) {
  return col - 0.5 * (width - 1);
}
inline double CenteredV(int row, int height) {
  return row - 0.5 * (height - 1);
}

enum class FrameTag : std::uint8_t { kPose = 0, kRig = 1 };

struct Raymap {
  Grid<Vec3> directions;
  Vec3 center = Vec3::Zero();
  FrameTag frame_tag = FrameTag::kPose;

  int rows() const { return directions.rows(); }
  int cols() const { return directions.cols(); }

  // H x W x 6 interleaved (direction, center) per pixel, row-major.
  std::vector<double> Pack6() const;
  // Inverse of Pack6. The center is taken from pixel (0, 0); a packed buffer
  // whose per-pixel centers disagree is rejected.
  static Raymap Unpack6(std::span<const double> packed, int rows, int cols,
                        FrameTag tag = FrameTag::kPose);
};

struct Pointmap {
  Grid<Vec3> points;
  Grid<std::uint8_t> valid;

  int rows() const { return points.rows(); }
  int cols() const { return points.cols(); }
  std::size_t NumValid() const;
};

struct ConfidenceMap {
  Grid<double> values;

  // C = 1 + exp(raw), so every value is >= 1.
  static ConfidenceMap FromRaw(const Grid<double>& raw);
};

// Geodesic angle (radians) between two rotations, computed through the
// quaternion log map so it stays accurate for very small angles.
double RotationAngle(const Mat3& a, const Mat3& b);

// Projects an arbitrary 3x3 matrix onto SO(3) (closest rotation in the
// Frobenius norm).
Mat3 ProjectToRotation(const Mat3& m);

// Rotation about a unit axis by `angle` radians.
Mat3 AxisAngle(const Vec3& axis, double angle);

// Per-pixel world rays: directions = normalize(R * [u / fx, v / fy, 1]).
Raymap RaymapFromCamera(const Camera& camera, int rows, int cols);

// Analytic focal estimate from pixels on the image axes. Each estimate uses
// the exact optical-axis ray (the normalized sum of a point-symmetric pixel
// pair) and the ray at (du, 0); fx = |du| / tan(theta). Offsets of W/8, W/4
// and 3W/8 on both sides are aggregated by the median.
std::pair<double, double> FocalAxis(const Raymap& raymap);

struct PixelPair {
  int row_a, col_a;
  int row_b, col_b;
};

// Nonlinear least squares on the two-pixel constraint
//   cos^2(theta) = (u'w u2)^2 / ((u'w u)(u2'w u2)),  w = diag(1/fx^2, 1/fy^2, 1)
// in the unknowns (1/fx^2, 1/fy^2), Levenberg-damped and initialized from
// FocalAxis. Throws kRecoveryFailed when the pairs do not constrain both
// unknowns or the solve does not converge to positive values.
std::pair<double, double> FocalPairs(const Raymap& raymap, int num_pairs,
                                     std::uint64_t seed);
std::pair<double, double> FocalPairs(const Raymap& raymap,
                                     std::span<const PixelPair> pairs);

// Closed-form rotation aligning camera-frame rays to world rays (SVD of the
// cross-covariance, proper-rotation corrected).
Mat3 RotationFromRayPairs(std::span<const Vec3> cam_rays,
                          std::span<const Vec3> world_rays);

struct CameraRecoveryOptions {
  int num_pairs = 256;
  std::uint64_t seed = 0;
};

Camera CameraFromRaymap(const Raymap& raymap,
                        const CameraRecoveryOptions& options = {});

struct ResidualStats {
  std::size_t count = 0;
  std::optional<double> mean;
  std::optional<double> max;
};

// Perpendicular distance of every valid point to its pixel's ray.
ResidualStats RayPointConsistency(const Pointmap& pointmap,
                                  const Raymap& raymap);

}  // namespace rigkit
