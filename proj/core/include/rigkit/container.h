#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rigkit/geometry.h"
#include "rigkit/rig.h"

namespace rigkit {

inline constexpr int kContainerFormatVersion = 1;

// Raw little-endian float32 array, row-major, shape stored in the manifest.
struct Blob {
  std::vector<int> shape;
  std::vector<float> data;

  std::size_t NumElements() const;
  bool operator==(const Blob&) const = default;
};

struct FrameRecord {
  int camera_id = 0;
  double timestamp = 0.0;
  Intrinsics intrinsics;
  Pose world_pose;  // camera-to-reference (first frame) coordinates
  Pose rig_pose;    // camera-to-rig
  Pose ego_pose;    // rig-to-reference at this timestamp
  // Typical keys: image, pointmap, valid, pose_raymap, rig_raymap,
  // confidence.
  std::map<std::string, Blob> blobs;

  bool Has(const std::string& key) const { return blobs.count(key) > 0; }
  const Blob& Get(const std::string& key) const;
};

struct SceneContainer {
  std::string kind = "scene";
  int rows = 0;
  int cols = 0;
  std::optional<RigCalibration> rig;
  std::vector<FrameRecord> frames;
  // Free-form generator parameters, stored verbatim as a JSON string.
  std::string generator_json = "{}";
};

// Writes manifest.json plus one .f32 file per blob under `dir` (created if
// missing). Throws kIo on filesystem errors.
void WriteContainer(const SceneContainer& scene,
                    const std::filesystem::path& dir);
// Throws kIo when the manifest is unreadable, a blob is missing, or a blob's
// byte length disagrees with its shape.
SceneContainer ReadContainer(const std::filesystem::path& dir);

void WriteBlobFile(const std::filesystem::path& path, const Blob& blob);
Blob ReadBlobFile(const std::filesystem::path& path, std::vector<int> shape);

// Conversions between blobs and geometry types.
Blob RaymapToBlob(const Raymap& raymap);
Raymap RaymapFromBlob(const Blob& blob, FrameTag tag);
Blob PointsToBlob(const Grid<Vec3>& points);
Grid<Vec3> PointsFromBlob(const Blob& blob);
Blob ScalarsToBlob(const Grid<double>& values);
Grid<double> ScalarsFromBlob(const Blob& blob);
Blob MaskToBlob(const Grid<std::uint8_t>& mask);
Grid<std::uint8_t> MaskFromBlob(const Blob& blob);

// Convenience accessors on a frame.
Raymap FramePoseRaymap(const FrameRecord& frame);
Raymap FrameRigRaymap(const FrameRecord& frame);
Pointmap FramePointmap(const FrameRecord& frame);
Grid<double> FrameImage(const FrameRecord& frame);

std::vector<Pose> WorldPoses(const SceneContainer& scene);
std::vector<int> CameraIds(const SceneContainer& scene);

}  // namespace rigkit
