#include "rigkit/container.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace rigkit {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json PoseToJson(const Pose& pose) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({pose.rotation(r, 0), pose.rotation(r, 1),
                   pose.rotation(r, 2)});
  }
  return {{"rotation", rot},
          {"center", {pose.center.x(), pose.center.y(), pose.center.z()}}};
}

Pose PoseFromJson(const json& j) {
  Pose pose;
  const json& rot = j.at("rotation");
  RIGKIT_CHECK(rot.size() == 3, ErrorCode::kIo, "rotation must be 3x3");
  for (int r = 0; r < 3; ++r) {
    RIGKIT_CHECK(rot[r].size() == 3, ErrorCode::kIo, "rotation must be 3x3");
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[r][c].get<double>();
  }
  const json& center = j.at("center");
  RIGKIT_CHECK(center.size() == 3, ErrorCode::kIo, "center must have 3 values");
  for (int i = 0; i < 3; ++i) pose.center[i] = center[i].get<double>();
  return pose;
}

json IntrinsicsToJson(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics IntrinsicsFromJson(const json& j) {
  return {j.at("fx").get<double>(), j.at("fy").get<double>(),
          j.at("width").get<int>(), j.at("height").get<int>()};
}

std::string BlobFileName(std::size_t frame, const std::string& key) {
  std::ostringstream name;
  name << "frames/" << std::setw(6) << std::setfill('0') << frame << "_" << key
       << ".f32";
  return name.str();
}

void CheckShape(const Blob& blob, std::initializer_list<int> expect_tail,
                std::size_t rank) {
  RIGKIT_CHECK(blob.shape.size() == rank, ErrorCode::kShapeMismatch,
               "blob has unexpected rank");
  std::size_t i = rank - expect_tail.size();
  for (int dim : expect_tail) {
    RIGKIT_CHECK(blob.shape[i++] == dim, ErrorCode::kShapeMismatch,
                 "blob has unexpected trailing dimension");
  }
  RIGKIT_CHECK(blob.data.size() == blob.NumElements(), ErrorCode::kShapeMismatch,
               "blob data does not match its shape");
}

}  // namespace

std::size_t Blob::NumElements() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

const Blob& FrameRecord::Get(const std::string& key) const {
  auto it = blobs.find(key);
  RIGKIT_CHECK(it != blobs.end(), ErrorCode::kIo,
               "frame has no '" + key + "' blob");
  return it->second;
}

void WriteBlobFile(const fs::path& path, const Blob& blob) {
  RIGKIT_CHECK(blob.data.size() == blob.NumElements(), ErrorCode::kShapeMismatch,
               "blob data does not match its shape");
  std::vector<char> bytes(blob.data.size() * 4);
  for (std::size_t i = 0; i < blob.data.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(blob.data[i]);
    for (int b = 0; b < 4; ++b) {
      bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  RIGKIT_CHECK(out.good(), ErrorCode::kIo,
               "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  RIGKIT_CHECK(out.good(), ErrorCode::kIo,
               "failed writing '" + path.string() + "'");
}

Blob ReadBlobFile(const fs::path& path, std::vector<int> shape) {
  Blob blob;
  blob.shape = std::move(shape);
  std::error_code ec;
  RIGKIT_CHECK(fs::is_regular_file(path, ec), ErrorCode::kIo,
               "missing blob '" + path.string() + "'");
  const std::uintmax_t size = fs::file_size(path, ec);
  RIGKIT_CHECK(!ec && size == blob.NumElements() * 4, ErrorCode::kIo,
               "blob '" + path.string() + "' has " + std::to_string(size) +
                   " bytes, expected " +
                   std::to_string(blob.NumElements() * 4));
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(size));
  RIGKIT_CHECK(in.good() || in.eof(), ErrorCode::kIo,
               "failed reading '" + path.string() + "'");
  blob.data.resize(blob.NumElements());
  for (std::size_t i = 0; i < blob.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    }
    blob.data[i] = std::bit_cast<float>(bits);
  }
  return blob;
}

void WriteContainer(const SceneContainer& scene, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  RIGKIT_CHECK(!ec, ErrorCode::kIo,
               "cannot create '" + dir.string() + "': " + ec.message());

  json manifest;
  manifest["format_version"] = kContainerFormatVersion;
  manifest["kind"] = scene.kind;
  manifest["image_size"] = {scene.rows, scene.cols};
  manifest["generator"] = json::parse(scene.generator_json);
  if (scene.rig) {
    json cams = json::array();
    for (const RigCamera& cam : scene.rig->cameras) {
      cams.push_back({{"camera_id", cam.camera_id},
                      {"rig_pose", PoseToJson(cam.rig_pose)},
                      {"intrinsics", IntrinsicsToJson(cam.intrinsics)}});
    }
    manifest["rig"] = {{"cameras", cams}};
  } else {
    manifest["rig"] = nullptr;
  }
  json frames = json::array();
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const FrameRecord& frame = scene.frames[f];
    json blobs = json::object();
    for (const auto& [key, blob] : frame.blobs) {
      const std::string rel = BlobFileName(f, key);
      WriteBlobFile(dir / rel, blob);
      blobs[key] = {{"path", rel}, {"shape", blob.shape}};
    }
    frames.push_back({{"index", f},
                      {"camera_id", frame.camera_id},
                      {"timestamp", frame.timestamp},
                      {"intrinsics", IntrinsicsToJson(frame.intrinsics)},
                      {"world_pose", PoseToJson(frame.world_pose)},
                      {"rig_pose", PoseToJson(frame.rig_pose)},
                      {"ego_pose", PoseToJson(frame.ego_pose)},
                      {"blobs", blobs}});
  }
  manifest["frames"] = frames;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  RIGKIT_CHECK(out.good(), ErrorCode::kIo,
               "cannot write manifest in '" + dir.string() + "'");
  out << manifest.dump(2) << "\n";
  RIGKIT_CHECK(out.good(), ErrorCode::kIo, "failed writing manifest");
}

SceneContainer ReadContainer(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  RIGKIT_CHECK(in.good(), ErrorCode::kIo,
               "no manifest.json in '" + dir.string() + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed manifest: ") + e.what());
  }

  SceneContainer scene;
  try {
    const int version = manifest.at("format_version").get<int>();
    RIGKIT_CHECK(version == kContainerFormatVersion, ErrorCode::kIo,
                 "unsupported container format_version " +
                     std::to_string(version));
    scene.kind = manifest.value("kind", "scene");
    scene.rows = manifest.at("image_size").at(0).get<int>();
    scene.cols = manifest.at("image_size").at(1).get<int>();
    scene.generator_json = manifest.value("generator", json::object()).dump();
    if (manifest.contains("rig") && !manifest["rig"].is_null()) {
      RigCalibration rig;
      for (const json& cam : manifest["rig"].at("cameras")) {
        rig.cameras.push_back({cam.at("camera_id").get<int>(),
                               PoseFromJson(cam.at("rig_pose")),
                               IntrinsicsFromJson(cam.at("intrinsics"))});
      }
      scene.rig = std::move(rig);
    }
    for (const json& jf : manifest.at("frames")) {
      FrameRecord frame;
      frame.camera_id = jf.at("camera_id").get<int>();
      frame.timestamp = jf.at("timestamp").get<double>();
      frame.intrinsics = IntrinsicsFromJson(jf.at("intrinsics"));
      frame.world_pose = PoseFromJson(jf.at("world_pose"));
      frame.rig_pose = PoseFromJson(jf.at("rig_pose"));
      frame.ego_pose = PoseFromJson(jf.at("ego_pose"));
      for (const auto& [key, jb] : jf.at("blobs").items()) {
        frame.blobs[key] =
            ReadBlobFile(dir / jb.at("path").get<std::string>(),
                         jb.at("shape").get<std::vector<int>>());
      }
      scene.frames.push_back(std::move(frame));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed manifest: ") + e.what());
  }
  return scene;
}

Blob RaymapToBlob(const Raymap& raymap) {
  Blob blob;
  blob.shape = {raymap.rows(), raymap.cols(), 6};
  const std::vector<double> packed = raymap.Pack6();
  blob.data.assign(packed.begin(), packed.end());
  return blob;
}

Raymap RaymapFromBlob(const Blob& blob, FrameTag tag) {
  CheckShape(blob, {6}, 3);
  const std::vector<double> packed(blob.data.begin(), blob.data.end());
  return Raymap::Unpack6(packed, blob.shape[0], blob.shape[1], tag);
}

Blob PointsToBlob(const Grid<Vec3>& points) {
  Blob blob;
  blob.shape = {points.rows(), points.cols(), 3};
  blob.data.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    blob.data.insert(blob.data.end(), {static_cast<float>(p.x()),
                                       static_cast<float>(p.y()),
                                       static_cast<float>(p.z())});
  }
  return blob;
}

Grid<Vec3> PointsFromBlob(const Blob& blob) {
  CheckShape(blob, {3}, 3);
  Grid<Vec3> points(blob.shape[0], blob.shape[1]);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = Vec3(blob.data[3 * i], blob.data[3 * i + 1],
                     blob.data[3 * i + 2]);
  }
  return points;
}

Blob ScalarsToBlob(const Grid<double>& values) {
  Blob blob;
  blob.shape = {values.rows(), values.cols()};
  blob.data.assign(values.begin(), values.end());
  return blob;
}

Grid<double> ScalarsFromBlob(const Blob& blob) {
  CheckShape(blob, {}, 2);
  Grid<double> values(blob.shape[0], blob.shape[1]);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = blob.data[i];
  return values;
}

Blob MaskToBlob(const Grid<std::uint8_t>& mask) {
  Blob blob;
  blob.shape = {mask.rows(), mask.cols()};
  blob.data.reserve(mask.size());
  for (std::uint8_t v : mask) blob.data.push_back(v ? 1.0f : 0.0f);
  return blob;
}

Grid<std::uint8_t> MaskFromBlob(const Blob& blob) {
  CheckShape(blob, {}, 2);
  Grid<std::uint8_t> mask(blob.shape[0], blob.shape[1]);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = blob.data[i] != 0.0f ? 1 : 0;
  }
  return mask;
}

Raymap FramePoseRaymap(const FrameRecord& frame) {
  return RaymapFromBlob(frame.Get("pose_raymap"), FrameTag::kPose);
}

Raymap FrameRigRaymap(const FrameRecord& frame) {
  return RaymapFromBlob(frame.Get("rig_raymap"), FrameTag::kRig);
}

Pointmap FramePointmap(const FrameRecord& frame) {
  Pointmap pm;
  pm.points = PointsFromBlob(frame.Get("pointmap"));
  if (frame.Has("valid")) {
    pm.valid = MaskFromBlob(frame.Get("valid"));
    RIGKIT_CHECK(pm.valid.SameShape(pm.points), ErrorCode::kShapeMismatch,
                 "valid mask and pointmap differ in shape");
  } else {
    pm.valid = Grid<std::uint8_t>(pm.points.rows(), pm.points.cols(), 1);
  }
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (pm.valid[i] && !pm.points[i].allFinite()) pm.valid[i] = 0;
  }
  return pm;
}

Grid<double> FrameImage(const FrameRecord& frame) {
  return ScalarsFromBlob(frame.Get("image"));
}

std::vector<Pose> WorldPoses(const SceneContainer& scene) {
  std::vector<Pose> poses;
  poses.reserve(scene.frames.size());
  for (const FrameRecord& f : scene.frames) poses.push_back(f.world_pose);
  return poses;
}

std::vector<int> CameraIds(const SceneContainer& scene) {
  std::vector<int> ids;
  ids.reserve(scene.frames.size());
  for (const FrameRecord& f : scene.frames) ids.push_back(f.camera_id);
  return ids;
}

}  // namespace rigkit
