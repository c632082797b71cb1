#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rigkit/geometry.h"
#include "rigkit/rig.h"

namespace rigkit {

// Camera-to-rig extrinsics decoded from a rig raymap; intrinsics are
// recovered along the way and discarded.
Pose DecodeRigPose(const Raymap& rig_raymap,
                   const CameraRecoveryOptions& options = {});

struct ClusterOptions {
  double threshold = 0.25;  // stop merging above this linkage distance
  double gamma = 0.5;       // rig units per radian of rotation difference
};

// d(a, b) = |c_a - c_b| + gamma * geodesic(R_a, R_b).
double RigPoseDistance(const Pose& a, const Pose& b, double gamma);

struct ClusterAssignment {
  std::vector<int> labels;  // per frame, in [0, num_clusters)
  int num_clusters = 0;
  std::vector<Pose> medoids;
};

// Average-linkage agglomerative clustering that merges while the closest
// pair of clusters is within `threshold`; the number of clusters is an
// outcome, not an input. Cluster labels are numbered by first appearance.
ClusterAssignment ClusterRigPoses(std::span<const Pose> poses,
                                  const ClusterOptions& options = {});

struct ClusterMatching {
  std::vector<int> cluster_to_camera;  // -1 when a cluster is unmatched
  std::size_t matched_frames = 0;
  double accuracy = 0.0;
};

// One-to-one cluster <-> camera matching maximizing agreement (Hungarian on
// negated contingency counts). Frames in unmatched clusters earn no credit.
ClusterMatching MatchClusters(std::span<const int> labels, int num_clusters,
                              std::span<const int> gt_camera_ids);

double RigIdAccuracy(std::span<const int> labels,
                     std::span<const int> gt_camera_ids);

// Per cluster: coordinate-wise median center and chordal L2 mean rotation.
std::vector<Pose> AggregateClusterPoses(std::span<const Pose> poses,
                                        std::span<const int> labels,
                                        int num_clusters);

struct RigMaaResult {
  double value = 0.0;
  bool valid = false;
  std::string note;
};

// Rig-relative mAA between the discovered cameras and their matched ground
// truth cameras, after re-expressing both rigs relative to the matched
// reference camera and normalizing. Fewer than two matched cameras yields
// value 0 with valid = false.
RigMaaResult RigMaa(std::span<const Pose> cluster_poses,
                    const RigCalibration& gt_rig,
                    const ClusterMatching& matching);

struct DiscoveryReport {
  ClusterAssignment clusters;
  std::vector<Pose> cluster_poses;
  bool no_rig = false;
  std::optional<ClusterMatching> matching;
  std::optional<RigMaaResult> rig_maa;
};

// Full pipeline: decode -> cluster -> aggregate, and score against ground
// truth when camera ids (and optionally the rig) are provided.
DiscoveryReport DiscoverRigFromPoses(
    std::span<const Pose> decoded, const ClusterOptions& options,
    std::optional<std::span<const int>> gt_camera_ids = std::nullopt,
    const RigCalibration* gt_rig = nullptr);

DiscoveryReport DiscoverRig(
    std::span<const Raymap> rig_raymaps, const ClusterOptions& options,
    std::optional<std::span<const int>> gt_camera_ids = std::nullopt,
    const RigCalibration* gt_rig = nullptr);

// Calibration-noise trial: every frame sees its own PerturbRig(rig, sigma)
// draw, its rig raymap is rendered from that perturbed rig and decoded, and
// discovery is scored against the unperturbed rig.
struct NoiseTrialResult {
  double rig_maa = 0.0;
  bool rig_maa_valid = false;
  double rig_id_accuracy = 0.0;
  int num_clusters = 0;
};

NoiseTrialResult RunNoiseTrial(const RigCalibration& rig,
                               std::span<const int> frame_camera_ids, int rows,
                               int cols, double sigma, std::uint64_t seed,
                               const ClusterOptions& options = {});

}  // namespace rigkit
