#include "rigkit/discovery.h"

#include <algorithm>
#include <limits>
#include <map>
#include <random>

#include "rigkit/hungarian.h"
#include "rigkit/metrics.h"
#include "rigkit/parallel.h"

namespace rigkit {

Pose DecodeRigPose(const Raymap& rig_raymap,
                   const CameraRecoveryOptions& options) {
  const Camera camera = CameraFromRaymap(rig_raymap, options);
  return camera.pose();
}

double RigPoseDistance(const Pose& a, const Pose& b, double gamma) {
  return (a.center - b.center).norm() +
         gamma * RotationAngle(a.rotation, b.rotation);
}

ClusterAssignment ClusterRigPoses(std::span<const Pose> poses,
                                  const ClusterOptions& options) {
  RIGKIT_CHECK(!poses.empty(), ErrorCode::kInvalidInput,
               "clustering needs at least one frame");
  RIGKIT_CHECK(options.threshold >= 0.0 && options.gamma >= 0.0,
               ErrorCode::kInvalidInput, "clustering options must be >= 0");
  const std::size_t n = poses.size();
  Eigen::MatrixXd pair_dist(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    pair_dist(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      pair_dist(i, j) = pair_dist(j, i) =
          RigPoseDistance(poses[i], poses[j], options.gamma);
    }
  }

  // Average linkage via the Lance-Williams update. Cluster slots are indexed
  // by their lowest member so ties break toward earlier frames.
  Eigen::MatrixXd link = pair_dist;
  std::vector<std::vector<std::size_t>> members(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) members[i] = {i};
  std::size_t num_active = n;
  while (num_active > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && link(i, j) < best) {
          best = link(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (best > options.threshold) break;
    const double ni = static_cast<double>(members[bi].size());
    const double nj = static_cast<double>(members[bj].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      link(bi, k) = link(k, bi) =
          (ni * link(bi, k) + nj * link(bj, k)) / (ni + nj);
    }
    members[bi].insert(members[bi].end(), members[bj].begin(),
                       members[bj].end());
    members[bj].clear();
    active[bj] = false;
    --num_active;
  }

  ClusterAssignment out;
  out.labels.assign(n, -1);
  std::map<std::size_t, int> slot_label;
  std::vector<std::size_t> slot_of(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t m : members[s]) slot_of[m] = s;
  }
  for (std::size_t f = 0; f < n; ++f) {
    auto [it, inserted] =
        slot_label.try_emplace(slot_of[f], static_cast<int>(slot_label.size()));
    out.labels[f] = it->second;
  }
  out.num_clusters = static_cast<int>(slot_label.size());
  out.medoids.resize(out.num_clusters);
  for (const auto& [slot, label] : slot_label) {
    const auto& mem = members[slot];
    double best = std::numeric_limits<double>::infinity();
    std::size_t medoid = mem.front();
    for (std::size_t a : mem) {
      double sum = 0.0;
      for (std::size_t b : mem) sum += pair_dist(a, b);
      if (sum < best || (sum == best && a < medoid)) {
        best = sum;
        medoid = a;
      }
    }
    out.medoids[label] = poses[medoid];
  }
  return out;
}

ClusterMatching MatchClusters(std::span<const int> labels, int num_clusters,
                              std::span<const int> gt_camera_ids) {
  RIGKIT_CHECK(labels.size() == gt_camera_ids.size(), ErrorCode::kShapeMismatch,
               "labels and ground-truth ids differ in length");
  std::vector<int> cameras(gt_camera_ids.begin(), gt_camera_ids.end());
  std::sort(cameras.begin(), cameras.end());
  cameras.erase(std::unique(cameras.begin(), cameras.end()), cameras.end());

  int k = num_clusters;
  for (int l : labels) {
    RIGKIT_CHECK(l >= 0, ErrorCode::kInvalidInput, "negative cluster label");
    k = std::max(k, l + 1);
  }
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(k, cameras.size());
  for (std::size_t f = 0; f < labels.size(); ++f) {
    const auto col = std::lower_bound(cameras.begin(), cameras.end(),
                                      gt_camera_ids[f]) -
                     cameras.begin();
    counts(labels[f], col) += 1.0;
  }
  const std::vector<int> assignment = SolveAssignment(-counts);

  ClusterMatching out;
  out.cluster_to_camera.assign(k, -1);
  for (int c = 0; c < k; ++c) {
    if (assignment[c] < 0) continue;
    out.cluster_to_camera[c] = cameras[assignment[c]];
    out.matched_frames += static_cast<std::size_t>(counts(c, assignment[c]));
  }
  out.accuracy = labels.empty() ? 0.0
                                : static_cast<double>(out.matched_frames) /
                                      static_cast<double>(labels.size());
  return out;
}

double RigIdAccuracy(std::span<const int> labels,
                     std::span<const int> gt_camera_ids) {
  return MatchClusters(labels, 0, gt_camera_ids).accuracy;
}

std::vector<Pose> AggregateClusterPoses(std::span<const Pose> poses,
                                        std::span<const int> labels,
                                        int num_clusters) {
  RIGKIT_CHECK(poses.size() == labels.size(), ErrorCode::kShapeMismatch,
               "poses and labels differ in length");
  std::vector<std::vector<std::size_t>> members(num_clusters);
  for (std::size_t f = 0; f < labels.size(); ++f) {
    RIGKIT_CHECK(labels[f] >= 0 && labels[f] < num_clusters,
                 ErrorCode::kInvalidInput, "cluster label out of range");
    members[labels[f]].push_back(f);
  }
  std::vector<Pose> out(num_clusters);
  for (int c = 0; c < num_clusters; ++c) {
    RIGKIT_CHECK(!members[c].empty(), ErrorCode::kInvalidInput,
                 "empty cluster");
    Mat3 rot_sum = Mat3::Zero();
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<double> coords;
      for (std::size_t f : members[c]) coords.push_back(poses[f].center[axis]);
      std::sort(coords.begin(), coords.end());
      const std::size_t m = coords.size();
      out[c].center[axis] =
          m % 2 ? coords[m / 2] : 0.5 * (coords[m / 2 - 1] + coords[m / 2]);
    }
    for (std::size_t f : members[c]) rot_sum += poses[f].rotation;
    out[c].rotation = members[c].size() == 1 ? poses[members[c][0]].rotation
                                             : ProjectToRotation(rot_sum);
  }
  return out;
}

RigMaaResult RigMaa(std::span<const Pose> cluster_poses,
                    const RigCalibration& gt_rig,
                    const ClusterMatching& matching) {
  RigMaaResult result;
  // Matched cameras in ground-truth rig order; the reference comes first
  // whenever it was matched.
  std::vector<std::pair<std::size_t, int>> matched;  // (rig index, cluster)
  for (std::size_t c = 0; c < matching.cluster_to_camera.size() &&
                          c < cluster_poses.size();
       ++c) {
    const int cam = matching.cluster_to_camera[c];
    if (cam < 0) continue;
    matched.emplace_back(gt_rig.IndexOf(cam), static_cast<int>(c));
  }
  std::sort(matched.begin(), matched.end());
  if (matched.size() < 2) {
    result.note = "fewer than two matched cameras";
    return result;
  }

  RigCalibration pred;
  RigCalibration gt;
  for (const auto& [rig_index, cluster] : matched) {
    RigCamera g = gt_rig.cameras[rig_index];
    RigCamera p = g;
    p.rig_pose = cluster_poses[cluster];
    gt.cameras.push_back(g);
    pred.cameras.push_back(p);
  }
  auto normalized = [](const RigCalibration& rig) {
    try {
      return NormalizeRig(rig);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateRig) throw;
      return rig;
    }
  };
  pred = normalized(pred);
  gt = normalized(gt);

  std::vector<Pose> pred_poses;
  std::vector<Pose> gt_poses;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    pred_poses.push_back(pred.cameras[i].rig_pose);
    gt_poses.push_back(gt.cameras[i].rig_pose);
  }
  result.value = Maa(ComputePairwiseErrors(pred_poses, gt_poses));
  result.valid = true;
  return result;
}

DiscoveryReport DiscoverRigFromPoses(
    std::span<const Pose> decoded, const ClusterOptions& options,
    std::optional<std::span<const int>> gt_camera_ids,
    const RigCalibration* gt_rig) {
  DiscoveryReport report;
  report.clusters = ClusterRigPoses(decoded, options);
  report.cluster_poses = AggregateClusterPoses(
      decoded, report.clusters.labels, report.clusters.num_clusters);
  report.no_rig = report.clusters.num_clusters == 1;
  if (gt_camera_ids) {
    report.matching = MatchClusters(report.clusters.labels,
                                    report.clusters.num_clusters,
                                    *gt_camera_ids);
    if (gt_rig) {
      report.rig_maa = RigMaa(report.cluster_poses, *gt_rig, *report.matching);
    }
  }
  return report;
}

DiscoveryReport DiscoverRig(std::span<const Raymap> rig_raymaps,
                            const ClusterOptions& options,
                            std::optional<std::span<const int>> gt_camera_ids,
                            const RigCalibration* gt_rig) {
  std::vector<Pose> decoded(rig_raymaps.size());
  ParallelFor(rig_raymaps.size(), [&](std::size_t i) {
    decoded[i] = DecodeRigPose(rig_raymaps[i]);
  });
  return DiscoverRigFromPoses(decoded, options, gt_camera_ids, gt_rig);
}

NoiseTrialResult RunNoiseTrial(const RigCalibration& rig,
                               std::span<const int> frame_camera_ids, int rows,
                               int cols, double sigma, std::uint64_t seed,
                               const ClusterOptions& options) {
  RIGKIT_CHECK(sigma >= 0.0, ErrorCode::kInvalidInput,
               "noise sigma must be nonnegative");
  const std::size_t n = frame_camera_ids.size();
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> frame_seeds(n);
  for (std::uint64_t& s : frame_seeds) s = rng();

  std::vector<Pose> decoded(n);
  ParallelFor(n, [&](std::size_t f) {
    const RigCalibration noisy = PerturbRig(rig, sigma, frame_seeds[f]);
    decoded[f] =
        DecodeRigPose(RigRaymap(noisy, frame_camera_ids[f], rows, cols));
  });
  const DiscoveryReport report =
      DiscoverRigFromPoses(decoded, options, frame_camera_ids, &rig);
  NoiseTrialResult result;
  result.num_clusters = report.clusters.num_clusters;
  result.rig_id_accuracy = report.matching->accuracy;
  result.rig_maa = report.rig_maa->value;
  result.rig_maa_valid = report.rig_maa->valid;
  return result;
}

}  // namespace rigkit
