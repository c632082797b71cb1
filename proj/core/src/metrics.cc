#include "rigkit/metrics.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rigkit/kdtree.h"
#include "rigkit/parallel.h"

namespace rigkit {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double RotationErrorDeg(const Mat3& pred_rel, const Mat3& gt_rel) {
  const double c = ((pred_rel.transpose() * gt_rel).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

double DirectionErrorDeg(const Vec3& pred, const Vec3& gt) {
  constexpr double kEps = 1e-12;
  const double np = pred.norm();
  const double ng = gt.norm();
  if (np < kEps || ng < kEps) return (np < kEps && ng < kEps) ? 0.0 : 180.0;
  const double c = pred.dot(gt) / (np * ng);
  return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg;
}

double MedianNorm(std::span<const Vec3> points) {
  std::vector<double> norms;
  norms.reserve(points.size());
  for (const Vec3& p : points) norms.push_back(p.norm());
  std::sort(norms.begin(), norms.end());
  const std::size_t n = norms.size();
  return n % 2 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
}

double MeanNearestDistance(std::span<const Vec3> queries, const KdTree& tree) {
  std::vector<double> dist(queries.size());
  ParallelFor(queries.size(),
              [&](std::size_t i) { dist[i] = tree.Nearest(queries[i]).distance; });
  double sum = 0.0;
  for (double d : dist) sum += d;
  return sum / static_cast<double>(dist.size());
}

}  // namespace

PairwiseErrors ComputePairwiseErrors(std::span<const Pose> pred,
                                     std::span<const Pose> gt) {
  RIGKIT_CHECK(pred.size() == gt.size(), ErrorCode::kShapeMismatch,
               "prediction and ground truth differ in frame count");
  RIGKIT_CHECK(gt.size() >= 2, ErrorCode::kInvalidInput,
               "pairwise errors need at least 2 frames");
  PairwiseErrors out;
  const int n = static_cast<int>(gt.size());
  out.pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const Mat3 pred_rel = pred[i].rotation.transpose() * pred[j].rotation;
      const Mat3 gt_rel = gt[i].rotation.transpose() * gt[j].rotation;
      const Vec3 pred_t =
          pred[i].rotation.transpose() * (pred[j].center - pred[i].center);
      const Vec3 gt_t =
          gt[i].rotation.transpose() * (gt[j].center - gt[i].center);
      out.pairs.push_back({i, j, RotationErrorDeg(pred_rel, gt_rel),
                           DirectionErrorDeg(pred_t, gt_t)});
    }
  }
  return out;
}

PoseAccuracy RraRta(const PairwiseErrors& errors, double tau_deg) {
  if (errors.pairs.empty()) return {};
  std::size_t rot_ok = 0;
  std::size_t trans_ok = 0;
  for (const PairError& e : errors.pairs) {
    rot_ok += e.rotation_deg <= tau_deg;
    trans_ok += e.translation_deg <= tau_deg;
  }
  const double n = static_cast<double>(errors.pairs.size());
  return {rot_ok / n, trans_ok / n};
}

double Maa(const PairwiseErrors& errors, int tau_max) {
  RIGKIT_CHECK(tau_max >= 1, ErrorCode::kInvalidInput,
               "mAA needs a positive threshold range");
  if (errors.pairs.empty()) return 0.0;
  double total = 0.0;
  for (int tau = 1; tau <= tau_max; ++tau) {
    std::size_t ok = 0;
    for (const PairError& e : errors.pairs) {
      ok += std::max(e.rotation_deg, e.translation_deg) <= tau;
    }
    total += static_cast<double>(ok) / errors.pairs.size();
  }
  return total / tau_max;
}

PointcloudScores PointcloudMetrics(std::span<const Vec3> pred,
                                   std::span<const Vec3> gt,
                                   Alignment alignment) {
  RIGKIT_CHECK(!pred.empty() && !gt.empty(), ErrorCode::kInvalidInput,
               "pointcloud metrics need nonempty masked sets");
  PointcloudScores scores;
  std::vector<Vec3> aligned(pred.begin(), pred.end());
  if (alignment == Alignment::kScale) {
    const double pred_median = MedianNorm(pred);
    RIGKIT_CHECK(pred_median > 0.0, ErrorCode::kInvalidInput,
                 "prediction collapses to the origin; cannot scale-align");
    scores.scale = MedianNorm(gt) / pred_median;
    for (Vec3& p : aligned) p *= scores.scale;
  }
  const KdTree gt_tree(gt);
  const KdTree pred_tree(aligned);
  scores.accuracy = MeanNearestDistance(aligned, gt_tree);
  scores.completeness = MeanNearestDistance(gt, pred_tree);
  scores.chamfer = 0.5 * (scores.accuracy + scores.completeness);
  return scores;
}

PointcloudScores PointcloudMetrics(std::span<const Pointmap> pred,
                                   std::span<const Pointmap> gt,
                                   Alignment alignment) {
  RIGKIT_CHECK(pred.size() == gt.size(), ErrorCode::kShapeMismatch,
               "prediction and ground truth differ in frame count");
  std::vector<Vec3> pred_points;
  std::vector<Vec3> gt_points;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    RIGKIT_CHECK(pred[f].points.SameShape(gt[f].points),
                 ErrorCode::kShapeMismatch, "pointmaps differ in shape");
    for (std::size_t i = 0; i < gt[f].points.size(); ++i) {
      if (!gt[f].valid[i] || !pred[f].valid[i]) continue;
      pred_points.push_back(pred[f].points[i]);
      gt_points.push_back(gt[f].points[i]);
    }
  }
  return PointcloudMetrics(pred_points, gt_points, alignment);
}

Alignment ParseAlignment(const std::string& name) {
  if (name == "none") return Alignment::kNone;
  if (name == "scale") return Alignment::kScale;
  throw Error(ErrorCode::kInvalidInput, "unknown alignment '" + name + "'");
}

}  // namespace rigkit
