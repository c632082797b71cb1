#pragma once

#include <span>
#include <string>
#include <vector>

#include "rigkit/geometry.h"

namespace rigkit {

struct PairError {
  int i = 0;
  int j = 0;
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
};

struct PairwiseErrors {
  std::vector<PairError> pairs;
};

// Relative-pose errors for every frame pair i < j. Rotation error is the
// geodesic angle between predicted and true R_i^-1 R_j; translation error is
// the angle between the relative translation directions, so the comparison
// is scale free. When a relative translation vanishes the direction is
// undefined: two vanishing translations score 0 degrees, one scores 180.
PairwiseErrors ComputePairwiseErrors(std::span<const Pose> pred,
                                     std::span<const Pose> gt);

struct PoseAccuracy {
  double rra = 0.0;
  double rta = 0.0;
};

// Fraction of pairs with error <= tau (degrees).
PoseAccuracy RraRta(const PairwiseErrors& errors, double tau_deg);

// Mean over integer thresholds 1..tau_max of the fraction of pairs whose
// rotation AND translation errors are within the threshold.
double Maa(const PairwiseErrors& errors, int tau_max = 30);

enum class Alignment { kNone, kScale };

struct PointcloudScores {
  double accuracy = 0.0;
  double completeness = 0.0;
  double chamfer = 0.0;
  double scale = 1.0;  // factor applied to the prediction
};

// Accuracy: mean nearest-neighbor distance pred -> gt. Completeness: gt ->
// pred. Chamfer: their average. With kScale the prediction is first scaled
// about the origin by median(|gt|) / median(|pred|). Throws kInvalidInput on
// an empty set.
PointcloudScores PointcloudMetrics(std::span<const Vec3> pred,
                                   std::span<const Vec3> gt,
                                   Alignment alignment);

// Pointmap overload. A pixel contributes when both the prediction and the
// ground truth mark it valid.
PointcloudScores PointcloudMetrics(std::span<const Pointmap> pred,
                                   std::span<const Pointmap> gt,
                                   Alignment alignment);

Alignment ParseAlignment(const std::string& name);

}  // namespace rigkit
