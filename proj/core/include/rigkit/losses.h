#pragma once

#include <span>

#include "rigkit/geometry.h"

namespace rigkit {

struct LossWeights {
  double lambda_p = 1.0;  // pose raymap
  double lambda_r = 1.0;  // rig raymap
  double alpha = 0.2;     // confidence regularizer
  double beta = 1.0;      // camera-center term

  void Validate() const;
};

// Mean depth (z in the reference camera frame) over every valid pixel of
// every frame. Throws kInvalidInput when there are no valid pixels or the
// mean is not positive.
double MeanSceneDepth(std::span<const Pointmap> gt);

struct PointmapLossGrad {
  Grid<Vec3> d_points;
  Grid<double> d_conf_raw;
};

// Sum over valid ground-truth pixels of C * ||X - Xgt / zbar|| - alpha log C
// with C = 1 + exp(conf_raw). Optionally fills the gradient w.r.t. the
// predicted points and raw confidences (zero at invalid pixels).
double PointmapLoss(const Grid<Vec3>& pred, const Grid<double>& conf_raw,
                    const Pointmap& gt, double zbar, double alpha,
                    PointmapLossGrad* grad = nullptr);

struct RaymapLossGrad {
  Grid<Vec3> d_dirs;
  Vec3 d_center = Vec3::Zero();
};

// sum_pixels ||r - rgt|| + beta ||c - cgt / zbar||. Predicted directions are
// compared unnormalized.
double RaymapLoss(const Grid<Vec3>& pred_dirs, const Vec3& pred_center,
                  const Raymap& gt, double zbar, double beta,
                  RaymapLossGrad* grad = nullptr);

inline double TotalLoss(double pointmap, double pose_raymap, double rig_raymap,
                        const LossWeights& weights) {
  return pointmap + weights.lambda_p * pose_raymap +
         weights.lambda_r * rig_raymap;
}

// log(1 + exp(x)) without overflow.
double Softplus(double x);

}  // namespace rigkit
