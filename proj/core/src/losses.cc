#include "rigkit/losses.h"

#include <cmath>

namespace rigkit {

void LossWeights::Validate() const {
  RIGKIT_CHECK(lambda_p >= 0.0 && lambda_r >= 0.0 && alpha >= 0.0 &&
                   beta >= 0.0,
               ErrorCode::kInvalidInput, "loss weights must be nonnegative");
}

double Softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double MeanSceneDepth(std::span<const Pointmap> gt) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Pointmap& pm : gt) {
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
      if (!pm.valid[i]) continue;
      sum += pm.points[i].z();
      ++count;
    }
  }
  RIGKIT_CHECK(count > 0, ErrorCode::kInvalidInput,
               "no valid pixels for mean scene depth");
  const double mean = sum / static_cast<double>(count);
  RIGKIT_CHECK(mean > 0.0, ErrorCode::kInvalidInput,
               "mean scene depth is not positive");
  return mean;
}

double PointmapLoss(const Grid<Vec3>& pred, const Grid<double>& conf_raw,
                    const Pointmap& gt, double zbar, double alpha,
                    PointmapLossGrad* grad) {
  RIGKIT_CHECK(pred.SameShape(gt.points) && conf_raw.SameShape(gt.points) &&
                   gt.valid.SameShape(gt.points),
               ErrorCode::kShapeMismatch, "pointmap loss inputs differ in shape");
  RIGKIT_CHECK(zbar > 0.0, ErrorCode::kInvalidInput, "zbar must be positive");
  if (grad) {
    grad->d_points = Grid<Vec3>(pred.rows(), pred.cols(), Vec3::Zero());
    grad->d_conf_raw = Grid<double>(pred.rows(), pred.cols(), 0.0);
  }
  const double inv_z = 1.0 / zbar;
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!gt.valid[i]) continue;
    const Vec3 diff = pred[i] - gt.points[i] * inv_z;
    const double err = diff.norm();
    const double log_conf = Softplus(conf_raw[i]);
    const double conf = 1.0 + std::exp(conf_raw[i]);
    loss += conf * err - alpha * log_conf;
    if (grad) {
      if (err > 0.0) grad->d_points[i] = conf * diff / err;
      // dC/draw = exp(raw); d(log C)/draw = exp(raw) / C.
      const double e = std::exp(conf_raw[i]);
      grad->d_conf_raw[i] = e * err - alpha * e / conf;
    }
  }
  return loss;
}

double RaymapLoss(const Grid<Vec3>& pred_dirs, const Vec3& pred_center,
                  const Raymap& gt, double zbar, double beta,
                  RaymapLossGrad* grad) {
  RIGKIT_CHECK(pred_dirs.SameShape(gt.directions), ErrorCode::kShapeMismatch,
               "raymap loss inputs differ in shape");
  RIGKIT_CHECK(zbar > 0.0, ErrorCode::kInvalidInput, "zbar must be positive");
  if (grad) {
    grad->d_dirs = Grid<Vec3>(pred_dirs.rows(), pred_dirs.cols(), Vec3::Zero());
    grad->d_center = Vec3::Zero();
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < pred_dirs.size(); ++i) {
    const Vec3 diff = pred_dirs[i] - gt.directions[i];
    const double err = diff.norm();
    loss += err;
    if (grad && err > 0.0) grad->d_dirs[i] = diff / err;
  }
  const Vec3 center_diff = pred_center - gt.center / zbar;
  const double center_err = center_diff.norm();
  loss += beta * center_err;
  if (grad && center_err > 0.0) {
    grad->d_center = beta * center_diff / center_err;
  }
  return loss;
}

}  // namespace rigkit
