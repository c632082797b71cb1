#include "rigkit/geometry.h"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace rigkit {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput:
      return "invalid-input";
    case ErrorCode::kDegenerateGeometry:
      return "degenerate-geometry";
    case ErrorCode::kRecoveryFailed:
      return "recovery-failed";
    case ErrorCode::kUnknownCamera:
      return "unknown-camera";
    case ErrorCode::kDegenerateRig:
      return "degenerate-rig";
    case ErrorCode::kShapeMismatch:
      return "shape-mismatch";
    case ErrorCode::kNonFinite:
      return "non-finite";
    case ErrorCode::kIo:
      return "io";
  }
  return "unknown";
}

Pose Pose::Inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.center = -(inv.rotation * center);
  return inv;
}

Pose Pose::Compose(const Pose& other) const {
  return {rotation * other.rotation, rotation * other.center + center};
}

Camera Camera::FromPose(double fx, double fy, int width, int height,
                        const Pose& pose) {
  Camera camera;
  camera.fx = fx;
  camera.fy = fy;
  camera.width = width;
  camera.height = height;
  camera.rotation = pose.rotation;
  camera.center = pose.center;
  return camera;
}

void Camera::Validate() const {
  RIGKIT_CHECK(std::isfinite(fx) && std::isfinite(fy) &&
                   rotation.allFinite() && center.allFinite(),
               ErrorCode::kInvalidInput, "camera has non-finite fields");
  RIGKIT_CHECK(fx > 0.0 && fy > 0.0, ErrorCode::kInvalidInput,
               "focal lengths must be positive");
  RIGKIT_CHECK(width >= 1 && height >= 1, ErrorCode::kInvalidInput,
               "image size must be positive");
  const double ortho =
      (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  RIGKIT_CHECK(ortho <= 1e-9 && std::abs(rotation.determinant() - 1.0) <= 1e-9,
               ErrorCode::kInvalidInput, "camera rotation is not in SO(3)");
}

std::vector<double> Raymap::Pack6() const {
  std::vector<double> packed;
  packed.reserve(directions.size() * 6);
  for (const Vec3& d : directions) {
    packed.insert(packed.end(), {d.x(), d.y(), d.z(), center.x(), center.y(),
                                 center.z()});
  }
  return packed;
}

Raymap Raymap::Unpack6(std::span<const double> packed, int rows, int cols,
                       FrameTag tag) {
  RIGKIT_CHECK(rows >= 1 && cols >= 1, ErrorCode::kInvalidInput,
               "raymap shape must be positive");
  RIGKIT_CHECK(packed.size() == static_cast<std::size_t>(rows) * cols * 6,
               ErrorCode::kShapeMismatch, "packed raymap has wrong length");
  Raymap raymap;
  raymap.frame_tag = tag;
  raymap.directions = Grid<Vec3>(rows, cols);
  raymap.center = Vec3(packed[3], packed[4], packed[5]);
  const double tol = 1e-6 * (1.0 + raymap.center.norm());
  for (std::size_t i = 0; i < raymap.directions.size(); ++i) {
    const double* px = packed.data() + 6 * i;
    raymap.directions[i] = Vec3(px[0], px[1], px[2]);
    const Vec3 c(px[3], px[4], px[5]);
    RIGKIT_CHECK((c - raymap.center).cwiseAbs().maxCoeff() <= tol,
                 ErrorCode::kInvalidInput,
                 "packed raymap does not share a single center");
  }
  return raymap;
}

std::size_t Pointmap::NumValid() const {
  return static_cast<std::size_t>(
      std::count_if(valid.begin(), valid.end(), [](auto v) { return v != 0; }));
}

ConfidenceMap ConfidenceMap::FromRaw(const Grid<double>& raw) {
  ConfidenceMap conf;
  conf.values = Grid<double>(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    conf.values[i] = 1.0 + std::exp(raw[i]);
  }
  return conf;
}

double RotationAngle(const Mat3& a, const Mat3& b) {
  const Eigen::Quaterniond q(Mat3(a.transpose() * b));
  const double s = q.vec().norm();
  return 2.0 * std::atan2(s, std::abs(q.w()));
}

Mat3 ProjectToRotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  if ((u * v.transpose()).determinant() < 0.0) fix(2, 2) = -1.0;
  return u * fix * v.transpose();
}

Mat3 AxisAngle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

Raymap RaymapFromCamera(const Camera& camera, int rows, int cols) {
  camera.Validate();
  RIGKIT_CHECK(rows >= 1 && cols >= 1, ErrorCode::kInvalidInput,
               "raymap shape must be positive");
  Raymap raymap;
  raymap.frame_tag = FrameTag::kPose;
  raymap.center = camera.center;
  raymap.directions = Grid<Vec3>(rows, cols);
  for (int row = 0; row < rows; ++row) {
    const double v = CenteredV(row, rows);
    for (int col = 0; col < cols; ++col) {
      const double u = CenteredU(col, cols);
      const Vec3 cam(u / camera.fx, v / camera.fy, 1.0);
      raymap.directions(row, col) = (camera.rotation * cam).normalized();
    }
  }
  return raymap;
}

namespace {

double Median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Offsets from the principal point along one axis of length `extent`.
std::vector<int> AxisSamples(int extent) {
  const double center = 0.5 * (extent - 1);
  std::vector<int> samples;
  for (const double frac : {1.0 / 8.0, 1.0 / 4.0, 3.0 / 8.0}) {
    for (const double sign : {-1.0, 1.0}) {
      int idx = static_cast<int>(std::lround(center + sign * frac * extent));
      idx = std::clamp(idx, 0, extent - 1);
      if (std::abs(idx - center) < 0.25) continue;
      if (std::find(samples.begin(), samples.end(), idx) == samples.end()) {
        samples.push_back(idx);
      }
    }
  }
  return samples;
}

// Focal length from the angle between two rays at pixel offset |offset|.
double FocalFromAngle(const Vec3& axis_ray, const Vec3& offset_ray,
                      double offset) {
  const double sin_theta = axis_ray.cross(offset_ray).norm();
  const double cos_theta = axis_ray.dot(offset_ray);
  RIGKIT_CHECK(sin_theta > 1e-15, ErrorCode::kDegenerateGeometry,
               "coincident rays in focal estimate");
  return std::abs(offset) * cos_theta / sin_theta;
}

}  // namespace

std::pair<double, double> FocalAxis(const Raymap& raymap) {
  const int rows = raymap.rows();
  const int cols = raymap.cols();
  RIGKIT_CHECK(rows >= 2 && cols >= 2, ErrorCode::kInvalidInput,
               "focal estimation needs at least 2 rows and 2 columns");
  const Grid<Vec3>& d = raymap.directions;

  // Point-symmetric pixels have camera rays of equal norm, so the normalized
  // sum of their world rays is exactly the ray through the symmetry center.
  const int r0 = rows / 2;
  const int r1 = rows - 1 - r0;
  const int c0 = cols / 2;
  const int c1 = cols - 1 - c0;
  const Vec3 axis = (d(r0, c0) + d(r1, c1)).normalized();

  std::vector<double> fx_estimates;
  for (const int col : AxisSamples(cols)) {
    const Vec3 ray = (d(r0, col) + d(r1, col)).normalized();
    fx_estimates.push_back(FocalFromAngle(axis, ray, CenteredU(col, cols)));
  }
  std::vector<double> fy_estimates;
  for (const int row : AxisSamples(rows)) {
    const Vec3 ray = (d(row, c0) + d(row, c1)).normalized();
    fy_estimates.push_back(FocalFromAngle(axis, ray, CenteredV(row, rows)));
  }
  RIGKIT_CHECK(!fx_estimates.empty() && !fy_estimates.empty(),
               ErrorCode::kDegenerateGeometry, "no off-axis samples");
  return {Median(std::move(fx_estimates)), Median(std::move(fy_estimates))};
}

std::pair<double, double> FocalPairs(const Raymap& raymap, int num_pairs,
                                     std::uint64_t seed) {
  RIGKIT_CHECK(num_pairs >= 2, ErrorCode::kInvalidInput,
               "focal pairs needs at least 2 pairs");
  const int rows = raymap.rows();
  const int cols = raymap.cols();
  RIGKIT_CHECK(rows * cols >= 2, ErrorCode::kInvalidInput,
               "raymap too small for pixel pairs");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, rows * cols - 1);
  std::vector<PixelPair> pairs;
  pairs.reserve(num_pairs);
  while (static_cast<int>(pairs.size()) < num_pairs) {
    const int a = pick(rng);
    const int b = pick(rng);
    if (a == b) continue;
    pairs.push_back({a / cols, a % cols, b / cols, b % cols});
  }
  return FocalPairs(raymap, pairs);
}

std::pair<double, double> FocalPairs(const Raymap& raymap,
                                     std::span<const PixelPair> pairs) {
  RIGKIT_CHECK(pairs.size() >= 2, ErrorCode::kInvalidInput,
               "focal pairs needs at least 2 pairs");
  const int rows = raymap.rows();
  const int cols = raymap.cols();

  struct Sample {
    double u, v, u2, v2, cos2;
  };
  std::vector<Sample> samples;
  samples.reserve(pairs.size());
  for (const PixelPair& p : pairs) {
    RIGKIT_CHECK(p.row_a >= 0 && p.row_a < rows && p.col_a >= 0 &&
                     p.col_a < cols && p.row_b >= 0 && p.row_b < rows &&
                     p.col_b >= 0 && p.col_b < cols,
                 ErrorCode::kInvalidInput, "pixel pair out of bounds");
    const Vec3& ra = raymap.directions(p.row_a, p.col_a);
    const Vec3& rb = raymap.directions(p.row_b, p.col_b);
    const double c = ra.dot(rb) / (ra.norm() * rb.norm());
    samples.push_back({CenteredU(p.col_a, cols), CenteredV(p.row_a, rows),
                       CenteredU(p.col_b, cols), CenteredV(p.row_b, rows),
                       c * c});
  }

  double fx0 = std::max(rows, cols);
  double fy0 = fx0;
  try {
    std::tie(fx0, fy0) = FocalAxis(raymap);
  } catch (const Error&) {
  }
  if (!(fx0 > 0.0) || !(fy0 > 0.0) || !std::isfinite(fx0) ||
      !std::isfinite(fy0)) {
    fx0 = fy0 = std::max(rows, cols);
  }

  // Unknowns are scaled so the initializer sits at (1, 1):
  //   1/fx^2 = x[0] / fx0^2,  1/fy^2 = x[1] / fy0^2.
  const double sa = 1.0 / (fx0 * fx0);
  const double sb = 1.0 / (fy0 * fy0);
  const std::size_t n = samples.size();

  auto evaluate = [&](const Eigen::Vector2d& x, Eigen::VectorXd* residual,
                      Eigen::MatrixXd* jacobian) {
    const double a = x[0] * sa;
    const double b = x[1] * sb;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Sample& s = samples[i];
      const double cross = s.u * s.u2 * a + s.v * s.v2 * b + 1.0;
      const double na = s.u * s.u * a + s.v * s.v * b + 1.0;
      const double nb = s.u2 * s.u2 * a + s.v2 * s.v2 * b + 1.0;
      const double denom = na * nb;
      const double g = cross * cross / denom;
      const double r = g - s.cos2;
      cost += r * r;
      if (residual) (*residual)[i] = r;
      if (jacobian) {
        const double dga = 2.0 * cross * s.u * s.u2 / denom -
                           g * (s.u * s.u * nb + s.u2 * s.u2 * na) / denom;
        const double dgb = 2.0 * cross * s.v * s.v2 / denom -
                           g * (s.v * s.v * nb + s.v2 * s.v2 * na) / denom;
        (*jacobian)(i, 0) = dga * sa;
        (*jacobian)(i, 1) = dgb * sb;
      }
    }
    return cost;
  };

  Eigen::Vector2d x(1.0, 1.0);
  Eigen::VectorXd residual(n);
  Eigen::MatrixXd jacobian(n, 2);
  double cost = evaluate(x, &residual, &jacobian);

  {
    // Both unknowns must be observable from the sampled pairs.
    const Eigen::Matrix2d normal = jacobian.transpose() * jacobian;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(normal);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    RIGKIT_CHECK(hi > 0.0 && lo > 1e-12 * hi, ErrorCode::kRecoveryFailed,
                 "pixel pairs do not constrain both focal lengths");
  }

  double lambda = 1e-3;
  bool done = false;
  for (int iter = 0; iter < 200 && !done && cost > 1e-32; ++iter) {
    const Eigen::Matrix2d normal = jacobian.transpose() * jacobian;
    const Eigen::Vector2d gradient = jacobian.transpose() * residual;
    // Raise damping until the step decreases the cost; if none does, the
    // current point is a minimum to working precision.
    done = true;
    for (; lambda < 1e20; lambda *= 10.0) {
      Eigen::Matrix2d damped = normal;
      damped.diagonal() *= (1.0 + lambda);
      const Eigen::Vector2d step = damped.ldlt().solve(-gradient);
      const double candidate_cost = evaluate(x + step, nullptr, nullptr);
      if (std::isfinite(candidate_cost) && candidate_cost < cost) {
        x += step;
        lambda = std::max(lambda * 0.1, 1e-12);
        const double prev = cost;
        cost = evaluate(x, &residual, &jacobian);
        done = step.norm() < 1e-15 * (1.0 + x.norm()) ||
               prev - cost <= 1e-30 * prev;
        break;
      }
    }
  }

  const double a = x[0] * sa;
  const double b = x[1] * sb;
  RIGKIT_CHECK(std::isfinite(a) && std::isfinite(b),
               ErrorCode::kRecoveryFailed, "focal solve diverged");
  RIGKIT_CHECK(a > 0.0 && b > 0.0, ErrorCode::kRecoveryFailed,
               "focal solve produced nonpositive squared inverse focal");
  return {1.0 / std::sqrt(a), 1.0 / std::sqrt(b)};
}

Mat3 RotationFromRayPairs(std::span<const Vec3> cam_rays,
                          std::span<const Vec3> world_rays) {
  RIGKIT_CHECK(cam_rays.size() == world_rays.size(), ErrorCode::kInvalidInput,
               "ray lists differ in length");
  RIGKIT_CHECK(cam_rays.size() >= 2, ErrorCode::kInvalidInput,
               "rotation recovery needs at least 2 rays");
  Mat3 cross_cov = Mat3::Zero();
  for (std::size_t i = 0; i < cam_rays.size(); ++i) {
    cross_cov.noalias() += world_rays[i] * cam_rays[i].transpose();
  }
  RIGKIT_CHECK(cross_cov.allFinite(), ErrorCode::kInvalidInput,
               "non-finite rays");
  Eigen::JacobiSVD<Mat3> svd(cross_cov,
                             Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d& sv = svd.singularValues();
  RIGKIT_CHECK(sv[0] > 0.0 && sv[1] > 1e-12 * sv[0],
               ErrorCode::kDegenerateGeometry,
               "rays are collinear; rotation about their axis is unobservable");
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 fix = Mat3::Identity();
  if ((u * v.transpose()).determinant() < 0.0) fix(2, 2) = -1.0;
  return u * fix * v.transpose();
}

Camera CameraFromRaymap(const Raymap& raymap,
                        const CameraRecoveryOptions& options) {
  const int rows = raymap.rows();
  const int cols = raymap.cols();
  RIGKIT_CHECK(rows >= 2 && cols >= 2, ErrorCode::kInvalidInput,
               "camera recovery needs at least 2x2 pixels");
  RIGKIT_CHECK(raymap.center.allFinite(), ErrorCode::kInvalidInput,
               "raymap center is not finite");

  std::pair<double, double> focals;
  try {
    focals = FocalPairs(raymap, options.num_pairs, options.seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kRecoveryFailed) throw;
    focals = FocalAxis(raymap);
  }

  Camera camera;
  camera.fx = focals.first;
  camera.fy = focals.second;
  camera.width = cols;
  camera.height = rows;
  camera.center = raymap.center;

  std::vector<Vec3> cam_rays;
  std::vector<Vec3> world_rays;
  cam_rays.reserve(raymap.directions.size());
  world_rays.reserve(raymap.directions.size());
  for (int row = 0; row < rows; ++row) {
    const double v = CenteredV(row, rows);
    for (int col = 0; col < cols; ++col) {
      const double u = CenteredU(col, cols);
      cam_rays.push_back(Vec3(u / camera.fx, v / camera.fy, 1.0).normalized());
      world_rays.push_back(raymap.directions(row, col).normalized());
    }
  }
  camera.rotation = RotationFromRayPairs(cam_rays, world_rays);
  return camera;
}

ResidualStats RayPointConsistency(const Pointmap& pointmap,
                                  const Raymap& raymap) {
  RIGKIT_CHECK(pointmap.points.SameShape(raymap.directions) &&
                   pointmap.valid.SameShape(raymap.directions),
               ErrorCode::kShapeMismatch, "pointmap and raymap differ in shape");
  ResidualStats stats;
  double sum = 0.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < pointmap.points.size(); ++i) {
    if (!pointmap.valid[i]) continue;
    const Vec3& dir = raymap.directions[i];
    const Vec3 offset = pointmap.points[i] - raymap.center;
    const double dist = offset.cross(dir).norm() / dir.norm();
    sum += dist;
    worst = std::max(worst, dist);
    ++stats.count;
  }
  if (stats.count > 0) {
    stats.mean = sum / static_cast<double>(stats.count);
    stats.max = worst;
  }
  return stats;
}

}  // namespace rigkit
