#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "oracles.h"
#include "rigkit/geometry.h"

namespace rigkit {
namespace {

Camera RandomCamera(std::mt19937_64& rng, int size = 64) {
  std::uniform_real_distribution<double> focal(50.0, 1000.0);
  const Pose pose = oracle::RandomPose(rng, 10.0);
  return Camera::FromPose(focal(rng), focal(rng), size, size, pose);
}

Camera IdentityCamera(double f, int w, int h) {
  return Camera::FromPose(f, f, w, h, Pose{});
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Pose p = oracle::RandomPose(rng, 5.0);
    const Pose id = p.Compose(p.Inverse());
    EXPECT_LT((id.rotation - Mat3::Identity()).norm(), 1e-12);
    EXPECT_LT(id.center.norm(), 1e-12);
    const Vec3 x(0.3, -1.0, 2.0);
    EXPECT_LT((p.Inverse().Apply(p.Apply(x)) - x).norm(), 1e-12);
  }
}

TEST(RaymapFromCamera, OpticalAxisOfIdentityCamera) {
  const Raymap r = RaymapFromCamera(IdentityCamera(100.0, 3, 3), 3, 3);
  EXPECT_EQ(r.directions(1, 1), Vec3(0, 0, 1));
  EXPECT_EQ(r.center, Vec3::Zero());
  EXPECT_EQ(r.frame_tag, FrameTag::kPose);
}

TEST(RaymapFromCamera, FortyFiveDegreesAtFocalOffset) {
  // 201 columns: col 200 sits at u = 100.
  const Raymap r = RaymapFromCamera(IdentityCamera(100.0, 201, 1), 1, 201);
  const Vec3 expected(std::sqrt(0.5), 0.0, std::sqrt(0.5));
  EXPECT_LT((r.directions(0, 200) - expected).norm(), 1e-15);
}

TEST(RaymapFromCamera, MatchesPinholeModelAndAnglesAreAnalytic) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Camera cam = RandomCamera(rng, 24);
    const Raymap r = RaymapFromCamera(cam, 24, 24);
    for (int row = 0; row < 24; ++row) {
      for (int col = 0; col < 24; ++col) {
        EXPECT_NEAR(r.directions(row, col).norm(), 1.0, 1e-12);
        EXPECT_LT((r.directions(row, col) - oracle::PinholeRay(cam, row, col)).norm(),
                  1e-12);
      }
    }
    // Angle between two pixels from K alone (rotation-free).
    std::uniform_int_distribution<int> px(0, 23);
    for (int k = 0; k < 200; ++k) {
      const int r0 = px(rng), c0 = px(rng), r1 = px(rng), c1 = px(rng);
      const Vec3 a(CenteredU(c0, 24) / cam.fx, CenteredV(r0, 24) / cam.fy, 1.0);
      const Vec3 b(CenteredU(c1, 24) / cam.fx, CenteredV(r1, 24) / cam.fy, 1.0);
      const double analytic = std::atan2(a.cross(b).norm(), a.dot(b));
      const Vec3& da = r.directions(r0, c0);
      const Vec3& db = r.directions(r1, c1);
      const double measured = std::atan2(da.cross(db).norm(), da.dot(db));
      EXPECT_NEAR(measured, analytic, 1e-9);
    }
  }
}

TEST(RaymapFromCamera, RejectsNonFiniteCamera) {
  Camera cam = IdentityCamera(100.0, 4, 4);
  cam.center.x() = std::nan("");
  try {
    RaymapFromCamera(cam, 4, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidInput);
  }
  cam = IdentityCamera(-1.0, 4, 4);
  EXPECT_THROW(RaymapFromCamera(cam, 4, 4), Error);
}

TEST(Raymap, Pack6RoundTripIsLossless) {
  std::mt19937_64 rng(3);
  const Raymap r = RaymapFromCamera(RandomCamera(rng, 8), 6, 8);
  const std::vector<double> packed = r.Pack6();
  ASSERT_EQ(packed.size(), 6u * 6 * 8);
  const Raymap back = Raymap::Unpack6(packed, 6, 8);
  EXPECT_EQ(back.center, r.center);
  EXPECT_EQ(back.directions.data(), r.directions.data());
}

TEST(Raymap, UnpackRejectsDisagreeingCenters) {
  const Raymap r = RaymapFromCamera(IdentityCamera(10.0, 2, 2), 2, 2);
  std::vector<double> packed = r.Pack6();
  packed[6 * 3 + 4] += 0.5;
  EXPECT_THROW(Raymap::Unpack6(packed, 2, 2), Error);
  EXPECT_THROW(Raymap::Unpack6(packed, 3, 2), Error);
}

TEST(FocalAxis, ExactOnGeneratedRaymaps) {
  const Raymap r = RaymapFromCamera(
      Camera::FromPose(250.0, 300.0, 64, 64, Pose{AxisAngle(Vec3(1, 2, 3), 0.7),
                                                 Vec3(1, 2, 3)}),
      64, 64);
  const auto [fx, fy] = FocalAxis(r);
  EXPECT_NEAR(fx / 250.0, 1.0, 1e-9);
  EXPECT_NEAR(fy / 300.0, 1.0, 1e-9);
}

TEST(FocalAxis, FortyFiveDegreeCase) {
  // Width 201 has an exact center column and a sample near u = 100.
  const Raymap r = RaymapFromCamera(IdentityCamera(100.0, 201, 201), 201, 201);
  const auto [fx, fy] = FocalAxis(r);
  EXPECT_NEAR(fx, 100.0, 1e-9);
  EXPECT_NEAR(fy, 100.0, 1e-9);
}

TEST(FocalAxis, NoisyDirectionsWithinOnePercent) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int trial = 0; trial < 20; ++trial) {
    const Camera cam = Camera::FromPose(120.0, 160.0, 64, 64,
                                        oracle::RandomPose(rng, 1.0));
    Raymap r = RaymapFromCamera(cam, 64, 64);
    for (Vec3& d : r.directions) {
      d = (d + Vec3(noise(rng), noise(rng), noise(rng))).normalized();
    }
    const auto [fx, fy] = FocalAxis(r);
    EXPECT_NEAR(fx / cam.fx, 1.0, 0.01);
    EXPECT_NEAR(fy / cam.fy, 1.0, 0.01);
  }
}

TEST(FocalAxis, CoincidentRaysAreDegenerate) {
  Raymap r = RaymapFromCamera(IdentityCamera(100.0, 8, 8), 8, 8);
  for (Vec3& d : r.directions) d = Vec3::UnitZ();
  try {
    FocalAxis(r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(FocalPairs, IsotropicAndAnisotropicRoundTrip) {
  for (const auto& [fx, fy] : {std::pair{200.0, 200.0}, std::pair{150.0, 450.0}}) {
    const Raymap r = RaymapFromCamera(
        Camera::FromPose(fx, fy, 64, 48, Pose{AxisAngle(Vec3(0, 1, 0), 0.3),
                                             Vec3::Zero()}),
        48, 64);
    const auto [rx, ry] = FocalPairs(r, 256, 7);
    EXPECT_NEAR(rx / fx, 1.0, 1e-6);
    EXPECT_NEAR(ry / fy, 1.0, 1e-6);
  }
}

TEST(FocalPairs, AgreesWithFocalAxis) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Raymap r = RaymapFromCamera(RandomCamera(rng), 64, 64);
    const auto [ax, ay] = FocalAxis(r);
    const auto [px, py] = FocalPairs(r, 128, trial);
    EXPECT_NEAR(px / ax, 1.0, 1e-6);
    EXPECT_NEAR(py / ay, 1.0, 1e-6);
  }
}

TEST(FocalPairs, PairsOnTheUAxisLeaveFyUnconstrained) {
  const Raymap r = RaymapFromCamera(IdentityCamera(100.0, 9, 9), 9, 9);
  // Row 4 is v = 0.
  const PixelPair pairs[] = {{4, 0, 4, 8}, {4, 1, 4, 6}};
  try {
    FocalPairs(r, pairs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRecoveryFailed);
  }
}

TEST(RotationFromRayPairs, IdentityAndAxisPermutation) {
  const std::vector<Vec3> rays = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  EXPECT_LT((RotationFromRayPairs(rays, rays) - Mat3::Identity()).norm(), 1e-15);

  const std::vector<Vec3> cam = {Vec3(0, 0, 1), Vec3(1, 0, 0)};
  const std::vector<Vec3> world = {Vec3(1, 0, 0), Vec3(0, 0, -1)};
  const Mat3 r = RotationFromRayPairs(cam, world);
  const Mat3 yaw90 = AxisAngle(Vec3::UnitY(), std::numbers::pi / 2);
  EXPECT_LT(oracle::AngleRad(r, yaw90), 1e-12);
}

TEST(RotationFromRayPairs, CollinearRaysAreDegenerate) {
  const std::vector<Vec3> cam = {Vec3::UnitZ(), Vec3::UnitZ(), -Vec3::UnitZ()};
  try {
    RotationFromRayPairs(cam, cam);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(RotationFromRayPairs, NoisyRaysStayProperAndAccurate) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise(0.0, 1e-3);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 truth = oracle::RandomRotation(rng);
    std::vector<Vec3> cam, world;
    for (int i = 0; i < 100; ++i) {
      const Vec3 c = Vec3(noise(rng), noise(rng), noise(rng)).normalized();
      cam.push_back(c.allFinite() ? c : Vec3::UnitZ());
      world.push_back((truth * cam.back() +
                       Vec3(noise(rng), noise(rng), noise(rng)))
                          .normalized());
    }
    const Mat3 r = RotationFromRayPairs(cam, world);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-9);
    EXPECT_LT(oracle::AngleRad(r, truth) * 180.0 / std::numbers::pi, 0.1);
  }
}

TEST(CameraFromRaymap, RoundTripOverRandomCameras) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Camera cam = RandomCamera(rng);
    const Camera got = CameraFromRaymap(RaymapFromCamera(cam, 64, 64));
    EXPECT_NEAR(got.fx / cam.fx, 1.0, 1e-6);
    EXPECT_NEAR(got.fy / cam.fy, 1.0, 1e-6);
    EXPECT_LT(oracle::AngleRad(got.rotation, cam.rotation), 1e-6);
    EXPECT_EQ(got.center, cam.center);
  }
}

TEST(CameraFromRaymap, IdentityCamera) {
  const Camera got =
      CameraFromRaymap(RaymapFromCamera(IdentityCamera(80.0, 32, 32), 32, 32));
  EXPECT_NEAR(got.fx, 80.0, 1e-9);
  EXPECT_NEAR(got.fy, 80.0, 1e-9);
  EXPECT_LT((got.rotation - Mat3::Identity()).norm(), 1e-12);
  EXPECT_EQ(got.center, Vec3::Zero());
}

TEST(CameraFromRaymap, NoisyRaymapRotationWithinOneDegree) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_real_distribution<double> focal(50.0, 300.0);
    const Camera cam = Camera::FromPose(focal(rng), focal(rng), 64, 64,
                                        oracle::RandomPose(rng, 3.0));
    Raymap r = RaymapFromCamera(cam, 64, 64);
    for (Vec3& d : r.directions) {
      d = (d + Vec3(noise(rng), noise(rng), noise(rng))).normalized();
    }
    const Camera got = CameraFromRaymap(r);
    EXPECT_LT(oracle::AngleRad(got.rotation, cam.rotation) * 180.0 / std::numbers::pi,
              1.0);
    EXPECT_LT((got.rotation.transpose() * got.rotation - Mat3::Identity())
                  .cwiseAbs()
                  .maxCoeff(),
              1e-9);
  }
}

TEST(RotationAngle, AccurateForTinyAngles) {
  for (double angle : {1e-12, 1e-9, 1e-6, 0.1, 3.0}) {
    const Mat3 r = AxisAngle(Vec3(1, -2, 0.5), angle);
    EXPECT_NEAR(RotationAngle(Mat3::Identity(), r) / angle, 1.0, 1e-6);
  }
}

TEST(ProjectToRotation, ReturnsProperRotation) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    Mat3 m;
    for (int k = 0; k < 9; ++k) m.data()[k] = n(rng);
    const Mat3 r = ProjectToRotation(m);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
  const Mat3 q = oracle::RandomRotation(rng);
  EXPECT_LT((ProjectToRotation(q) - q).norm(), 1e-12);
}

TEST(RayPointConsistency, MarchedPointsHaveZeroResidual) {
  std::mt19937_64 rng(10);
  const Camera cam = RandomCamera(rng, 16);
  const Raymap r = RaymapFromCamera(cam, 16, 16);
  Pointmap pm{Grid<Vec3>(16, 16), Grid<std::uint8_t>(16, 16, 1)};
  std::uniform_real_distribution<double> depth(0.5, 50.0);
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    pm.points[i] = r.center + depth(rng) * r.directions[i];
  }
  const ResidualStats s = RayPointConsistency(pm, r);
  EXPECT_EQ(s.count, 256u);
  EXPECT_LT(*s.mean, 1e-12);
  EXPECT_LT(*s.max, 1e-12);
}

TEST(RayPointConsistency, PerpendicularOffsetAndEmptyMask) {
  const Raymap r = RaymapFromCamera(IdentityCamera(10.0, 3, 3), 3, 3);
  Pointmap pm{Grid<Vec3>(3, 3), Grid<std::uint8_t>(3, 3, 0)};
  EXPECT_FALSE(RayPointConsistency(pm, r).mean.has_value());
  EXPECT_EQ(RayPointConsistency(pm, r).count, 0u);
  pm.valid(1, 1) = 1;
  pm.points(1, 1) = Vec3(0.5, 0.0, 4.0);  // axis ray is +z
  const ResidualStats s = RayPointConsistency(pm, r);
  EXPECT_NEAR(*s.max, 0.5, 1e-15);
}

TEST(ConfidenceMap, AtLeastOneEverywhere) {
  Grid<double> raw(2, 3);
  const double values[] = {-800.0, -20.0, 0.0, 1.0, 30.0, -1e300};
  for (int i = 0; i < 6; ++i) raw[i] = values[i];
  const ConfidenceMap c = ConfidenceMap::FromRaw(raw);
  for (double v : c.values) EXPECT_GE(v, 1.0);
  EXPECT_DOUBLE_EQ(c.values[3], 1.0 + std::exp(1.0));
}

}  // namespace
}  // namespace rigkit
