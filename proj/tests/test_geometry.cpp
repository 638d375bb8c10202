// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "nerfsup/geometry.hpp"
#include "nerfsup/rng.hpp"

using namespace nerfsup;

namespace {

CameraIntrinsics camera(double f = 100.0) { return {f, f, 32.0, 24.0, 64, 48}; }

Pose random_pose(Rng& rng) {
  // Random rotation from a normalized quaternion.
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  Pose p;
  p.rotation = q.toRotationMatrix();
  p.translation = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  return p;
}

}  // namespace

TEST(Geometry, PrincipalRayIsForwardAxis) {
  const Ray r = generate_ray(camera(), Pose::identity(), {32.0, 24.0});
  EXPECT_NEAR((r.direction - Vec3::UnitZ()).norm(), 0.0, 1e-15);
  EXPECT_EQ(r.origin, Vec3::Zero());
}

TEST(Geometry, OffsetPixelDirection) {
  const CameraIntrinsics in{100.0, 100.0, 150.0, 24.0, 300, 48};
  const Ray r = generate_ray(in, Pose::identity(), {250.0, 24.0});
  EXPECT_NEAR((r.direction - Vec3(1, 0, 1).normalized()).norm(), 0.0, 1e-15);
  // Unprojection oracle: the ray passes through the unprojected point.
  const Vec3 p = unproject(in, {250.0, 24.0}, 3.0);
  EXPECT_NEAR((r.at(p.norm()) - p).norm(), 0.0, 1e-12);
}

TEST(Geometry, RayDirectionsAreUnit) {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Pose pose = random_pose(rng);
    const Pixel px{rng.uniform(-0.5, 63.49), rng.uniform(-0.5, 47.49)};
    EXPECT_NEAR(generate_ray(camera(), pose, px).direction.norm(), 1.0, 1e-12);
  }
}

TEST(Geometry, OutOfBoundsPixelThrows) {
  EXPECT_THROW(generate_ray(camera(), Pose::identity(), {64.0, 0.0}), InvalidPixelError);
  EXPECT_THROW(generate_ray(camera(), Pose::identity(), {-0.6, 0.0}), InvalidPixelError);
  EXPECT_THROW(generate_ray(camera(), Pose::identity(), {NAN, 0.0}), InvalidPixelError);
  EXPECT_NO_THROW(generate_ray(camera(), Pose::identity(), {-0.5, 47.4}));
}

TEST(Geometry, IdentityReprojection) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Pose pose = random_pose(rng);
    const Pixel u{rng.uniform(0, 63), rng.uniform(0, 47)};
    const Reprojection r = reproject(u, rng.uniform(0.5, 5.0), camera(), pose, pose);
    EXPECT_TRUE(r.valid);
    EXPECT_NEAR(r.pixel.u, u.u, 1e-9);
    EXPECT_NEAR(r.pixel.v, u.v, 1e-9);
  }
}

TEST(Geometry, StereoDisparity) {
  const CameraIntrinsics in = camera(120.0);
  const double b = 0.3;
  Pose right;
  right.translation = Vec3(b, 0, 0);
  for (double z : {1.0, 2.5, 7.0}) {
    const Pixel u{40.0, 20.0};
    const Reprojection r = reproject(u, z, in, Pose::identity(), right);
    EXPECT_NEAR(u.u - r.pixel.u, in.fx * b / z, 1e-9);
    EXPECT_NEAR(r.pixel.v, u.v, 1e-12);
    // Explicit unproject / transform / project oracle.
    const Vec3 p = unproject(in, u, z) - right.translation;
    const Pixel expect = *project(in, p);
    EXPECT_NEAR(r.pixel.u, expect.u, 1e-12);
    EXPECT_NEAR(r.target_depth, z, 1e-12);
  }
}

TEST(Geometry, PointBehindTargetIsInvalid) {
  Pose behind;
  behind.translation = Vec3(0, 0, 5);  // target camera in front of the point, facing away
  const Reprojection r = reproject({32, 24}, 2.0, camera(), Pose::identity(), behind);
  EXPECT_FALSE(r.valid);
  EXPECT_LT(r.target_depth, 0.0);
}

TEST(Geometry, NonPositiveDepthThrows) {
  EXPECT_THROW(reproject({1, 1}, 0.0, camera(), Pose::identity(), Pose::identity()), DomainError);
  EXPECT_THROW(reproject({1, 1}, -1.0, camera(), Pose::identity(), Pose::identity()), DomainError);
}

TEST(Geometry, UnprojectProjectRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const Pixel u{rng.uniform(-0.5, 63.4), rng.uniform(-0.5, 47.4)};
    const Pixel back = *project(camera(), unproject(camera(), u, rng.uniform(0.1, 100.0)));
    EXPECT_LT(pixel_distance(u, back), 1e-6);
  }
}

TEST(Geometry, ReprojectThereAndBack) {
  Rng rng(4);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const Pixel u{rng.uniform(0, 63), rng.uniform(0, 47)};
    const Reprojection fwd = reproject(u, rng.uniform(0.5, 4.0), camera(), a, b);
    if (!(fwd.target_depth > 0.0)) continue;
    const Reprojection back = reproject(fwd.pixel, fwd.target_depth, camera(), b, a);
    EXPECT_LT(pixel_distance(back.pixel, u), 1e-6);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Geometry, PoseAlgebra) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose ab_c = (a * b) * c, a_bc = a * (b * c);
    EXPECT_LT((ab_c.rotation - a_bc.rotation).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ab_c.translation - a_bc.translation).cwiseAbs().maxCoeff(), 1e-12);
    const Pose id = a.inverse() * a;
    EXPECT_LT((id.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(id.translation.norm(), 1e-9);
  }
}

TEST(Geometry, MatrixRoundTripAndValidation) {
  Rng rng(6);
  const Pose p = random_pose(rng);
  const Pose q = Pose::from_matrix(p.to_matrix(), 1e-6);
  EXPECT_EQ(p.rotation, q.rotation);
  EXPECT_EQ(p.translation, q.translation);

  auto m = p.to_matrix();
  m[0] *= 1.01;
  EXPECT_THROW(Pose::from_matrix(m, 1e-6), DomainError);
  m = p.to_matrix();
  m[12] = 1.0;
  EXPECT_THROW(Pose::from_matrix(m, 1e-6), DomainError);
  // A reflection is orthogonal but not a rotation.
  std::array<double, 16> mirror{-1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
  EXPECT_THROW(Pose::from_matrix(mirror, 1e-6), DomainError);
}

TEST(Geometry, LookAtConvention) {
  // Camera on +z looking at the origin with +y up: world +y appears towards
  // smaller v, world +x appears to the right.
  const Pose p = Pose::look_at(Vec3(0, 0, 3), Vec3::Zero());
  const CameraIntrinsics in = camera();
  const Pixel up = *project_world(in, p, Vec3(0, 0.5, 0));
  const Pixel side = *project_world(in, p, Vec3(0.5, 0, 0));
  EXPECT_LT(up.v, in.cy);
  EXPECT_GT(side.u, in.cx);
  EXPECT_TRUE(p.is_valid(1e-12));
}

TEST(Geometry, DepthDistanceConversion) {
  const CameraIntrinsics in = camera();
  const Pixel px{10.0, 40.0};
  const double z = 2.7;
  const double t = depth_to_distance(in, px, z);
  EXPECT_NEAR(unproject(in, px, z).norm(), t, 1e-12);
  EXPECT_NEAR(distance_to_depth(in, px, t), z, 1e-12);
}

TEST(Geometry, ClipToBox) {
  const Aabb box{Vec3::Constant(-1), Vec3::Constant(1)};
  Ray r;
  r.origin = Vec3(0, 0, -3);
  const auto c = clip_to_box(r, box);
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->t_near, 2.0);
  EXPECT_DOUBLE_EQ(c->t_far, 4.0);
  r.origin = Vec3(2, 0, -3);
  EXPECT_FALSE(clip_to_box(r, box));
}
