// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "nerfsup/renderer.hpp"
#include "nerfsup/scene.hpp"

using namespace nerfsup;

namespace {

const Aabb kBox{Vec3::Constant(-1.0), Vec3::Constant(1.0)};

SyntheticScene slab_scene(double density = 400.0) {
  return SyntheticScene({Primitive::box("slab", Vec3(-0.5, -0.5, -0.2), Vec3(0.5, 0.5, 0.2), density,
                                        Texture::uniform(Vec3(0.7, 0.3, 0.2)))},
                        kBox);
}

// Depth error of a baked field rendered from one view, over pixels that see
// the slab: the mean over all of them, and the worst pixel whose 3x3
// neighbourhood sees it too (silhouette pixels are partly covered and render
// a fraction of the depth).
struct BakeError {
  double mean = 0.0;
  double worst_interior = 0.0;
};

BakeError bake_depth_error(int res) {
  const SyntheticScene scene = slab_scene();
  const auto field = bake(scene, {res, res, res});
  const CameraIntrinsics in{60, 60, 15.5, 15.5, 32, 32};
  const Pose pose = Pose::look_at(Vec3(0.6, 0.9, 3.0), Vec3::Zero());
  const AnalyticView truth = render_analytic(scene, in, pose);
  BakeError out;
  int n = 0;
  for (int y = 1; y < 31; ++y)
    for (int x = 1; x < 31; ++x) {
      const float d = truth.depth.at(x, y);
      if (!(d > 0.0f)) continue;
      const double e = std::abs(render_pixel(field, in, pose, {double(x), double(y)}, 400).depth - d);
      out.mean += e;
      ++n;
      bool interior = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) interior &= truth.depth.at(x + dx, y + dy) > 0.0f;
      if (interior) out.worst_interior = std::max(out.worst_interior, e);
    }
  out.mean /= n;
  return out;
}

}  // namespace

TEST(Scene, SlabFrontFaceDepthIsExact) {
  const SyntheticScene scene({Primitive::box("slab", Vec3(-1, -1, 2), Vec3(1, 1, 2.5), 400.0,
                                             Texture::uniform(Vec3::Constant(0.5)))},
                             Aabb{Vec3(-2, -2, 0.5), Vec3(2, 2, 4)});
  const CameraIntrinsics in{50, 50, 15.5, 15.5, 32, 32};
  const GroundTruth gt = analytic_ground_truth(scene, in, Pose::identity(), in, Pose::identity(), {15.5, 15.5});
  ASSERT_TRUE(gt.has_surface);
  EXPECT_DOUBLE_EQ(gt.depth, 2.0);
  EXPECT_DOUBLE_EQ(gt.distance, 2.0);
  ASSERT_TRUE(gt.primary_target());
  EXPECT_NEAR(pixel_distance(*gt.primary_target(), {15.5, 15.5}), 0.0, 1e-9);
}

TEST(Scene, SphereDepthMatchesQuadraticAndFineMarching) {
  const SyntheticScene scene({Primitive::sphere("ball", Vec3(0.1, -0.05, 0.0), 0.6, 1e3,
                                                Texture::uniform(Vec3::Constant(0.5)))},
                             kBox);
  const CameraIntrinsics in{40, 40, 15.5, 15.5, 32, 32};
  const Pose pose = Pose::look_at(Vec3(0, 0, 3), Vec3::Zero());
  for (const Pixel px : {Pixel{15, 15}, Pixel{10, 18}, Pixel{20, 12}}) {
    const Ray ray = generate_ray(in, pose, px);
    const Vec3 oc = ray.origin - Vec3(0.1, -0.05, 0.0);
    const double b = oc.dot(ray.direction);
    const double c = oc.squaredNorm() - 0.36;
    const double t_hit = -b - std::sqrt(b * b - c);
    const GroundTruth gt = analytic_ground_truth(scene, in, pose, in, pose, px);
    ASSERT_TRUE(gt.has_surface);
    EXPECT_NEAR(gt.distance, t_hit, 1e-12);
    // Fine marching: the termination distribution's median sits at the
    // surface, a fraction of a millimetre behind the entry point.
    const RaySamples s = march(scene, scene_ray(scene, in, pose, px), 10000, false);
    const DepthDistribution d = depth_distribution(s, kEmptyRayMass, DepthPoint::kLeftEndpoint);
    double acc = 0.0;
    std::size_t k = 0;
    while (acc < 0.5 * d.mass) acc += d.w[k++];
    EXPECT_NEAR(d.t[k - 1], t_hit, 1e-3);
  }
}

TEST(Scene, MissingRayHasNoSurface) {
  const CameraIntrinsics in{40, 40, 15.5, 15.5, 32, 32};
  const Pose away = Pose::look_at(Vec3(0, 0, 3), Vec3(0, 0, 6));
  const GroundTruth gt = analytic_ground_truth(slab_scene(), in, away, in, away, {15, 15});
  EXPECT_FALSE(gt.has_surface);
  EXPECT_FALSE(gt.has_valid_target());
  EXPECT_TRUE(std::isinf(gt.error({0, 0})));
}

TEST(Scene, IntegralConservesMass) {
  const SyntheticScene scene({Primitive::box("a", Vec3(-0.5, -0.5, 0.3), Vec3(0.5, 0.5, 0.4), 3.0,
                                             Texture::uniform(Vec3(1, 0, 0))),
                              Primitive::box("b", Vec3(-0.5, -0.5, -0.4), Vec3(0.5, 0.5, -0.1), 10.0,
                                             Texture::uniform(Vec3(0, 1, 0)))},
                             kBox);
  Ray r;
  r.origin = Vec3(0, 0, 2);
  r.direction = Vec3(0, 0, -1);
  r.t_near = 1.0;
  r.t_far = 3.0;
  const RayIntegral in = scene.integrate(r);
  const double m1 = 1 - std::exp(-0.3), m2 = std::exp(-0.3) * (1 - std::exp(-3.0));
  // Textures clamp channels to [0.02, 0.98].
  EXPECT_NEAR(in.opacity, m1 + m2, 1e-12);
  EXPECT_NEAR(in.mass_between(0, 10), in.opacity, 1e-12);
  EXPECT_NEAR(in.color.x(), 0.98 * m1 + 0.02 * m2, 1e-9);
  EXPECT_NEAR(in.color.y(), 0.02 * m1 + 0.98 * m2, 1e-9);
  // Agrees with fine quadrature through the scene's sample().
  const RaySamples s = march(scene, r, 20000, false);
  EXPECT_NEAR(composite_depth(s), in.distance, 1e-3);
}

TEST(Scene, BakeConstantDensity) {
  const SyntheticScene scene({Primitive::box("fog", kBox.lo, kBox.hi, 3.0,
                                             Texture::uniform(Vec3(0.25, 0.5, 0.75)))},
                             kBox);
  const auto f = bake<double>(scene, {5, 6, 7});
  for (double v : f.density_raw()) EXPECT_NEAR(v, softplus_inverse(3.0), 1e-12);
  const FieldSample s = f.sample({Vec3(0.3, -0.2, 0.9), Vec3::UnitZ()});
  EXPECT_NEAR(s.sigma, 3.0, 1e-9);
  EXPECT_NEAR(s.color.z(), 0.75, 1e-9);
}

TEST(Scene, BakedSlabDepthWithinOneVoxelAwayFromSilhouettes) {
  EXPECT_LT(bake_depth_error(64).worst_interior, 2.0 / 64);
}

TEST(Scene, BakeConvergesWithResolution) {
  const double e32 = bake_depth_error(32).mean, e64 = bake_depth_error(64).mean, e128 = bake_depth_error(128).mean;
  EXPECT_LT(e64, e32);
  EXPECT_LT(e128, e64);
}

TEST(Scene, EmptyDensityMirrorsDensestPrimitive) {
  EXPECT_NEAR(empty_density_raw(slab_scene(400.0)), -400.0, 1e-9);
  EXPECT_EQ(empty_density_raw(slab_scene(2.0)), kEmptyDensityRaw);
}

TEST(Scene, AnalyticViewMaskAndDepth) {
  const CameraIntrinsics in{40, 40, 15.5, 15.5, 32, 32};
  const Pose pose = Pose::look_at(Vec3(0, 0, 3), Vec3::Zero());
  const AnalyticView v = render_analytic(slab_scene(), in, pose);
  EXPECT_TRUE(v.mask.at(15, 15));
  EXPECT_FALSE(v.mask.at(0, 0));
  EXPECT_NEAR(v.depth.at(15, 15), 2.8, 1e-3);
  EXPECT_EQ(v.depth.at(0, 0), 0.0f);
  EXPECT_NEAR(v.image.rgb(15, 15).x(), 0.7, 1e-3);
}

TEST(Scene, OccludedTargetStillHasAReprojection) {
  // A blocker between the target camera and the point the source sees.
  const SyntheticScene scene({Primitive::box("wall", Vec3(-1, -1, 2), Vec3(1, 1, 2.1), 400.0,
                                             Texture::uniform(Vec3::Constant(0.5))),
                              Primitive::box("blocker", Vec3(0.3, -1, 1), Vec3(1, 1, 1.1), 400.0,
                                             Texture::uniform(Vec3::Constant(0.5)))},
                             Aabb{Vec3(-2, -2, -1), Vec3(2, 2, 3)});
  const CameraIntrinsics in{50, 50, 15.5, 15.5, 32, 32};
  const Pose target = Pose::look_at(Vec3(1, 0, 0), Vec3(0, 0, 2));
  const GroundTruth gt = analytic_ground_truth(scene, in, Pose::identity(), in, target, {15.5, 15.5});
  ASSERT_TRUE(gt.has_surface);
  EXPECT_FALSE(gt.modes.front().visible);
  EXPECT_TRUE(std::isinf(gt.error({15.5, 15.5})));
  EXPECT_LT(gt.reprojection_error({15.5, 15.5}), 0.05);

  // Without the blocker both measures agree.
  const SyntheticScene open({scene.primitives().front()}, scene.bbox());
  const GroundTruth seen = analytic_ground_truth(open, in, Pose::identity(), in, target, {15.5, 15.5});
  EXPECT_EQ(seen.error({17, 15}), seen.reprojection_error({17, 15}));
}
