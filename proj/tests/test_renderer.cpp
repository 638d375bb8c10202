// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nerfsup/renderer.hpp"
#include "nerfsup/rng.hpp"

using namespace nerfsup;

namespace {

// Piecewise-constant medium along +z: slabs [a, b) with density and color.
struct Slab {
  double a, b, sigma;
  Vec3 color;
};

struct SlabMedium {
  std::vector<Slab> slabs;
  FieldSample sample(const FieldQuery& q) const {
    // Sample positions are sums of rounded steps; snap them onto the grid the
    // slab boundaries were placed on.
    const double z = q.position.z() + 1e-9;
    for (const Slab& s : slabs)
      if (z >= s.a && z < s.b) return {s.sigma, s.color};
    return {};
  }
};

// Closed-form color and expected termination distance for slabs along a ray
// starting before the first slab.
std::pair<Vec3, double> slab_oracle(const std::vector<Slab>& slabs) {
  Vec3 c = Vec3::Zero();
  double d = 0.0, optical = 0.0;
  for (const Slab& s : slabs) {
    const double x = s.sigma * (s.b - s.a);
    const double T = std::exp(-optical);
    const double absorbed = -std::expm1(-x);
    c += T * absorbed * s.color;
    d += T * (s.a * absorbed + (1.0 - std::exp(-x) * (1.0 + x)) / s.sigma);
    optical += x;
  }
  return {c, d};
}

Ray z_ray(double t_near, double t_far) {
  Ray r;
  r.t_near = t_near;
  r.t_far = t_far;
  return r;
}

RaySamples random_samples(Rng& rng, int k, double max_sigma = 30.0) {
  RaySamples s;
  double t = rng.uniform(0.5, 1.5);
  for (int i = 0; i < k; ++i) {
    s.t.push_back(t);
    const double d = rng.uniform(0.01, 0.2);
    s.delta.push_back(d);
    t += d;
    s.sigma.push_back(rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, max_sigma));
    s.color.push_back(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
  }
  return s;
}

}  // namespace

TEST(Renderer, UnstratifiedSamplesAreUniform) {
  const RaySamples s = march(SlabMedium{}, z_ray(1.0, 5.0), 8, false);
  for (int i = 0; i < 8; ++i) {
    EXPECT_DOUBLE_EQ(s.t[i], 1.0 + 0.5 * i);
    EXPECT_DOUBLE_EQ(s.delta[i], 0.5);
    EXPECT_EQ(s.sigma[i], 0.0);
  }
}

TEST(Renderer, StratifiedSamplesStayInStrataAndReproduce) {
  Rng a(3, {1}), b(3, {1});
  const RaySamples s1 = march(SlabMedium{}, z_ray(1.0, 5.0), 16, true, &a);
  const RaySamples s2 = march(SlabMedium{}, z_ray(1.0, 5.0), 16, true, &b);
  EXPECT_EQ(s1.t, s2.t);
  for (int i = 0; i < 16; ++i) {
    EXPECT_GE(s1.t[i], 1.0 + 0.25 * i);
    EXPECT_LT(s1.t[i], 1.0 + 0.25 * (i + 1));
  }
  EXPECT_NO_THROW(s1.validate());
  EXPECT_DOUBLE_EQ(s1.t.back() + s1.delta.back(), 5.0);
}

TEST(Renderer, MarchRejectsBadConfig) {
  EXPECT_THROW(march(SlabMedium{}, z_ray(1.0, 5.0), 1, false), ConfigError);
  EXPECT_THROW(march(SlabMedium{}, z_ray(1.0, 5.0), 4, true, nullptr), ConfigError);
}

TEST(Renderer, EmptyRayIsBlackAtDepthZero) {
  const RaySamples s = march(SlabMedium{}, z_ray(1.0, 5.0), 32, false);
  EXPECT_EQ(composite_color(s), Vec3::Zero());
  EXPECT_EQ(composite_depth(s), 0.0);
  const DepthDistribution d = depth_distribution(s);
  EXPECT_TRUE(d.empty);
  EXPECT_EQ(d.residual, 1.0);
  EXPECT_THROW(d.draw(0.5), DomainError);
}

TEST(Renderer, SingleOpaqueInterval) {
  RaySamples s;
  s.t = {1.0, 2.0, 3.0};
  s.delta = {1.0, 1.0, 1.0};
  s.sigma = {0.0, 25.0, 0.0};
  s.color = {Vec3::Ones(), Vec3(0.2, 0.4, 0.9), Vec3::Ones()};
  EXPECT_LT((composite_color(s) - Vec3(0.2, 0.4, 0.9)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Renderer, SlabsMatchClosedForm) {
  const std::vector<Slab> slabs{{1.5, 2.25, 3.0, Vec3(0.9, 0.1, 0.1)},
                                {3.0, 3.5, 50.0, Vec3(0.1, 0.8, 0.2)},
                                {4.0, 4.75, 400.0, Vec3(0.3, 0.3, 0.9)}};
  const auto [c_ref, d_ref] = slab_oracle(slabs);
  for (int k : {64, 192, 640, 4096}) {
    const RaySamples s = march(SlabMedium{slabs}, z_ray(1.0, 5.0), k, false);
    EXPECT_LT((composite_color(s) - c_ref).cwiseAbs().maxCoeff(), 1e-9) << k;
    EXPECT_NEAR(composite_depth(s), d_ref, 1e-9) << k;
  }
}

TEST(Renderer, OpaqueFrontFaceDepth) {
  const std::vector<Slab> slabs{{2.0, 2.5, 1e4, Vec3::Ones()}};
  for (int k : {48, 192}) {
    const RaySamples s = march(SlabMedium{slabs}, z_ray(1.0, 5.0), k, false);
    EXPECT_NEAR(composite_depth(s), 2.0, 1e-3 + 4.0 / k);
    const DepthDistribution d = depth_distribution(s);
    double best = 0.0;
    for (double w : d.w_normalized) best = std::max(best, w);
    EXPECT_GT(best, 0.99);
  }
}

TEST(Renderer, LeftEndpointDepthConvergesUnderRefinement) {
  const std::vector<Slab> slabs{{2.0, 2.5, 8.0, Vec3::Ones()}};
  const double ref = slab_oracle(slabs).second;
  double last = INFINITY;
  for (int k : {16, 32, 64, 128, 256}) {
    const RaySamples s = march(SlabMedium{slabs}, z_ray(1.0, 5.0), k, false);
    const double err = std::abs(composite_depth(s, DepthPoint::kLeftEndpoint) - ref);
    EXPECT_LT(err, last);
    last = err;
  }
}

TEST(Renderer, TwoHalfSurfacesAverageBetweenThem) {
  // Each surface absorbs half of the total termination mass.
  RaySamples s;
  s.t = {1.0, 1.01, 3.0, 3.01};
  s.delta = {0.01, 1.99, 0.01, 1.99};
  s.sigma = {std::log(2.0) / 0.01, 0.0, 1e5, 0.0};
  s.color.assign(4, Vec3::Ones());
  const DepthDistribution d = depth_distribution(s, kEmptyRayMass, DepthPoint::kLeftEndpoint);
  EXPECT_NEAR(d.w_normalized[0], 0.5, 1e-9);
  EXPECT_NEAR(d.w_normalized[2], 0.5, 1e-9);
  EXPECT_NEAR(composite_depth(s, DepthPoint::kLeftEndpoint), 2.0, 1e-9);
  const double mean = composite_depth(s);
  EXPECT_GT(mean, 1.0);
  EXPECT_LT(mean, 3.0);
  EXPECT_NEAR(mean, 2.0, 0.01);
}

TEST(Renderer, ProbabilityIsConserved) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const RaySamples s = random_samples(rng, 2 + int(rng.uniform_index(60)));
    const CompositeTerms t = composite_terms(s);
    double sum = 0.0;
    EXPECT_EQ(t.transmittance[0], 1.0);
    for (std::size_t k = 0; k < s.size(); ++k) {
      sum += t.weight[k];
      EXPECT_GE(t.transmittance[k], 0.0);
      EXPECT_LE(t.transmittance[k], 1.0);
      if (k > 0) {
        EXPECT_LE(t.transmittance[k], t.transmittance[k - 1]);
      }
    }
    EXPECT_NEAR(sum + t.residual, 1.0, 1e-6);
    const DepthDistribution d = depth_distribution(s);
    if (!d.empty) {
      double n = 0.0;
      for (double w : d.w_normalized) n += w;
      EXPECT_NEAR(n, 1.0, 1e-12);
    }
  }
}

TEST(Renderer, DepthEqualsDistributionExpectation) {
  Rng rng(6);
  for (int i = 0; i < 300; ++i) {
    const RaySamples s = random_samples(rng, 2 + int(rng.uniform_index(100)), 200.0);
    for (DepthPoint p : {DepthPoint::kIntervalMean, DepthPoint::kLeftEndpoint})
      EXPECT_NEAR(composite_depth(s, p), depth_distribution(s, kEmptyRayMass, p).expectation(), 1e-9);
  }
}

TEST(Renderer, IntervalMeanFraction) {
  EXPECT_NEAR(detail::interval_mean_fraction(0.0), 0.5, 1e-15);
  for (double x : {1e-4, 5e-3, 0.0101, 0.3, 2.0, 20.0, 49.0, 60.0, 500.0}) {
    const double exact = 1.0 / x - 1.0 / std::expm1(x);
    EXPECT_NEAR(detail::interval_mean_fraction(x), exact, 1e-12);
    const double h = 1e-6 * std::max(1.0, x);
    const double fd =
        (detail::interval_mean_fraction(x + h) - detail::interval_mean_fraction(x - h)) / (2 * h);
    EXPECT_NEAR(detail::interval_mean_fraction_derivative(x), fd, 1e-6);
  }
}

TEST(Renderer, ZeroUpstreamGivesZeroGradients) {
  Rng rng(7);
  const RaySamples s = random_samples(rng, 10);
  const SampleGradients g = composite_gradients(s, Vec3::Zero(), 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(g.d_sigma[i], 0.0);
    EXPECT_EQ(g.d_color[i], Vec3::Zero());
  }
}

TEST(Renderer, TwoSampleGradientMatchesHandExpansion) {
  // C = (1-e1) c1 + e1 (1-e2) c2 with e_i = exp(-s_i d_i); left-endpoint depth
  // D = (1-e1) t1 + e1 (1-e2) t2.
  RaySamples s;
  s.t = {1.0, 1.3};
  s.delta = {0.3, 0.5};
  s.sigma = {1.7, 2.4};
  s.color = {Vec3(0.2, 0.5, 0.7), Vec3(0.9, 0.1, 0.4)};
  const Vec3 gc(0.3, -1.1, 0.6);
  const double gd = 0.8;
  const double e1 = std::exp(-s.sigma[0] * s.delta[0]), e2 = std::exp(-s.sigma[1] * s.delta[1]);
  const double v1 = gc.dot(s.color[0]) + gd * s.t[0];
  const double v2 = gc.dot(s.color[1]) + gd * s.t[1];
  const double d_s1 = s.delta[0] * e1 * v1 - s.delta[0] * e1 * (1 - e2) * v2;
  const double d_s2 = e1 * s.delta[1] * e2 * v2;
  const SampleGradients g = composite_gradients(s, gc, gd, DepthPoint::kLeftEndpoint);
  EXPECT_NEAR(g.d_sigma[0], d_s1, 1e-14);
  EXPECT_NEAR(g.d_sigma[1], d_s2, 1e-14);
  EXPECT_LT((g.d_color[0] - (1 - e1) * gc).norm(), 1e-14);
  EXPECT_LT((g.d_color[1] - e1 * (1 - e2) * gc).norm(), 1e-14);
}

TEST(Renderer, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (DepthPoint point : {DepthPoint::kIntervalMean, DepthPoint::kLeftEndpoint}) {
    for (int trial = 0; trial < 20; ++trial) {
      RaySamples s = random_samples(rng, 2 + int(rng.uniform_index(7)), 10.0);
      const Vec3 gc(rng.normal(), rng.normal(), rng.normal());
      const double gd = rng.normal();
      auto loss = [&](const RaySamples& x) { return gc.dot(composite_color(x)) + gd * composite_depth(x, point); };
      const SampleGradients g = composite_gradients(s, gc, gd, point);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double h = 1e-5 * std::max(1.0, s.sigma[i]);
        const double s0 = s.sigma[i];
        s.sigma[i] = s0 + h;
        const double lp = loss(s);
        s.sigma[i] = s0 - h;
        const double lm = loss(s);
        s.sigma[i] = s0;
        const double fd = (lp - lm) / (2 * h);
        EXPECT_LE(std::abs(fd - g.d_sigma[i]), std::max(1e-7, 1e-4 * std::abs(fd))) << i;
        for (int ch = 0; ch < 3; ++ch) {
          const double c0 = s.color[i][ch];
          s.color[i][ch] = c0 + 1e-5;
          const double cp = loss(s);
          s.color[i][ch] = c0 - 1e-5;
          const double cm = loss(s);
          s.color[i][ch] = c0;
          EXPECT_LE(std::abs((cp - cm) / 2e-5 - g.d_color[i][ch]), 1e-8);
        }
      }
    }
  }
}

TEST(Renderer, PixelMissingTheFieldIsBlack) {
  const VoxelField<float> f({4, 4, 4}, Aabb{Vec3::Constant(-1), Vec3::Constant(1)}, ColorModel::kConstant, 5.0, 2.0);
  const CameraIntrinsics in{50, 50, 15.5, 15.5, 32, 32};
  Pose away = Pose::look_at(Vec3(0, 0, 4), Vec3(0, 0, 8));
  const PixelRender r = render_pixel(f, in, away, {15, 15}, 32);
  EXPECT_EQ(r.color, Vec3::Zero());
  EXPECT_EQ(r.depth, 0.0);
  const PixelRender hit = render_pixel(f, in, Pose::look_at(Vec3(0, 0, 4), Vec3::Zero()), {15, 15}, 64);
  EXPECT_GT(hit.opacity, 0.99);
  EXPECT_NEAR(hit.color.x(), sigmoid(2.0) * hit.opacity, 1e-6);
}
