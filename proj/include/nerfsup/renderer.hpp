// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Quadrature volume rendering along a ray. For K samples t_1 < ... < t_K with
// interval lengths delta_k and densities sigma_k (constant over each
// interval):
//
//   T_k   = exp(-sum_{j<k} sigma_j delta_j)         transmittance
//   w_k   = T_k (1 - exp(-sigma_k delta_k))         termination probability
//   C     = sum_k w_k c_k                           color
//   D     = sum_k w_k tbar_k                        expected termination distance
//
// tbar_k is the representative distance of interval k. By default it is the
// exact mean termination distance inside the interval under the same
// piecewise-constant density, which makes D exact for densities that are
// constant over each interval; the left endpoint t_k is available as well.
// The background is black and contributes depth 0.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "nerfsup/error.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

struct RaySamples {
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<double> sigma;
  std::vector<Vec3> color;

  std::size_t size() const { return t.size(); }

  void validate() const {
    const std::size_t k = t.size();
    if (k < 2) throw ConfigError("ray samples: need at least 2 samples");
    if (delta.size() != k || sigma.size() != k || color.size() != k)
      throw ConfigError("ray samples: array sizes differ");
    for (std::size_t i = 0; i < k; ++i) {
      if (!(delta[i] > 0.0)) throw DomainError("ray samples: interval lengths must be positive");
      if (i > 0 && !(t[i] > t[i - 1])) throw DomainError("ray samples: distances must increase strictly");
    }
  }
};

enum class DepthPoint {
  kIntervalMean,  // exact conditional mean inside each interval
  kLeftEndpoint,  // t_k
};

namespace detail {

// Mean termination offset inside an interval, as a fraction of its length,
// for optical thickness x: g(x) = 1/x - 1/(e^x - 1). g(0) = 1/2, g -> 1/x.
inline double interval_mean_fraction(double x) {
  if (x < 1e-2) return 0.5 - x / 12.0 + x * x * x / 720.0 - x * x * x * x * x / 30240.0;
  if (x > 50.0) return 1.0 / x;
  return 1.0 / x - 1.0 / std::expm1(x);
}

inline double interval_mean_fraction_derivative(double x) {
  if (x < 1e-2) return -1.0 / 12.0 + x * x / 240.0 - x * x * x * x / 6048.0;
  const double q = std::exp(-x);
  const double one_minus_q = -std::expm1(-x);
  return -1.0 / (x * x) + q / (one_minus_q * one_minus_q);
}

}  // namespace detail

// Transmittance, opacity and weight of every sample.
struct CompositeTerms {
  std::vector<double> transmittance;  // T_k
  std::vector<double> alpha;          // 1 - exp(-sigma_k delta_k)
  std::vector<double> weight;         // w_k
  double residual = 1.0;              // T_{K+1}: probability of passing every interval
};

inline CompositeTerms composite_terms(const RaySamples& s) {
  const std::size_t k = s.size();
  CompositeTerms out;
  out.transmittance.resize(k);
  out.alpha.resize(k);
  out.weight.resize(k);
  double optical = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = s.sigma[i] * s.delta[i];
    out.transmittance[i] = std::exp(-optical);
    out.alpha[i] = -std::expm1(-x);
    out.weight[i] = out.transmittance[i] * out.alpha[i];
    optical += x;
  }
  out.residual = std::exp(-optical);
  return out;
}

inline std::vector<double> interval_depths(const RaySamples& s, DepthPoint point = DepthPoint::kIntervalMean) {
  std::vector<double> out(s.t);
  if (point == DepthPoint::kIntervalMean)
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += s.delta[i] * detail::interval_mean_fraction(s.sigma[i] * s.delta[i]);
  return out;
}

inline Vec3 composite_color(const RaySamples& s) {
  const CompositeTerms terms = composite_terms(s);
  Vec3 c = Vec3::Zero();
  for (std::size_t i = 0; i < s.size(); ++i) c += terms.weight[i] * s.color[i];
  return c;
}

inline double composite_depth(const RaySamples& s, DepthPoint point = DepthPoint::kIntervalMean) {
  const CompositeTerms terms = composite_terms(s);
  const std::vector<double> tbar = interval_depths(s, point);
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) d += terms.weight[i] * tbar[i];
  return d;
}

inline constexpr double kEmptyRayMass = 1e-4;

// Distribution of the termination distance over the K intervals.
struct DepthDistribution {
  std::vector<double> t;             // representative distance per interval
  std::vector<double> lower;         // interval bounds [lower, upper)
  std::vector<double> upper;
  std::vector<double> w;             // raw weights
  std::vector<double> w_normalized;  // w / sum(w); empty when the ray is empty
  double mass = 0.0;                 // sum(w)
  double residual = 1.0;             // transmittance past the last interval
  bool empty = true;                 // mass <= threshold: the ray sees no surface

  double expectation() const {
    double d = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) d += w[i] * t[i];
    return d;
  }

  // Inverse-CDF draw of an interval index from the normalized weights.
  std::size_t draw(double u) const {
    if (empty) throw DomainError("depth distribution: cannot draw from an empty ray");
    double acc = 0.0;
    for (std::size_t i = 0; i < w_normalized.size(); ++i) {
      acc += w_normalized[i];
      if (u < acc && w_normalized[i] > 0.0) return i;
    }
    for (std::size_t i = w_normalized.size(); i-- > 0;)
      if (w_normalized[i] > 0.0) return i;
    return w_normalized.size() - 1;
  }
};

inline DepthDistribution depth_distribution(const RaySamples& s, double empty_threshold = kEmptyRayMass,
                                            DepthPoint point = DepthPoint::kIntervalMean) {
  const CompositeTerms terms = composite_terms(s);
  DepthDistribution out;
  out.t = interval_depths(s, point);
  out.lower = s.t;
  out.upper.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out.upper[i] = s.t[i] + s.delta[i];
  out.w = terms.weight;
  out.residual = terms.residual;
  for (double w : out.w) out.mass += w;
  out.empty = !(out.mass > empty_threshold);
  if (!out.empty) {
    out.w_normalized.resize(out.w.size());
    for (std::size_t i = 0; i < out.w.size(); ++i) out.w_normalized[i] = out.w[i] / out.mass;
  }
  return out;
}

// Per-sample derivatives of a loss given dL/dC and dL/dD.
struct SampleGradients {
  std::vector<double> d_sigma;
  std::vector<Vec3> d_color;
};

inline SampleGradients composite_gradients(const RaySamples& s, const Vec3& d_color_out, double d_depth_out,
                                           DepthPoint point = DepthPoint::kIntervalMean) {
  const std::size_t k = s.size();
  const CompositeTerms terms = composite_terms(s);
  const std::vector<double> tbar = interval_depths(s, point);
  SampleGradients g;
  g.d_sigma.assign(k, 0.0);
  g.d_color.assign(k, Vec3::Zero());
  std::vector<double> value(k);
  for (std::size_t i = 0; i < k; ++i) value[i] = d_color_out.dot(s.color[i]) + d_depth_out * tbar[i];
  // dw_k/dsigma_k = delta_k T_{k+1};  dw_k/dsigma_j = -delta_j w_k for j < k.
  double later = 0.0;  // sum_{k > i} w_k value_k
  for (std::size_t i = k; i-- > 0;) {
    const double t_next = terms.transmittance[i] - terms.weight[i];
    double d = s.delta[i] * (t_next * value[i] - later);
    if (point == DepthPoint::kIntervalMean && d_depth_out != 0.0) {
      const double x = s.sigma[i] * s.delta[i];
      d += d_depth_out * terms.weight[i] * s.delta[i] * s.delta[i] * detail::interval_mean_fraction_derivative(x);
    }
    g.d_sigma[i] = d;
    g.d_color[i] = terms.weight[i] * d_color_out;
    later += terms.weight[i] * value[i];
  }
  return g;
}

// Samples a field along a ray: uniformly spaced t_k = t_near + k * h with
// h = (t_far - t_near) / K, or one uniform jitter inside each stratum when
// `stratified`. The last interval ends at t_far. Any medium with a
// field-style sample() works, including analytic scenes.
template <typename Medium>
RaySamples march(const Medium& field, const Ray& ray, int k_samples, bool stratified, Rng* rng = nullptr) {
  if (k_samples < 2) throw ConfigError("march: need at least 2 samples per ray");
  if (stratified && rng == nullptr) throw ConfigError("march: stratified sampling needs a random stream");
  ray.validate();
  if (!std::isfinite(ray.t_far)) throw DomainError("march: ray must have a finite far bound");
  RaySamples s;
  const std::size_t k = std::size_t(k_samples);
  s.t.resize(k);
  s.delta.resize(k);
  s.sigma.resize(k);
  s.color.resize(k);
  const double h = (ray.t_far - ray.t_near) / double(k_samples);
  for (std::size_t i = 0; i < k; ++i) s.t[i] = ray.t_near + (double(i) + (stratified ? rng->uniform() : 0.0)) * h;
  for (std::size_t i = 0; i + 1 < k; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  s.delta[k - 1] = ray.t_far - s.t[k - 1];
  for (std::size_t i = 0; i < k; ++i) {
    const FieldSample fs = field.sample({ray.at(s.t[i]), ray.direction});
    s.sigma[i] = fs.sigma;
    s.color[i] = fs.color;
  }
  return s;
}

// Back-propagates per-sample gradients into the raw field parameters.
template <typename Scalar, typename Sink>
void backprop_to_field(const VoxelField<Scalar>& field, const Ray& ray, const RaySamples& s, const SampleGradients& g,
                       Sink&& sink) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g.d_sigma[i] == 0.0 && g.d_color[i].isZero()) continue;
    sink(field.sample_gradient({ray.at(s.t[i]), ray.direction}, {g.d_sigma[i], g.d_color[i]}));
  }
}

struct PixelRender {
  Vec3 color = Vec3::Zero();
  double distance = 0.0;  // expected termination distance along the unit ray
  double depth = 0.0;     // the same point's camera-frame z
  double opacity = 0.0;
};

// Renders one pixel of a posed camera against a field; rays that miss the
// field's box render black with zero depth.
template <typename Scalar>
PixelRender render_pixel(const VoxelField<Scalar>& field, const CameraIntrinsics& intr, const Pose& pose,
                         const Pixel& px, int k_samples, DepthPoint point = DepthPoint::kIntervalMean) {
  PixelRender out;
  const auto ray = clip_to_box(generate_ray(intr, pose, px), field.bbox());
  if (!ray) return out;
  const RaySamples s = march(field, *ray, k_samples, false);
  const CompositeTerms terms = composite_terms(s);
  const std::vector<double> tbar = interval_depths(s, point);
  for (std::size_t i = 0; i < s.size(); ++i) {
    out.color += terms.weight[i] * s.color[i];
    out.distance += terms.weight[i] * tbar[i];
    out.opacity += terms.weight[i];
  }
  out.depth = distance_to_depth(intr, px, out.distance);
  return out;
}

struct RenderedView {
  ImageRGB image;
  DepthMap depth;  // camera-frame z of the expected termination point
};

template <typename Scalar>
RenderedView render_view(const VoxelField<Scalar>& field, const CameraIntrinsics& intr, const Pose& pose,
                         int k_samples) {
  RenderedView out{ImageRGB(intr.width, intr.height), DepthMap(intr.width, intr.height)};
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const PixelRender r = render_pixel(field, intr, pose, Pixel{double(x), double(y)}, k_samples);
      out.image.set(x, y, r.color);
      out.depth.at(x, y) = static_cast<float>(r.depth);
    }
  return out;
}

}  // namespace nerfsup
