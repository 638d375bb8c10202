// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Synthetic scenes with analytic ground truth: piecewise-constant density
// primitives (boxes and spheres) carrying procedural solid textures, exact
// ray integration by closed form per constant-density segment, analytic
// correspondences, and baking into a voxel field.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nerfsup/error.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/renderer.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

// Sum of sinusoids per channel around a base color, clamped to [0.02, 0.98].
struct Texture {
  struct Wave {
    int channel = 0;
    Vec3 frequency = Vec3::Zero();
    double phase = 0.0;
  };
  Vec3 base = Vec3::Constant(0.5);
  double amplitude = 0.0;
  std::vector<Wave> waves;

  Vec3 at(const Vec3& p) const {
    Vec3 c = base;
    for (const Wave& w : waves) c[w.channel] += amplitude * std::sin(w.frequency.dot(p) + w.phase);
    for (int ch = 0; ch < 3; ++ch) c[ch] = std::clamp(c[ch], 0.02, 0.98);
    return c;
  }

  static Texture uniform(const Vec3& rgb) { return Texture{rgb, 0.0, {}}; }

  // `waves_per_channel` random plane waves with spatial frequency magnitude in
  // [0.5, 1] * max_frequency (radians per world unit).
  static Texture random(Rng& rng, const Vec3& base, double amplitude, int waves_per_channel, double max_frequency) {
    Texture t{base, amplitude, {}};
    for (int ch = 0; ch < 3; ++ch)
      for (int i = 0; i < waves_per_channel; ++i) {
        Vec3 dir(rng.normal(), rng.normal(), rng.normal());
        dir.normalize();
        const double mag = max_frequency * rng.uniform(0.5, 1.0);
        t.waves.push_back({ch, dir * mag, rng.uniform(0.0, 6.283185307179586)});
      }
    return t;
  }
};

struct Primitive {
  enum class Kind { kBox, kSphere };
  Kind kind = Kind::kBox;
  std::string name;
  Vec3 lo = Vec3::Zero();  // box
  Vec3 hi = Vec3::Zero();
  Vec3 center = Vec3::Zero();  // sphere
  double radius = 0.0;
  double density = 0.0;
  Texture texture;

  static Primitive box(std::string name, const Vec3& lo, const Vec3& hi, double density, Texture tex) {
    Primitive p;
    p.kind = Kind::kBox;
    p.name = std::move(name);
    p.lo = lo;
    p.hi = hi;
    p.density = density;
    p.texture = std::move(tex);
    return p;
  }
  static Primitive sphere(std::string name, const Vec3& center, double radius, double density, Texture tex) {
    Primitive p;
    p.kind = Kind::kSphere;
    p.name = std::move(name);
    p.center = center;
    p.radius = radius;
    p.density = density;
    p.texture = std::move(tex);
    return p;
  }

  bool contains(const Vec3& x) const {
    if (kind == Kind::kBox) return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
    return (x - center).squaredNorm() <= radius * radius;
  }

  // Distance from x to the primitive (0 inside).
  double distance(const Vec3& x) const {
    if (kind == Kind::kBox) {
      const Vec3 d = (lo - x).cwiseMax(x - hi).cwiseMax(Vec3::Zero());
      return d.norm();
    }
    return std::max(0.0, (x - center).norm() - radius);
  }

  // Parametric interval where the line origin + t * dir is inside.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const {
    if (kind == Kind::kBox) return Aabb{lo, hi}.intersect(origin, dir);
    const Vec3 oc = origin - center;
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    return std::pair{-b - s, -b + s};
  }

  Aabb bounds() const {
    if (kind == Kind::kBox) return {lo, hi};
    return {center - Vec3::Constant(radius), center + Vec3::Constant(radius)};
  }
};

// One constant-density stretch of a ray.
struct RaySegment {
  double t0 = 0.0;
  double t1 = 0.0;
  double sigma = 0.0;
  double transmittance_in = 1.0;
  double mass = 0.0;    // probability of terminating inside
  double t_mean = 0.0;  // mean termination distance inside
  int primitive = -1;   // densest primitive covering the segment
};

struct RayIntegral {
  Vec3 color = Vec3::Zero();
  double distance = 0.0;  // sum over segments of mass * t_mean
  double opacity = 0.0;
  std::vector<RaySegment> segments;

  // Probability that the ray terminates with distance in [a, b].
  double mass_between(double a, double b) const {
    double m = 0.0;
    for (const RaySegment& s : segments) {
      const double lo = std::max(a, s.t0);
      const double hi = std::min(b, s.t1);
      if (!(hi > lo)) continue;
      m += s.transmittance_in * (std::exp(-s.sigma * (lo - s.t0)) - std::exp(-s.sigma * (hi - s.t0)));
    }
    return m;
  }
};

class SyntheticScene {
 public:
  SyntheticScene() = default;
  SyntheticScene(std::vector<Primitive> primitives, Aabb bbox) : primitives_(std::move(primitives)), bbox_(bbox) {
    validate();
  }

  const std::vector<Primitive>& primitives() const { return primitives_; }
  const Aabb& bbox() const { return bbox_; }

  void validate() const {
    bbox_.validate();
    for (const Primitive& p : primitives_) {
      if (!(p.density >= 0.0)) throw DomainError("scene: primitive '" + p.name + "' has negative density");
      const Aabb b = p.bounds();
      if (!bbox_.contains(b.lo) || !bbox_.contains(b.hi))
        throw DomainError("scene: primitive '" + p.name + "' leaves the scene bbox");
      if (p.kind == Primitive::Kind::kBox && !((p.hi - p.lo).array() > 0.0).all())
        throw DomainError("scene: box '" + p.name + "' has empty extent");
      if (p.kind == Primitive::Kind::kSphere && !(p.radius > 0.0))
        throw DomainError("scene: sphere '" + p.name + "' needs a positive radius");
    }
  }

  double density(const Vec3& x) const {
    double s = 0.0;
    for (const Primitive& p : primitives_)
      if (p.contains(x)) s += p.density;
    return s;
  }

  // Density-weighted texture of the primitives containing x; outside every
  // primitive, the texture of the nearest one.
  Vec3 color(const Vec3& x) const {
    Vec3 c = Vec3::Zero();
    double s = 0.0;
    for (const Primitive& p : primitives_)
      if (p.contains(x) && p.density > 0.0) {
        c += p.density * p.texture.at(x);
        s += p.density;
      }
    if (s > 0.0) return c / s;
    if (primitives_.empty()) return Vec3::Zero();
    const Primitive* nearest = &primitives_.front();
    double best = nearest->distance(x);
    for (const Primitive& p : primitives_)
      if (const double d = p.distance(x); d < best) {
        best = d;
        nearest = &p;
      }
    return nearest->texture.at(x);
  }

  // Point query with the same contract as a field lookup, so the quadrature
  // renderer can march analytic scenes directly.
  FieldSample sample(const FieldQuery& q) const {
    FieldSample out;
    out.sigma = density(q.position);
    out.color = out.sigma > 0.0 ? color(q.position) : Vec3::Zero();
    return out;
  }

  // Exact transmittance and termination mass per constant-density segment;
  // color is integrated over sub-intervals no longer than `color_step`.
  RayIntegral integrate(const Ray& ray, double color_step = 2e-3) const {
    RayIntegral out;
    std::vector<std::pair<double, double>> spans(primitives_.size(), {0.0, -1.0});
    std::vector<double> cuts{ray.t_near, ray.t_far};
    for (std::size_t i = 0; i < primitives_.size(); ++i) {
      if (primitives_[i].density <= 0.0) continue;
      const auto hit = primitives_[i].intersect(ray.origin, ray.direction);
      if (!hit) continue;
      const double a = std::max(hit->first, ray.t_near);
      const double b = std::min(hit->second, ray.t_far);
      if (!(b > a)) continue;
      spans[i] = {a, b};
      cuts.push_back(a);
      cuts.push_back(b);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double transmittance = 1.0;
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double t0 = cuts[c];
      const double t1 = cuts[c + 1];
      if (t0 < ray.t_near || t1 > ray.t_far) continue;
      double sigma = 0.0;
      int densest = -1;
      for (std::size_t i = 0; i < primitives_.size(); ++i) {
        if (spans[i].first <= t0 && t1 <= spans[i].second) {
          sigma += primitives_[i].density;
          if (densest < 0 || primitives_[i].density > primitives_[std::size_t(densest)].density) densest = int(i);
        }
      }
      if (sigma <= 0.0) continue;
      const double length = t1 - t0;
      RaySegment seg;
      seg.t0 = t0;
      seg.t1 = t1;
      seg.sigma = sigma;
      seg.transmittance_in = transmittance;
      seg.mass = transmittance * -std::expm1(-sigma * length);
      seg.t_mean = t0 + length * detail::interval_mean_fraction(sigma * length);
      seg.primitive = densest;
      // Color: exact exponential weights over sub-intervals, texture taken at
      // each sub-interval's mean termination point.
      const int pieces = std::clamp(int(std::ceil(length / color_step)), 1, 4096);
      const double h = length / pieces;
      const double piece_fraction = detail::interval_mean_fraction(sigma * h);
      double t_piece = transmittance;
      for (int k = 0; k < pieces; ++k) {
        const double a = t0 + k * h;
        const double w = t_piece * -std::expm1(-sigma * h);
        out.color += w * color(ray.at(a + h * piece_fraction));
        t_piece *= std::exp(-sigma * h);
      }
      out.distance += seg.mass * seg.t_mean;
      out.opacity += seg.mass;
      transmittance *= std::exp(-sigma * length);
      out.segments.push_back(seg);
    }
    return out;
  }

 private:
  std::vector<Primitive> primitives_;
  Aabb bbox_;
};

// ---------------------------------------------------------------------------
// Analytic correspondences.

struct GroundTruthOptions {
  double min_mode_mass = 0.1;       // a segment must absorb this much to count as a surface
  double visibility_window = 0.05;  // world units around the point on the other ray
  double visibility_mass = 0.1;     // termination mass required inside that window
};

struct SurfaceMode {
  double t_entry = 0.0;  // where the ray enters the surface
  double t_mean = 0.0;   // mean termination distance inside it
  double mass = 0.0;
  Vec3 point = Vec3::Zero();  // at t_mean
  Pixel target;               // projection into the target view
  bool in_target_image = false;
  bool visible = false;  // the target ray through `target` terminates near `point`
};

struct GroundTruth {
  bool has_surface = false;
  double distance = 0.0;  // entry distance of the first surface along the source ray
  double depth = 0.0;     // camera-frame z of that entry point
  std::vector<SurfaceMode> modes;

  // Targets that are genuine correspondences: visible in the target view and
  // inside its image.
  std::vector<Pixel> valid_targets() const {
    std::vector<Pixel> out;
    for (const SurfaceMode& m : modes)
      if (m.visible && m.in_target_image) out.push_back(m.target);
    return out;
  }
  bool has_valid_target() const { return !valid_targets().empty(); }
  // First valid target along the source ray.
  std::optional<Pixel> primary_target() const {
    for (const SurfaceMode& m : modes)
      if (m.visible && m.in_target_image) return m.target;
    return std::nullopt;
  }
  // Distance to the nearest genuine correspondence; infinite when none.
  double error(const Pixel& predicted) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Pixel& p : valid_targets()) best = std::min(best, pixel_distance(p, predicted));
    return best;
  }
  // Distance to the reprojection of the first surface, visible or not; what a
  // correct depth implies. Infinite without a surface or outside the image.
  double reprojection_error(const Pixel& predicted) const {
    if (modes.empty() || !modes.front().in_target_image) return std::numeric_limits<double>::infinity();
    return pixel_distance(modes.front().target, predicted);
  }
};

inline Ray scene_ray(const SyntheticScene& scene, const CameraIntrinsics& intr, const Pose& pose, const Pixel& px) {
  Ray ray = generate_ray(intr, pose, px);
  if (const auto clipped = clip_to_box(ray, scene.bbox())) return *clipped;
  ray.t_near = 0.0;
  ray.t_far = 1e-9;
  return ray;
}

inline GroundTruth analytic_ground_truth(const SyntheticScene& scene, const CameraIntrinsics& intr_s,
                                         const Pose& pose_s, const CameraIntrinsics& intr_t, const Pose& pose_t,
                                         const Pixel& u_s, const GroundTruthOptions& opt = {}) {
  const Ray ray = scene_ray(scene, intr_s, pose_s, u_s);
  const RayIntegral integral = scene.integrate(ray);
  GroundTruth gt;
  for (const RaySegment& seg : integral.segments) {
    if (seg.mass < opt.min_mode_mass) continue;
    SurfaceMode mode;
    mode.t_entry = seg.t0;
    mode.t_mean = seg.t_mean;
    mode.mass = seg.mass;
    mode.point = ray.at(seg.t_mean);
    if (const auto px = project_world(intr_t, pose_t, mode.point)) {
      mode.target = *px;
      mode.in_target_image = intr_t.contains(*px);
      if (mode.in_target_image) {
        const Ray back = scene_ray(scene, intr_t, pose_t, *px);
        const double t_point = (mode.point - back.origin).norm();
        const double m = scene.integrate(back).mass_between(t_point - opt.visibility_window,
                                                             t_point + opt.visibility_window);
        mode.visible = m >= opt.visibility_mass;
      }
    } else {
      mode.target = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    gt.modes.push_back(mode);
  }
  if (!gt.modes.empty()) {
    gt.has_surface = true;
    gt.distance = gt.modes.front().t_entry;
    gt.depth = distance_to_depth(intr_s, u_s, gt.distance);
  }
  return gt;
}

// ---------------------------------------------------------------------------
// Baking.

inline constexpr double kEmptyDensityRaw = -20.0;
inline constexpr double kColorClamp = 1e-6;

// Raw density for empty voxels: the mirror image of the densest primitive's
// raw value, so that trilinear interpolation between an occupied and an empty
// center crosses zero halfway and surfaces stay where they are. Never above
// kEmptyDensityRaw.
inline double empty_density_raw(const SyntheticScene& scene) {
  double raw = -kEmptyDensityRaw;
  for (const Primitive& p : scene.primitives())
    if (p.density > 0.0) raw = std::max(raw, softplus_inverse(p.density));
  return -raw;
}

// Voxelizes the scene by sampling density and color at voxel centers and
// inverting the activations, so the field reproduces the analytic values at
// voxel centers (up to storage precision).
template <typename Scalar = float>
VoxelField<Scalar> bake(const SyntheticScene& scene, GridResolution res,
                        ColorModel model = ColorModel::kConstant, std::optional<Aabb> box = std::nullopt) {
  if (res.nx < 1 || res.ny < 1 || res.nz < 1) throw ConfigError("bake: resolution must be positive");
  VoxelField<Scalar> field(res, box.value_or(scene.bbox()), model);
  const std::size_t stride = field.color_per_voxel();
  const int nc = coefficients_per_channel(model);
  const double dc_scale = model == ColorModel::kConstant ? 1.0 : 1.0 / kShC0;
  const double empty_raw = empty_density_raw(scene);
  for (int iz = 0; iz < res.nz; ++iz)
    for (int iy = 0; iy < res.ny; ++iy)
      for (int ix = 0; ix < res.nx; ++ix) {
        const Vec3 p = field.voxel_center(ix, iy, iz);
        const std::size_t v = field.index(ix, iy, iz);
        const double sigma = scene.density(p);
        field.density_raw()[v] = static_cast<Scalar>(sigma > 0.0 ? softplus_inverse(sigma) : empty_raw);
        const Vec3 c = scene.color(p);
        for (int ch = 0; ch < 3; ++ch)
          field.color_raw()[v * stride + std::size_t(ch * nc)] =
              static_cast<Scalar>(dc_scale * logit(std::clamp(c[ch], kColorClamp, 1.0 - kColorClamp)));
      }
  return field;
}

// ---------------------------------------------------------------------------
// Oracle-grade rendering of analytic scenes.

struct AnalyticView {
  ImageRGB image;
  DepthMap depth;  // camera-frame z of the first surface entry, 0 where none
  Mask mask;       // opacity >= 0.5
};

inline AnalyticView render_analytic(const SyntheticScene& scene, const CameraIntrinsics& intr, const Pose& pose,
                                    const GroundTruthOptions& opt = {}) {
  AnalyticView out{ImageRGB(intr.width, intr.height), DepthMap(intr.width, intr.height),
                   Mask(intr.width, intr.height)};
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const Pixel px{double(x), double(y)};
      const RayIntegral r = scene.integrate(scene_ray(scene, intr, pose, px));
      out.image.set(x, y, r.color);
      out.mask.set(x, y, r.opacity >= 0.5);
      for (const RaySegment& s : r.segments)
        if (s.mass >= opt.min_mode_mass) {
          out.depth.at(x, y) = static_cast<float>(distance_to_depth(intr, px, s.t0));
          break;
        }
    }
  return out;
}

}  // namespace nerfsup
