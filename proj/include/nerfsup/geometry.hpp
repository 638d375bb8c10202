// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Pinhole cameras, rigid camera-to-world poses, camera rays and the
// unproject / transform / project chain used to carry a pixel from one view
// into another.
//
// Conventions:
//  * camera frame: +x right, +y down, +z forward (the viewing direction);
//  * integer pixel coordinates address pixel centers, so an image of width W
//    covers u in [-0.5, W - 0.5);
//  * a Pose maps camera coordinates to world coordinates;
//  * "depth" is the camera-frame z coordinate, "distance" (t) is measured
//    along a unit-length ray.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "nerfsup/error.hpp"

namespace nerfsup {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Pixel {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline double pixel_distance(const Pixel& a, const Pixel& b) { return std::hypot(a.u - b.u, a.v - b.v); }

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw DomainError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw DomainError("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw DomainError("intrinsics: principal point outside the image");
  }

  bool contains(const Pixel& px) const {
    return std::isfinite(px.u) && std::isfinite(px.v) && px.u >= -0.5 && px.u < width - 0.5 &&
           px.v >= -0.5 && px.v < height - 0.5;
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

// Rigid transform, camera-to-world.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& d) const { return rotation * d; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  // (*this) after `rhs`: x -> this(rhs(x)).
  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  const Vec3& center() const { return translation; }

  double orthonormality_error() const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return std::max(ortho, std::abs(rotation.determinant() - 1.0));
  }

  bool is_valid(double tol = 1e-9) const {
    return rotation.allFinite() && translation.allFinite() && orthonormality_error() <= tol;
  }

  // Row-major 4x4 matrix; the last row must be (0, 0, 0, 1).
  static Pose from_matrix(const std::array<double, 16>& m, double tol = 1e-9) {
    Pose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[r * 4 + c];
      p.translation[r] = m[r * 4 + 3];
    }
    if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0)
      throw DomainError("pose: last matrix row must be (0, 0, 0, 1)");
    if (!p.is_valid(tol)) {
      std::ostringstream msg;
      msg << "pose: rotation block is not orthonormal with determinant +1 (error "
          << p.orthonormality_error() << ", tolerance " << tol << ")";
      throw DomainError(msg.str());
    }
    return p;
  }

  std::array<double, 16> to_matrix() const {
    std::array<double, 16> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation(r, c);
      m[r * 4 + 3] = translation[r];
    }
    m[15] = 1.0;
    return m;
  }

  // Camera at `eye` looking at `target`; `up` is the world up direction, which
  // ends up pointing towards decreasing image v.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
    const Vec3 forward = (target - eye).normalized();
    const Vec3 right = forward.cross(up).normalized();
    const Vec3 down = forward.cross(right);
    Pose p;
    p.rotation.col(0) = right;
    p.rotation.col(1) = down;
    p.rotation.col(2) = forward;
    p.translation = eye;
    return p;
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double t_near = 0.0;
  double t_far = std::numeric_limits<double>::infinity();

  Vec3 at(double t) const { return origin + t * direction; }

  void validate() const {
    if (std::abs(direction.norm() - 1.0) > 1e-9) throw DomainError("ray: direction must have unit norm");
    if (!(t_near >= 0.0 && t_near < t_far)) throw DomainError("ray: require 0 <= t_near < t_far");
  }
};

// Axis-aligned box.
struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  Vec3 extent() const { return hi - lo; }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  void validate() const {
    if (!((hi - lo).array() > 0.0).all()) throw DomainError("bbox must have positive extent on all axes");
  }

  // Parametric overlap of the line origin + t * dir with the box, or nothing.
  std::optional<std::pair<double, double>> intersect(const Vec3& origin, const Vec3& dir) const {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
      if (dir[a] == 0.0) {
        if (origin[a] < lo[a] || origin[a] > hi[a]) return std::nullopt;
        continue;
      }
      double ta = (lo[a] - origin[a]) / dir[a];
      double tb = (hi[a] - origin[a]) / dir[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (t0 > t1) return std::nullopt;
    return std::pair{t0, t1};
  }

  friend bool operator==(const Aabb& a, const Aabb& b) { return a.lo == b.lo && a.hi == b.hi; }
};

// Restricts a ray to the part that overlaps `box`; nothing when the ray misses
// the box or the overlap is empty.
inline std::optional<Ray> clip_to_box(const Ray& ray, const Aabb& box) {
  const auto hit = box.intersect(ray.origin, ray.direction);
  if (!hit) return std::nullopt;
  Ray out = ray;
  out.t_near = std::max(ray.t_near, hit->first);
  out.t_far = std::min(ray.t_far, hit->second);
  if (!(out.t_near < out.t_far)) return std::nullopt;
  return out;
}

// Camera-frame direction (z = 1) of the line of sight through `px`.
inline Vec3 pixel_to_camera(const CameraIntrinsics& intr, const Pixel& px) {
  return {(px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0};
}

// Camera-frame point at depth z seen through px.
inline Vec3 unproject(const CameraIntrinsics& intr, const Pixel& px, double depth) {
  return pixel_to_camera(intr, px) * depth;
}

// Perspective projection of a camera-frame point; nothing when the point is
// not strictly in front of the camera.
inline std::optional<Pixel> project(const CameraIntrinsics& intr, const Vec3& p_cam) {
  if (!(p_cam.z() > 0.0)) return std::nullopt;
  return Pixel{intr.fx * p_cam.x() / p_cam.z() + intr.cx, intr.fy * p_cam.y() / p_cam.z() + intr.cy};
}

// Camera-frame depth of the point a unit ray through px reaches at distance t.
inline double distance_to_depth(const CameraIntrinsics& intr, const Pixel& px, double t) {
  return t / pixel_to_camera(intr, px).norm();
}

inline double depth_to_distance(const CameraIntrinsics& intr, const Pixel& px, double depth) {
  return depth * pixel_to_camera(intr, px).norm();
}

// Ray from the camera center through px, in world coordinates.
inline Ray generate_ray(const CameraIntrinsics& intr, const Pose& pose, const Pixel& px, double t_near = 0.0,
                        double t_far = std::numeric_limits<double>::infinity()) {
  if (!intr.contains(px)) {
    std::ostringstream msg;
    msg << "generate_ray: pixel (" << px.u << ", " << px.v << ") outside " << intr.width << "x" << intr.height
        << " image";
    throw InvalidPixelError(msg.str());
  }
  Ray ray;
  ray.origin = pose.center();
  ray.direction = pose.rotate(pixel_to_camera(intr, px).normalized());
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

// Projects a world point into a posed camera; nothing when it is behind the
// camera. Bounds are not checked.
inline std::optional<Pixel> project_world(const CameraIntrinsics& intr, const Pose& pose, const Vec3& p_world) {
  return project(intr, pose.inverse().apply(p_world));
}

struct Reprojection {
  Pixel pixel;
  double target_depth = 0.0;  // z of the point in the target camera frame
  bool valid = false;         // in front of the target camera and inside its image
};

// Carries source pixel u_s at source depth `depth` into the target view:
// u_t = project(K_t, G_t^-1 * G_s * unproject(K_s, u_s, depth)).
// The result keeps sub-pixel precision.
inline Reprojection reproject(const Pixel& u_s, double depth, const CameraIntrinsics& intr_s, const Pose& pose_s,
                              const CameraIntrinsics& intr_t, const Pose& pose_t) {
  if (!(depth > 0.0) || !std::isfinite(depth)) throw DomainError("reproject: depth must be positive and finite");
  const Vec3 p_world = pose_s.apply(unproject(intr_s, u_s, depth));
  const Vec3 p_t = pose_t.inverse().apply(p_world);
  Reprojection out;
  out.target_depth = p_t.z();
  if (!(p_t.z() > 0.0)) {
    out.pixel = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    return out;
  }
  out.pixel = {intr_t.fx * p_t.x() / p_t.z() + intr_t.cx, intr_t.fy * p_t.y() / p_t.z() + intr_t.cy};
  out.valid = intr_t.contains(out.pixel);
  return out;
}

inline Reprojection reproject(const Pixel& u_s, double depth, const CameraIntrinsics& intr, const Pose& pose_s,
                              const Pose& pose_t) {
  return reproject(u_s, depth, intr, pose_s, intr, pose_t);
}

}  // namespace nerfsup
