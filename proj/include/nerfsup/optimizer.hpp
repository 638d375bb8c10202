// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Fitting a voxel radiance field to posed images. The objective is
//   L = L_photo + lambda * L_depth
// with L_photo the mean squared color error over a batch of rays and L_depth
// the mean squared error between rendered and supervised camera-frame depth
// over a batch of sparse depth points. Updates are gradient descent with
// optional heavy-ball momentum.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nerfsup/error.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/renderer.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

struct SparseDepthPoint {
  std::string image_id;
  Pixel pixel;
  Vec3 keypoint_world = Vec3::Zero();
  double depth_gt = 0.0;  // camera-frame z
};

// Builds a depth point from a world keypoint seen at `pixel`; the depth is the
// keypoint's z in the camera frame.
inline SparseDepthPoint depth_point_from_keypoint(std::string image_id, const Pixel& pixel, const Vec3& keypoint,
                                                  const Pose& pose) {
  SparseDepthPoint p{std::move(image_id), pixel, keypoint, pose.inverse().apply(keypoint).z()};
  if (!(p.depth_gt > 0.0)) throw DomainError("depth point: keypoint is behind camera of '" + p.image_id + "'");
  return p;
}

// Depth-only form: the keypoint is recovered by unprojecting the pixel.
inline SparseDepthPoint depth_point_from_depth(std::string image_id, const Pixel& pixel, double depth,
                                               const CameraIntrinsics& intr, const Pose& pose) {
  if (!(depth > 0.0)) throw DomainError("depth point: depth must be positive in '" + image_id + "'");
  return {std::move(image_id), pixel, pose.apply(unproject(intr, pixel, depth)), depth};
}

struct PosedImage {
  std::string id;
  CameraIntrinsics intr;
  Pose pose;
  ImageRGB image;
  std::optional<Mask> mask;
  std::vector<SparseDepthPoint> sparse_depth;

  void validate() const {
    intr.validate();
    if (image.width != intr.width || image.height != intr.height)
      throw DatasetError("image '" + id + "': size does not match intrinsics");
    if (mask && (mask->width != image.width || mask->height != image.height))
      throw DatasetError("image '" + id + "': mask size does not match image");
    if (!pose.is_valid(1e-6)) throw DatasetError("image '" + id + "': pose rotation is not orthonormal");
    for (const SparseDepthPoint& p : sparse_depth) {
      if (!(p.depth_gt > 0.0)) throw DatasetError("image '" + id + "': non-positive sparse depth");
      if (!intr.contains(p.pixel)) throw DatasetError("image '" + id + "': sparse depth pixel out of bounds");
    }
  }
  bool in_mask(const Pixel& px) const { return intr.contains(px) && (!mask || mask->contains(px)); }
};

struct TrainConfig {
  int iterations = 1500;
  int batch_size = 512;       // rays per step for the photometric term
  int depth_batch_size = 64;  // sparse depth points per step
  double learning_rate = 800.0;
  double momentum = 0.9;
  double depth_loss_weight = 1.0;  // lambda
  int k_samples = 96;
  bool stratified = true;
  std::uint64_t seed = 0;
  int threads = 1;
  GridResolution resolution{48, 48, 48};
  Aabb bbox{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  ColorModel color_model = ColorModel::kConstant;
  double init_density_raw = -3.0;
  double init_color_raw = 0.0;

  void validate() const {
    if (iterations < 0) throw ConfigError("train: iterations must be non-negative");
    if (batch_size < 1 || depth_batch_size < 1) throw ConfigError("train: batch sizes must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
    if (!(depth_loss_weight >= 0.0)) throw ConfigError("train: depth loss weight must be non-negative");
    if (k_samples < 2) throw ConfigError("train: need at least 2 samples per ray");
    if (resolution.nx < 1 || resolution.ny < 1 || resolution.nz < 1)
      throw ConfigError("train: resolution must be positive");
    bbox.validate();
  }
};

// One photometric observation: a camera ray and the color it should render.
struct ColorObservation {
  Ray ray;
  Vec3 color = Vec3::Zero();
};

// One depth observation. `z_per_distance` converts distance along the unit ray
// into camera-frame z (the z component of the unit camera-frame direction).
struct DepthObservation {
  Ray ray;
  double depth_gt = 0.0;
  double z_per_distance = 1.0;
};

inline ColorObservation color_observation(const CameraIntrinsics& intr, const Pose& pose, const Pixel& px,
                                          const Vec3& color) {
  return {generate_ray(intr, pose, px), color};
}

inline DepthObservation depth_observation(const CameraIntrinsics& intr, const Pose& pose, const Pixel& px,
                                          double depth_gt) {
  return {generate_ray(intr, pose, px), depth_gt, pixel_to_camera(intr, px).normalized().z()};
}

// How rays are sampled when evaluating a loss. Each observation i gets its own
// jitter stream keyed by (seed, stream_key, step, i).
struct LossOptions {
  int k_samples = 96;
  bool stratified = false;
  std::uint64_t seed = 0;
  std::uint64_t stream_key = stream::kTrainStrata;
  std::uint64_t step = 0;
  int threads = 1;
};

struct LossResult {
  double loss = 0.0;
  FieldGradient gradient;
};

namespace detail {

// Gradient of one ray, merged per voxel so that rays can be processed in
// parallel and reduced in a fixed order.
struct RayGradient {
  std::vector<std::size_t> voxel;
  std::vector<double> values;  // stride 1 + color_per_voxel
};

inline RayGradient compact(std::vector<VoxelGradient>& entries, std::size_t color_per_voxel) {
  std::stable_sort(entries.begin(), entries.end(),
                   [](const VoxelGradient& a, const VoxelGradient& b) { return a.voxel < b.voxel; });
  RayGradient out;
  const std::size_t stride = 1 + color_per_voxel;
  for (const VoxelGradient& e : entries) {
    if (out.voxel.empty() || out.voxel.back() != e.voxel) {
      out.voxel.push_back(e.voxel);
      out.values.resize(out.values.size() + stride, 0.0);
    }
    double* v = out.values.data() + out.values.size() - stride;
    v[0] += e.d_density;
    for (std::size_t j = 0; j < color_per_voxel; ++j) v[1 + j] += e.d_color[j];
  }
  return out;
}

inline void add_ray_gradient(FieldGradient& g, const RayGradient& r, std::size_t color_per_voxel) {
  const std::size_t stride = 1 + color_per_voxel;
  for (std::size_t i = 0; i < r.voxel.size(); ++i) {
    const double* v = r.values.data() + i * stride;
    g.density[r.voxel[i]] += v[0];
    double* c = g.color.data() + r.voxel[i] * color_per_voxel;
    for (std::size_t j = 0; j < color_per_voxel; ++j) c[j] += v[1 + j];
  }
}

struct RayLoss {
  double loss = 0.0;
  RayGradient gradient;
};

// Renders one ray and back-propagates `upstream(color, distance)` which
// returns (loss, dL/dcolor, dL/ddistance).
template <typename Scalar, typename Upstream>
RayLoss ray_loss(const VoxelField<Scalar>& field, const Ray& camera_ray, const LossOptions& opt, std::uint64_t index,
                 Upstream&& upstream) {
  RayLoss out;
  const auto ray = clip_to_box(camera_ray, field.bbox());
  if (!ray) {
    out.loss = std::get<0>(upstream(Vec3::Zero().eval(), 0.0));
    return out;
  }
  Rng rng(opt.seed, {opt.stream_key, opt.step, index});
  const RaySamples s = march(field, *ray, opt.k_samples, opt.stratified, &rng);
  const Vec3 color = composite_color(s);
  const double distance = composite_depth(s);
  const auto [loss, d_color, d_distance] = upstream(color, distance);
  out.loss = loss;
  const SampleGradients g = composite_gradients(s, d_color, d_distance);
  std::vector<VoxelGradient> entries;
  entries.reserve(s.size() * 8);
  backprop_to_field(field, *ray, s, g, [&](const SparseFieldGradient& sg) {
    for (int i = 0; i < sg.count; ++i) entries.push_back(sg.entries[std::size_t(i)]);
  });
  out.gradient = compact(entries, field.color_per_voxel());
  return out;
}

template <typename Scalar>
LossResult reduce(const VoxelField<Scalar>& field, const std::vector<RayLoss>& rays) {
  LossResult out;
  out.gradient = field.make_gradient();
  for (const RayLoss& r : rays) {
    out.loss += r.loss;
    add_ray_gradient(out.gradient, r.gradient, field.color_per_voxel());
  }
  return out;
}

}  // namespace detail

// Mean over the batch of ||C_hat(r) - C(r)||^2 and its gradient.
template <typename Scalar>
LossResult photometric_loss(const VoxelField<Scalar>& field, std::span<const ColorObservation> batch,
                            const LossOptions& opt) {
  if (batch.empty()) throw ConfigError("photometric loss: empty batch");
  const double scale = 1.0 / double(batch.size());
  std::vector<detail::RayLoss> rays(batch.size());
  parallel_for(batch.size(), opt.threads, [&](std::size_t i) {
    const Vec3 target = batch[i].color;
    rays[i] = detail::ray_loss(field, batch[i].ray, opt, i, [&](const Vec3& c, double) {
      const Vec3 r = c - target;
      return std::tuple{scale * r.squaredNorm(), Vec3(2.0 * scale * r), 0.0};
    });
  });
  return detail::reduce(field, rays);
}

// Mean over the batch of (z_hat(r) - z(r))^2, where z_hat is the rendered
// expected termination distance converted to camera-frame z. An empty batch
// contributes nothing.
template <typename Scalar>
LossResult depth_loss(const VoxelField<Scalar>& field, std::span<const DepthObservation> batch,
                      const LossOptions& opt) {
  if (batch.empty()) return {0.0, field.make_gradient()};
  const double scale = 1.0 / double(batch.size());
  std::vector<detail::RayLoss> rays(batch.size());
  parallel_for(batch.size(), opt.threads, [&](std::size_t i) {
    const DepthObservation& o = batch[i];
    rays[i] = detail::ray_loss(field, o.ray, opt, i, [&](const Vec3&, double distance) {
      const double r = distance * o.z_per_distance - o.depth_gt;
      return std::tuple{scale * r * r, Vec3::Zero().eval(), 2.0 * scale * r * o.z_per_distance};
    });
  });
  return detail::reduce(field, rays);
}

// ---------------------------------------------------------------------------
// Training.

template <typename Scalar>
struct TrainState {
  VoxelField<Scalar> field;
  std::vector<Scalar> momentum_density;
  std::vector<Scalar> momentum_color;
  std::uint64_t step = 0;

  static TrainState initial(const TrainConfig& cfg) {
    TrainState s;
    s.field = VoxelField<Scalar>(cfg.resolution, cfg.bbox, cfg.color_model, cfg.init_density_raw,
                                 cfg.init_color_raw);
    s.momentum_density.assign(s.field.density_raw().size(), Scalar(0));
    s.momentum_color.assign(s.field.color_raw().size(), Scalar(0));
    return s;
  }
};

struct LossRecord {
  std::uint64_t step = 0;
  double photo = 0.0;
  double depth = 0.0;
  double total = 0.0;
};

inline std::string loss_csv_header() { return "step,L_photo,L_depth,L\n"; }
inline std::string loss_csv_row(const LossRecord& r) {
  return std::to_string(r.step) + "," + format_double(r.photo) + "," + format_double(r.depth) + "," +
         format_double(r.total) + "\n";
}

// Heavy-ball update: v = mu * v + g; p -= lr * v.
template <typename Scalar>
void apply_update(TrainState<Scalar>& state, const FieldGradient& g, double lr, double mu) {
  auto step = [&](std::vector<Scalar>& p, std::vector<Scalar>& v, const std::vector<double>& grad) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double vi = mu * double(v[i]) + grad[i];
      v[i] = static_cast<Scalar>(vi);
      p[i] = static_cast<Scalar>(double(p[i]) - lr * double(v[i]));
    }
  };
  step(state.field.density_raw(), state.momentum_density, g.density);
  step(state.field.color_raw(), state.momentum_color, g.color);
}

namespace detail {

inline std::vector<const PosedImage*> canonical_order(std::span<const PosedImage> images) {
  std::vector<const PosedImage*> out;
  for (const PosedImage& im : images) out.push_back(&im);
  std::sort(out.begin(), out.end(), [](const PosedImage* a, const PosedImage* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < out.size(); ++i)
    if (out[i]->id == out[i - 1]->id) throw DatasetError("duplicate image id '" + out[i]->id + "'");
  return out;
}

}  // namespace detail

inline void validate_dataset(std::span<const PosedImage> images) {
  if (images.size() < 2) throw DatasetError("training needs at least 2 images");
  for (const PosedImage& im : images) im.validate();
  const auto order = detail::canonical_order(images);
  const PosedImage& first = *order.front();
  for (const PosedImage* im : order)
    if (im->image.width != first.image.width || im->image.height != first.image.height)
      throw DatasetError("image '" + im->id + "': size differs from '" + first.id + "'");
}

// Runs steps [state.step, cfg.iterations). Each step's rays and jitter come
// from streams keyed by (seed, step, ray), so a resumed run continues exactly
// where an uninterrupted one would be. `on_step` sees the losses measured
// before that step's update.
template <typename Scalar>
void train_resume(std::span<const PosedImage> images, const TrainConfig& cfg, TrainState<Scalar>& state,
                  const std::function<void(const LossRecord&)>& on_step = {}) {
  cfg.validate();
  validate_dataset(images);
  const auto order = detail::canonical_order(images);
  std::vector<std::pair<const PosedImage*, const SparseDepthPoint*>> depth_points;
  for (const PosedImage* im : order)
    for (const SparseDepthPoint& p : im->sparse_depth) depth_points.push_back({im, &p});
  const bool use_depth = cfg.depth_loss_weight > 0.0 && !depth_points.empty();
  const std::uint64_t w = std::uint64_t(order.front()->image.width);
  const std::uint64_t h = std::uint64_t(order.front()->image.height);

  std::vector<ColorObservation> color_batch(std::size_t(cfg.batch_size));
  std::vector<DepthObservation> depth_batch;
  for (; state.step < std::uint64_t(cfg.iterations); ++state.step) {
    const std::uint64_t step = state.step;
    for (std::size_t i = 0; i < color_batch.size(); ++i) {
      Rng rng(cfg.seed, {stream::kTrainRays, step, i});
      const PosedImage& im = *order[rng.uniform_index(order.size())];
      const std::uint64_t p = rng.uniform_index(w * h);
      const int x = int(p % w);
      const int y = int(p / w);
      color_batch[i] = color_observation(im.intr, im.pose, {double(x), double(y)}, im.image.rgb(x, y));
    }
    LossOptions opt{cfg.k_samples, cfg.stratified, cfg.seed, stream::kTrainStrata, step, cfg.threads};
    LossResult total = photometric_loss(state.field, std::span<const ColorObservation>(color_batch), opt);
    LossRecord record{step, total.loss, 0.0, total.loss};
    if (use_depth) {
      depth_batch.clear();
      for (int j = 0; j < cfg.depth_batch_size; ++j) {
        Rng rng(cfg.seed, {stream::kTrainDepth, step, std::uint64_t(j)});
        const auto [im, p] = depth_points[rng.uniform_index(depth_points.size())];
        depth_batch.push_back(depth_observation(im->intr, im->pose, p->pixel, p->depth_gt));
      }
      opt.stream_key = stream::kTrainDepth;
      const LossResult d = depth_loss(state.field, std::span<const DepthObservation>(depth_batch), opt);
      record.depth = d.loss;
      record.total += cfg.depth_loss_weight * d.loss;
      total.gradient.add_scaled(d.gradient, cfg.depth_loss_weight);
    }
    if (on_step) on_step(record);
    apply_update(state, total.gradient, cfg.learning_rate, cfg.momentum);
  }
}

template <typename Scalar = float>
VoxelField<Scalar> train(std::span<const PosedImage> images, const TrainConfig& cfg,
                         std::vector<LossRecord>* curve = nullptr) {
  auto state = TrainState<Scalar>::initial(cfg);
  train_resume(images, cfg, state, [&](const LossRecord& r) {
    if (curve != nullptr) curve->push_back(r);
  });
  return std::move(state.field);
}

// Optimizer state file: "NSTRAIN\0", u32 version (1), u64 next step, u64
// length of the embedded field snapshot, the snapshot, then f32 momentum for
// density and color in parameter order.
inline constexpr char kTrainStateMagic[9] = "NSTRAIN";

inline std::string encode_train_state(const TrainState<float>& s) {
  std::string out(kTrainStateMagic, 8);
  detail::put_u32(out, 1);
  detail::put_u64(out, s.step);
  const std::string field = encode_field(s.field);
  detail::put_u64(out, field.size());
  out += field;
  for (float v : s.momentum_density) detail::put_f32(out, v);
  for (float v : s.momentum_color) detail::put_f32(out, v);
  return out;
}

inline TrainState<float> decode_train_state(const std::string& bytes, const std::string& name = "train state") {
  if (bytes.size() < 28) throw LoadError(name + ": truncated file");
  detail::ByteReader head(bytes.substr(0, 28), name);
  head.expect_magic(kTrainStateMagic);
  if (head.u32() != 1) throw LoadError(name + ": unsupported version");
  TrainState<float> s;
  s.step = head.u64();
  const std::uint64_t field_size = head.u64();
  if (field_size > bytes.size() - 28) throw LoadError(name + ": truncated file");
  s.field = decode_field(bytes.substr(28, field_size), name);
  detail::ByteReader tail(bytes.substr(28 + field_size), name);
  s.momentum_density.resize(s.field.density_raw().size());
  s.momentum_color.resize(s.field.color_raw().size());
  for (float& v : s.momentum_density) v = tail.f32();
  for (float& v : s.momentum_color) v = tail.f32();
  tail.finish();
  return s;
}

inline void save_train_state(const TrainState<float>& s, const std::string& path) {
  write_file(path, encode_train_state(s));
}
inline TrainState<float> load_train_state(const std::string& path) {
  return decode_train_state(read_file(path), path);
}

}  // namespace nerfsup
