// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Explicit voxel-grid radiance field. Raw parameters live at voxel centers and
// are trilinearly interpolated, then activated: density through softplus,
// color through the logistic function. Color is either a constant RGB triple
// per voxel or degree-1 spherical-harmonic coefficients per channel.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nerfsup/error.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/io.hpp"

namespace nerfsup {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y : y + std::log(-std::expm1(-y)); }
inline double logit(double p) { return std::log(p) - std::log1p(-p); }

enum class ColorModel : std::uint32_t {
  kConstant = 0,     // 1 coefficient per channel
  kSphericalHarmonics1 = 1,  // 4 coefficients per channel (degree 0 and 1)
};

inline int coefficients_per_channel(ColorModel m) { return m == ColorModel::kConstant ? 1 : 4; }

// Real spherical-harmonic basis up to degree 1.
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

inline std::array<double, 4> sh_basis(const Vec3& d) {
  return {kShC0, -kShC1 * d.y(), kShC1 * d.z(), -kShC1 * d.x()};
}

struct GridResolution {
  int nx = 1;
  int ny = 1;
  int nz = 1;

  std::size_t voxels() const { return std::size_t(nx) * std::size_t(ny) * std::size_t(nz); }
  friend bool operator==(const GridResolution&, const GridResolution&) = default;
};

struct FieldQuery {
  Vec3 position = Vec3::Zero();
  Vec3 view_direction = Vec3::UnitZ();
};

struct FieldSample {
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();
};

// Upstream derivatives dL/dsigma and dL/dcolor for one sample.
struct FieldSampleGrad {
  double d_sigma = 0.0;
  Vec3 d_color = Vec3::Zero();
};

// Derivative of the loss with respect to the raw parameters of one voxel.
struct VoxelGradient {
  std::size_t voxel = 0;
  double d_density = 0.0;
  std::array<double, 12> d_color{};  // channel-major, coefficients_per_channel used
};

// At most eight voxels touched by one trilinear lookup.
struct SparseFieldGradient {
  std::array<VoxelGradient, 8> entries{};
  int count = 0;
};

// Dense gradient buffer shaped like the field's parameters.
struct FieldGradient {
  std::vector<double> density;
  std::vector<double> color;

  void resize(std::size_t voxels, std::size_t color_per_voxel) {
    density.assign(voxels, 0.0);
    color.assign(voxels * color_per_voxel, 0.0);
  }
  void clear() {
    std::fill(density.begin(), density.end(), 0.0);
    std::fill(color.begin(), color.end(), 0.0);
  }
  void accumulate(const SparseFieldGradient& g, std::size_t color_per_voxel, double scale = 1.0) {
    for (int i = 0; i < g.count; ++i) {
      const auto& e = g.entries[i];
      density[e.voxel] += scale * e.d_density;
      double* c = color.data() + e.voxel * color_per_voxel;
      for (std::size_t j = 0; j < color_per_voxel; ++j) c[j] += scale * e.d_color[j];
    }
  }
  void add_scaled(const FieldGradient& other, double scale) {
    for (std::size_t i = 0; i < density.size(); ++i) density[i] += scale * other.density[i];
    for (std::size_t i = 0; i < color.size(); ++i) color[i] += scale * other.color[i];
  }
};

namespace detail {

struct Trilinear {
  std::array<std::size_t, 8> voxel{};
  std::array<double, 8> weight{};
};

}  // namespace detail

// Scalar is the storage type of the raw parameters; all arithmetic is done in
// double. Snapshots are always written as 32-bit floats, so a float field
// round-trips exactly.
template <typename Scalar>
class VoxelField {
 public:
  VoxelField() = default;

  VoxelField(GridResolution res, Aabb bbox, ColorModel model, double init_density_raw = 0.0,
             double init_color_raw = 0.0)
      : res_(res), bbox_(bbox), model_(model) {
    if (res.nx < 1 || res.ny < 1 || res.nz < 1) throw ConfigError("field: resolution must be positive");
    bbox_.validate();
    density_raw_.assign(res.voxels(), static_cast<Scalar>(init_density_raw));
    color_raw_.assign(res.voxels() * color_per_voxel(), Scalar(0));
    // Only the degree-0 term carries the initial color.
    const int c = coefficients_per_channel(model_);
    const double dc = model_ == ColorModel::kConstant ? init_color_raw : init_color_raw / kShC0;
    for (std::size_t v = 0; v < res.voxels(); ++v)
      for (int ch = 0; ch < 3; ++ch) color_raw_[v * color_per_voxel() + ch * c] = static_cast<Scalar>(dc);
  }

  const GridResolution& resolution() const { return res_; }
  const Aabb& bbox() const { return bbox_; }
  ColorModel color_model() const { return model_; }
  std::size_t voxel_count() const { return res_.voxels(); }
  std::size_t color_per_voxel() const { return 3 * std::size_t(coefficients_per_channel(model_)); }
  Vec3 cell_size() const {
    return bbox_.extent().cwiseQuotient(Vec3(res_.nx, res_.ny, res_.nz));
  }

  std::vector<Scalar>& density_raw() { return density_raw_; }
  const std::vector<Scalar>& density_raw() const { return density_raw_; }
  std::vector<Scalar>& color_raw() { return color_raw_; }
  const std::vector<Scalar>& color_raw() const { return color_raw_; }

  std::size_t index(int ix, int iy, int iz) const {
    return (std::size_t(iz) * res_.ny + std::size_t(iy)) * res_.nx + std::size_t(ix);
  }

  Vec3 voxel_center(int ix, int iy, int iz) const {
    return bbox_.lo + cell_size().cwiseProduct(Vec3(ix + 0.5, iy + 0.5, iz + 0.5));
  }

  FieldSample sample(const FieldQuery& q) const {
    check_direction(q.view_direction);
    FieldSample out;
    if (!bbox_.contains(q.position)) return out;
    const detail::Trilinear tri = trilinear(q.position);
    double raw_density = 0.0;
    for (int i = 0; i < 8; ++i) raw_density += tri.weight[i] * double(density_raw_[tri.voxel[i]]);
    out.sigma = softplus(raw_density);
    const Vec3 raw_color = interpolate_color(tri, q.view_direction);
    for (int ch = 0; ch < 3; ++ch) out.color[ch] = sigmoid(raw_color[ch]);
    return out;
  }

  // Chain-rules upstream (dL/dsigma, dL/dcolor) through activations and the
  // trilinear weights onto the raw parameters of the touched voxels.
  SparseFieldGradient sample_gradient(const FieldQuery& q, const FieldSampleGrad& upstream) const {
    check_direction(q.view_direction);
    SparseFieldGradient out;
    if (!bbox_.contains(q.position)) return out;
    const detail::Trilinear tri = trilinear(q.position);
    double raw_density = 0.0;
    for (int i = 0; i < 8; ++i) raw_density += tri.weight[i] * double(density_raw_[tri.voxel[i]]);
    const double d_raw_density = upstream.d_sigma * sigmoid(raw_density);
    const Vec3 raw_color = interpolate_color(tri, q.view_direction);
    Vec3 d_raw_color;
    for (int ch = 0; ch < 3; ++ch) {
      const double c = sigmoid(raw_color[ch]);
      d_raw_color[ch] = upstream.d_color[ch] * c * (1.0 - c);
    }
    const int nc = coefficients_per_channel(model_);
    const std::array<double, 4> basis =
        model_ == ColorModel::kConstant ? std::array<double, 4>{1.0, 0.0, 0.0, 0.0} : sh_basis(q.view_direction);
    // Corners can coincide when the grid has one voxel along an axis.
    for (int i = 0; i < 8; ++i) {
      if (tri.weight[i] == 0.0) continue;
      VoxelGradient* slot = nullptr;
      for (int j = 0; j < out.count; ++j)
        if (out.entries[j].voxel == tri.voxel[i]) slot = &out.entries[j];
      if (slot == nullptr) {
        slot = &out.entries[out.count++];
        *slot = VoxelGradient{};
        slot->voxel = tri.voxel[i];
      }
      const double w = tri.weight[i];
      slot->d_density += w * d_raw_density;
      for (int ch = 0; ch < 3; ++ch)
        for (int j = 0; j < nc; ++j) slot->d_color[ch * nc + j] += w * d_raw_color[ch] * basis[j];
    }
    return out;
  }

  FieldGradient make_gradient() const {
    FieldGradient g;
    g.resize(voxel_count(), color_per_voxel());
    return g;
  }

  template <typename Other>
  VoxelField<Other> cast() const {
    VoxelField<Other> out(res_, bbox_, model_);
    std::transform(density_raw_.begin(), density_raw_.end(), out.density_raw().begin(),
                   [](Scalar x) { return static_cast<Other>(x); });
    std::transform(color_raw_.begin(), color_raw_.end(), out.color_raw().begin(),
                   [](Scalar x) { return static_cast<Other>(x); });
    return out;
  }

  friend bool operator==(const VoxelField& a, const VoxelField& b) {
    return a.res_ == b.res_ && a.bbox_ == b.bbox_ && a.model_ == b.model_ && a.density_raw_ == b.density_raw_ &&
           a.color_raw_ == b.color_raw_;
  }

 private:
  static void check_direction(const Vec3& d) {
    if (!(std::abs(d.norm() - 1.0) <= 1e-6)) throw DomainError("field: view direction must have unit norm");
  }

  detail::Trilinear trilinear(const Vec3& p) const {
    const Vec3 g = (p - bbox_.lo).cwiseQuotient(cell_size()) - Vec3::Constant(0.5);
    const std::array<int, 3> n{res_.nx, res_.ny, res_.nz};
    std::array<int, 3> i0{}, i1{};
    std::array<double, 3> f{};
    for (int a = 0; a < 3; ++a) {
      const double ga = std::clamp(g[a], 0.0, double(n[a] - 1));
      int base = static_cast<int>(std::floor(ga));
      base = std::min(base, std::max(n[a] - 2, 0));
      i0[a] = base;
      i1[a] = std::min(base + 1, n[a] - 1);
      f[a] = n[a] == 1 ? 0.0 : ga - base;
    }
    detail::Trilinear tri;
    int k = 0;
    for (int dz = 0; dz < 2; ++dz)
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          tri.voxel[k] = index(dx ? i1[0] : i0[0], dy ? i1[1] : i0[1], dz ? i1[2] : i0[2]);
          tri.weight[k] = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
          ++k;
        }
    return tri;
  }

  Vec3 interpolate_color(const detail::Trilinear& tri, const Vec3& dir) const {
    const int nc = coefficients_per_channel(model_);
    const std::size_t stride = color_per_voxel();
    std::array<double, 12> coef{};
    for (int i = 0; i < 8; ++i) {
      const Scalar* c = color_raw_.data() + tri.voxel[i] * stride;
      for (std::size_t j = 0; j < stride; ++j) coef[j] += tri.weight[i] * double(c[j]);
    }
    Vec3 raw;
    if (model_ == ColorModel::kConstant) {
      raw = {coef[0], coef[1], coef[2]};
    } else {
      const auto basis = sh_basis(dir);
      for (int ch = 0; ch < 3; ++ch) {
        double s = 0.0;
        for (int j = 0; j < nc; ++j) s += coef[ch * nc + j] * basis[j];
        raw[ch] = s;
      }
    }
    return raw;
  }

  GridResolution res_;
  Aabb bbox_;
  ColorModel model_ = ColorModel::kConstant;
  std::vector<Scalar> density_raw_;
  std::vector<Scalar> color_raw_;
};

using RadianceField = VoxelField<float>;

// ---------------------------------------------------------------------------
// Binary snapshot:
//   char[8]  magic "NSFIELD\0"
//   u32      version (1)
//   u32      nx, ny, nz
//   f32[6]   bbox lo.xyz, hi.xyz
//   u32      color model
//   f32[n]   raw density, n = nx*ny*nz, x fastest
//   f32[n*c] raw color, c = 3 * coefficients per channel, channel-major per voxel
// All values little-endian.

inline constexpr char kFieldMagic[9] = "NSFIELD";

template <typename Scalar>
std::string encode_field(const VoxelField<Scalar>& field) {
  std::string out(kFieldMagic, 8);
  detail::put_u32(out, 1);
  const auto& r = field.resolution();
  detail::put_u32(out, std::uint32_t(r.nx));
  detail::put_u32(out, std::uint32_t(r.ny));
  detail::put_u32(out, std::uint32_t(r.nz));
  for (int a = 0; a < 3; ++a) detail::put_f32(out, float(field.bbox().lo[a]));
  for (int a = 0; a < 3; ++a) detail::put_f32(out, float(field.bbox().hi[a]));
  detail::put_u32(out, static_cast<std::uint32_t>(field.color_model()));
  for (Scalar v : field.density_raw()) detail::put_f32(out, float(v));
  for (Scalar v : field.color_raw()) detail::put_f32(out, float(v));
  return out;
}

inline RadianceField decode_field(std::string bytes, const std::string& name = "field snapshot") {
  detail::ByteReader in(std::move(bytes), name);
  in.expect_magic(kFieldMagic);
  if (const auto version = in.u32(); version != 1)
    throw LoadError(name + ": unsupported version " + std::to_string(version));
  GridResolution res;
  res.nx = int(in.u32());
  res.ny = int(in.u32());
  res.nz = int(in.u32());
  if (res.nx < 1 || res.ny < 1 || res.nz < 1 || res.voxels() > (std::size_t(1) << 30))
    throw LoadError(name + ": bad resolution");
  Aabb box;
  for (int a = 0; a < 3; ++a) box.lo[a] = in.f32();
  for (int a = 0; a < 3; ++a) box.hi[a] = in.f32();
  const auto model = in.u32();
  if (model > 1) throw LoadError(name + ": unknown color model " + std::to_string(model));
  try {
    box.validate();
  } catch (const DomainError& e) {
    throw LoadError(name + ": " + e.what());
  }
  RadianceField field(res, box, static_cast<ColorModel>(model));
  for (auto& v : field.density_raw()) v = in.f32();
  for (auto& v : field.color_raw()) v = in.f32();
  in.finish();
  return field;
}

template <typename Scalar>
void save_field(const VoxelField<Scalar>& field, const std::string& path) {
  write_file(path, encode_field(field));
}

inline RadianceField load_field(const std::string& path) { return decode_field(read_file(path), path); }

}  // namespace nerfsup
