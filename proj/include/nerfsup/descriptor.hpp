// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// A small dense descriptor network: a stack of 3x3 stride-1 convolutions with
// tanh between layers, mapping an RGB image to a d-channel descriptor image
// of the same size. Training uses a pixelwise contrastive loss on generated
// correspondence tuples; matching is nearest neighbour in descriptor space.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nerfsup/correspondence.hpp"
#include "nerfsup/error.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

enum class Padding : std::uint32_t { kZero = 0, kWrap = 1 };

struct DescriptorArch {
  int layers = 3;
  int hidden = 16;
  int dim = 3;
  Padding padding = Padding::kZero;

  void validate() const {
    if (layers < 1 || hidden < 1 || dim < 1) throw ConfigError("descriptor: layers, hidden and dim must be positive");
  }
  int in_channels(int layer) const { return layer == 0 ? 3 : hidden; }
  int out_channels(int layer) const { return layer == layers - 1 ? dim : hidden; }
  // Pixels of context on each side of an output pixel.
  int radius() const { return layers; }
  friend bool operator==(const DescriptorArch&, const DescriptorArch&) = default;
};

// h x w x d descriptor array, row-major, channels interleaved.
struct DescriptorImage {
  int width = 0;
  int height = 0;
  int dim = 0;
  std::vector<double> values;

  DescriptorImage() = default;
  DescriptorImage(int w, int h, int d) : width(w), height(h), dim(d), values(std::size_t(w) * h * d, 0.0) {}
  double* at(int x, int y) { return values.data() + (std::size_t(y) * width + x) * dim; }
  const double* at(int x, int y) const { return values.data() + (std::size_t(y) * width + x) * dim; }
  friend bool operator==(const DescriptorImage&, const DescriptorImage&) = default;
};

inline double descriptor_distance_sq(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int c = 0; c < dim; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return s;
}

// Parameters live in one flat array: for each layer, weights indexed
// [out][in][ky][kx] followed by biases [out].
template <typename Scalar>
class DescriptorModel {
 public:
  DescriptorModel() = default;
  explicit DescriptorModel(DescriptorArch arch) : arch_(arch) {
    arch_.validate();
    std::size_t n = 0;
    for (int l = 0; l < arch_.layers; ++l) {
      weight_offset_.push_back(n);
      n += std::size_t(arch_.out_channels(l)) * arch_.in_channels(l) * 9;
      bias_offset_.push_back(n);
      n += std::size_t(arch_.out_channels(l));
    }
    params_.assign(n, Scalar(0));
  }

  // Weights ~ N(0, gain^2 / fan_in), biases zero.
  static DescriptorModel initialize(DescriptorArch arch, std::uint64_t seed, double gain = 1.0) {
    DescriptorModel m(arch);
    Rng rng(seed, {stream::kDescInit});
    for (int l = 0; l < arch.layers; ++l) {
      const double scale = gain / std::sqrt(9.0 * arch.in_channels(l));
      const std::size_t nw = std::size_t(arch.out_channels(l)) * arch.in_channels(l) * 9;
      for (std::size_t i = 0; i < nw; ++i) m.params_[m.weight_offset_[l] + i] = static_cast<Scalar>(scale * rng.normal());
    }
    return m;
  }

  const DescriptorArch& arch() const { return arch_; }
  std::vector<Scalar>& params() { return params_; }
  const std::vector<Scalar>& params() const { return params_; }
  std::size_t weight_offset(int l) const { return weight_offset_[std::size_t(l)]; }
  std::size_t bias_offset(int l) const { return bias_offset_[std::size_t(l)]; }

  template <typename Other>
  DescriptorModel<Other> cast() const {
    DescriptorModel<Other> out(arch_);
    std::transform(params_.begin(), params_.end(), out.params().begin(), [](Scalar v) { return static_cast<Other>(v); });
    return out;
  }

  friend bool operator==(const DescriptorModel& a, const DescriptorModel& b) {
    return a.arch_ == b.arch_ && a.params_ == b.params_;
  }

 private:
  DescriptorArch arch_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::vector<Scalar> params_;
};

namespace detail {

inline void check_image_size(const DescriptorArch& arch, int w, int h) {
  const int need = 2 * arch.radius() + 1;
  if (w < need || h < need)
    throw DomainError("descriptor: image is " + std::to_string(w) + "x" + std::to_string(h) +
                      ", smaller than the receptive field " + std::to_string(need));
}

inline int wrap(int v, int n) { return ((v % n) + n) % n; }

}  // namespace detail

// Dense forward pass over a whole image.
template <typename Scalar>
DescriptorImage forward(const DescriptorModel<Scalar>& model, const ImageRGB& image) {
  const DescriptorArch& arch = model.arch();
  const int w = image.width;
  const int h = image.height;
  detail::check_image_size(arch, w, h);
  std::vector<double> act(std::size_t(w) * h * 3);
  for (std::size_t i = 0; i < act.size(); ++i) act[i] = double(image.data[i]) - 0.5;
  const auto& p = model.params();
  for (int l = 0; l < arch.layers; ++l) {
    const int ci = arch.in_channels(l);
    const int co = arch.out_channels(l);
    std::vector<double> next(std::size_t(w) * h * co);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double* out = next.data() + (std::size_t(y) * w + x) * co;
        for (int o = 0; o < co; ++o) out[o] = double(p[model.bias_offset(l) + std::size_t(o)]);
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            int sx = x + kx - 1;
            int sy = y + ky - 1;
            if (arch.padding == Padding::kWrap) {
              sx = detail::wrap(sx, w);
              sy = detail::wrap(sy, h);
            } else if (sx < 0 || sy < 0 || sx >= w || sy >= h) {
              continue;
            }
            const double* in = act.data() + (std::size_t(sy) * w + sx) * ci;
            for (int o = 0; o < co; ++o) {
              const std::size_t base = model.weight_offset(l) + (std::size_t(o) * ci * 9) + std::size_t(ky * 3 + kx);
              double s = 0.0;
              for (int c = 0; c < ci; ++c) s += double(p[base + std::size_t(c) * 9]) * in[c];
              out[o] += s;
            }
          }
        if (l + 1 < arch.layers)
          for (int o = 0; o < co; ++o) out[o] = std::tanh(out[o]);
      }
    act = std::move(next);
  }
  DescriptorImage d(w, h, arch.dim);
  d.values = std::move(act);
  return d;
}

// Forward and backward for the descriptor of a single pixel, evaluated on the
// pixel's receptive-field window only; gives exactly the value of the dense
// pass at that pixel.
template <typename Scalar>
class PixelEvaluator {
 public:
  PixelEvaluator(const DescriptorModel<Scalar>& model, const ImageRGB& image, int x, int y)
      : model_(model), image_(image), x_(x), y_(y) {
    const DescriptorArch& arch = model.arch();
    detail::check_image_size(arch, image.width, image.height);
    const int r0 = arch.radius();
    acts_.resize(std::size_t(arch.layers) + 1);
    valid_.resize(std::size_t(arch.layers) + 1);
    // Layer input 0: the image window.
    {
      const int side = 2 * r0 + 1;
      acts_[0].assign(std::size_t(side) * side * 3, 0.0);
      valid_[0].assign(std::size_t(side) * side, 0);
      for (int dy = -r0; dy <= r0; ++dy)
        for (int dx = -r0; dx <= r0; ++dx) {
          int ix = x + dx;
          int iy = y + dy;
          if (!locate(ix, iy)) continue;
          const std::size_t cell = std::size_t(dy + r0) * side + std::size_t(dx + r0);
          valid_[0][cell] = 1;
          const float* px = image.at(ix, iy);
          for (int c = 0; c < 3; ++c) acts_[0][cell * 3 + std::size_t(c)] = double(px[c]) - 0.5;
        }
    }
    const auto& p = model.params();
    for (int l = 0; l < arch.layers; ++l) {
      const int rin = r0 - l;
      const int rout = rin - 1;
      const int sin = 2 * rin + 1;
      const int sout = 2 * rout + 1;
      const int ci = arch.in_channels(l);
      const int co = arch.out_channels(l);
      auto& out = acts_[std::size_t(l) + 1];
      auto& vout = valid_[std::size_t(l) + 1];
      out.assign(std::size_t(sout) * sout * co, 0.0);
      vout.assign(std::size_t(sout) * sout, 0);
      for (int dy = -rout; dy <= rout; ++dy)
        for (int dx = -rout; dx <= rout; ++dx) {
          int ix = x + dx;
          int iy = y + dy;
          if (!locate(ix, iy)) continue;
          const std::size_t cell = std::size_t(dy + rout) * sout + std::size_t(dx + rout);
          vout[cell] = 1;
          double* o = out.data() + cell * co;
          for (int k = 0; k < co; ++k) o[k] = double(p[model.bias_offset(l) + std::size_t(k)]);
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const std::size_t src = std::size_t(dy + ky - 1 + rin) * sin + std::size_t(dx + kx - 1 + rin);
              if (!valid_[std::size_t(l)][src]) continue;
              const double* in = acts_[std::size_t(l)].data() + src * ci;
              for (int k = 0; k < co; ++k) {
                const std::size_t base = model.weight_offset(l) + std::size_t(k) * ci * 9 + std::size_t(ky * 3 + kx);
                double s = 0.0;
                for (int c = 0; c < ci; ++c) s += double(p[base + std::size_t(c) * 9]) * in[c];
                o[k] += s;
              }
            }
          if (l + 1 < arch.layers)
            for (int k = 0; k < co; ++k) o[k] = std::tanh(o[k]);
        }
    }
  }

  const double* descriptor() const { return acts_.back().data(); }

  // Adds d(loss)/d(params) given d(loss)/d(descriptor) into `grad`.
  void backward(const double* d_out, std::vector<double>& grad) const {
    const DescriptorArch& arch = model_.arch();
    const auto& p = model_.params();
    const int r0 = arch.radius();
    std::vector<double> g(d_out, d_out + arch.dim);  // gradient w.r.t. pre-activation of the current layer output
    for (int l = arch.layers - 1; l >= 0; --l) {
      const int rin = r0 - l;
      const int rout = rin - 1;
      const int sin = 2 * rin + 1;
      const int sout = 2 * rout + 1;
      const int ci = arch.in_channels(l);
      const int co = arch.out_channels(l);
      const auto& in_act = acts_[std::size_t(l)];
      const auto& in_valid = valid_[std::size_t(l)];
      std::vector<double> g_in(in_act.size(), 0.0);
      for (int dy = -rout; dy <= rout; ++dy)
        for (int dx = -rout; dx <= rout; ++dx) {
          const std::size_t cell = std::size_t(dy + rout) * sout + std::size_t(dx + rout);
          if (!valid_[std::size_t(l) + 1][cell]) continue;
          const double* go = g.data() + cell * co;
          for (int k = 0; k < co; ++k) grad[model_.bias_offset(l) + std::size_t(k)] += go[k];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const std::size_t src = std::size_t(dy + ky - 1 + rin) * sin + std::size_t(dx + kx - 1 + rin);
              if (!in_valid[src]) continue;
              const double* in = in_act.data() + src * ci;
              double* gi = g_in.data() + src * ci;
              for (int k = 0; k < co; ++k) {
                if (go[k] == 0.0) continue;
                const std::size_t base = model_.weight_offset(l) + std::size_t(k) * ci * 9 + std::size_t(ky * 3 + kx);
                for (int c = 0; c < ci; ++c) {
                  grad[base + std::size_t(c) * 9] += go[k] * in[c];
                  gi[c] += go[k] * double(p[base + std::size_t(c) * 9]);
                }
              }
            }
        }
      if (l == 0) break;
      // Through the tanh that produced this layer's input.
      for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] *= 1.0 - in_act[i] * in_act[i];
      g = std::move(g_in);
    }
  }

 private:
  // Maps window coordinates to image coordinates; false for zero padding
  // outside the image.
  bool locate(int& ix, int& iy) const {
    if (model_.arch().padding == Padding::kWrap) {
      ix = detail::wrap(ix, image_.width);
      iy = detail::wrap(iy, image_.height);
      return true;
    }
    return ix >= 0 && iy >= 0 && ix < image_.width && iy < image_.height;
  }

  const DescriptorModel<Scalar>& model_;
  const ImageRGB& image_;
  int x_;
  int y_;
  std::vector<std::vector<double>> acts_;
  std::vector<std::vector<std::uint8_t>> valid_;
};

// ---------------------------------------------------------------------------
// Contrastive loss.

// One match with its non-matches, all at integer pixels.
struct MatchSample {
  const ImageRGB* src = nullptr;
  int sx = 0, sy = 0;
  const ImageRGB* tgt = nullptr;
  int tx = 0, ty = 0;
  std::vector<std::pair<int, int>> nonmatches;  // pixels of tgt
};

struct ContrastiveResult {
  double loss = 0.0;
  double match_term = 0.0;
  double nonmatch_term = 0.0;
  std::vector<double> gradient;
};

// loss = mean over matches of ||f_s - f_t||^2
//      + mean over non-matches of max(0, M - ||f_s - f_n||)^2
template <typename Scalar>
ContrastiveResult contrastive_loss(const DescriptorModel<Scalar>& model, std::span<const MatchSample> batch,
                                   double margin, int threads = 1) {
  if (batch.empty()) throw ConfigError("contrastive loss: empty batch");
  if (!(margin >= 0.0)) throw ConfigError("contrastive loss: margin must be non-negative");
  std::size_t total_nonmatches = 0;
  for (const MatchSample& m : batch) total_nonmatches += m.nonmatches.size();
  const double wm = 1.0 / double(batch.size());
  const double wn = total_nonmatches > 0 ? 1.0 / double(total_nonmatches) : 0.0;
  const int dim = model.arch().dim;
  struct Part {
    double match = 0.0;
    double nonmatch = 0.0;
    std::vector<double> grad;
  };
  std::vector<Part> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    const MatchSample& m = batch[i];
    Part& part = parts[i];
    part.grad.assign(model.params().size(), 0.0);
    const PixelEvaluator<Scalar> es(model, *m.src, m.sx, m.sy);
    const PixelEvaluator<Scalar> et(model, *m.tgt, m.tx, m.ty);
    const double* fs = es.descriptor();
    const double* ft = et.descriptor();
    std::vector<double> d_fs(std::size_t(dim), 0.0);
    std::vector<double> d_other(static_cast<std::size_t>(dim), 0.0);
    part.match = wm * descriptor_distance_sq(fs, ft, dim);
    for (int c = 0; c < dim; ++c) {
      d_fs[std::size_t(c)] += 2.0 * wm * (fs[c] - ft[c]);
      d_other[std::size_t(c)] = -2.0 * wm * (fs[c] - ft[c]);
    }
    et.backward(d_other.data(), part.grad);
    for (const auto& [nx, ny] : m.nonmatches) {
      const PixelEvaluator<Scalar> en(model, *m.tgt, nx, ny);
      const double* fn = en.descriptor();
      const double d = std::sqrt(descriptor_distance_sq(fs, fn, dim));
      if (!(d < margin)) continue;
      part.nonmatch += wn * (margin - d) * (margin - d);
      if (d == 0.0) continue;  // subgradient 0 at coincident descriptors
      const double k = -2.0 * wn * (margin - d) / d;
      for (int c = 0; c < dim; ++c) {
        d_fs[std::size_t(c)] += k * (fs[c] - fn[c]);
        d_other[std::size_t(c)] = -k * (fs[c] - fn[c]);
      }
      en.backward(d_other.data(), part.grad);
    }
    es.backward(d_fs.data(), part.grad);
  });
  ContrastiveResult out;
  out.gradient.assign(model.params().size(), 0.0);
  for (const Part& part : parts) {
    out.match_term += part.match;
    out.nonmatch_term += part.nonmatch;
    for (std::size_t j = 0; j < part.grad.size(); ++j) out.gradient[j] += part.grad[j];
  }
  out.loss = out.match_term + out.nonmatch_term;
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct DescTrainConfig {
  DescriptorArch arch;
  int steps = 800;
  int batch_size = 32;
  int n_nonmatches = 4;
  double margin = 0.5;
  double nonmatch_exclusion = 3.0;  // non-matches keep at least this many pixels from the match
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const {
    arch.validate();
    if (steps < 0) throw ConfigError("train-desc: steps must be non-negative");
    if (batch_size < 1) throw ConfigError("train-desc: batch size must be positive");
    if (n_nonmatches < 0) throw ConfigError("train-desc: non-match count must be non-negative");
    if (!(margin >= 0.0)) throw ConfigError("train-desc: margin must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("train-desc: learning rate must be positive");
  }
};

struct DescLossRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
};

namespace detail {

struct DescImage {
  const PosedImage* image = nullptr;
  std::vector<std::pair<int, int>> mask_pixels;
};

inline std::pair<int, int> round_pixel(const Pixel& p, int w, int h) {
  return {std::clamp(int(std::lround(p.u)), 0, w - 1), std::clamp(int(std::lround(p.v)), 0, h - 1)};
}

}  // namespace detail

// Draws the batch of step `step`: tuples uniformly with replacement,
// non-matches uniformly from the target mask away from the match.
inline std::vector<MatchSample> sample_batch(std::span<const CorrespondenceTuple> tuples,
                                             const std::map<std::string, detail::DescImage>& images,
                                             const DescTrainConfig& cfg, std::uint64_t step) {
  std::vector<MatchSample> batch;
  for (int i = 0; i < cfg.batch_size; ++i) {
    Rng rng(cfg.seed, {stream::kDescBatch, step, std::uint64_t(i)});
    const CorrespondenceTuple& t = tuples[rng.uniform_index(tuples.size())];
    const auto& src = images.at(t.src_id);
    const auto& tgt = images.at(t.tgt_id);
    const int w = tgt.image->image.width;
    const int h = tgt.image->image.height;
    MatchSample m;
    m.src = &src.image->image;
    m.tgt = &tgt.image->image;
    std::tie(m.sx, m.sy) = detail::round_pixel(t.u_s, src.image->image.width, src.image->image.height);
    std::tie(m.tx, m.ty) = detail::round_pixel(t.u_t, w, h);
    for (int k = 0; k < cfg.n_nonmatches; ++k) {
      for (int attempt = 0; attempt < 32; ++attempt) {
        const auto [nx, ny] = tgt.mask_pixels[rng.uniform_index(tgt.mask_pixels.size())];
        if (std::hypot(nx - m.tx, ny - m.ty) >= cfg.nonmatch_exclusion) {
          m.nonmatches.push_back({nx, ny});
          break;
        }
      }
    }
    batch.push_back(std::move(m));
  }
  return batch;
}

template <typename Scalar>
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  void step(std::vector<Scalar>& params, const std::vector<double>& g, const DescTrainConfig& cfg) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double update = cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
      params[i] = static_cast<Scalar>(double(params[i]) - update);
    }
  }
};

template <typename Scalar = float>
DescriptorModel<Scalar> train_descriptors(std::span<const CorrespondenceTuple> tuples,
                                          std::span<const PosedImage> images, const DescTrainConfig& cfg,
                                          std::vector<DescLossRecord>* curve = nullptr) {
  cfg.validate();
  if (tuples.empty()) throw DatasetError("train-desc: no correspondence tuples");
  std::map<std::string, detail::DescImage> by_id;
  for (const PosedImage& im : images) {
    detail::DescImage d{&im, {}};
    for (int y = 0; y < im.image.height; ++y)
      for (int x = 0; x < im.image.width; ++x)
        if (im.in_mask({double(x), double(y)})) d.mask_pixels.push_back({x, y});
    if (d.mask_pixels.empty())
      for (int y = 0; y < im.image.height; ++y)
        for (int x = 0; x < im.image.width; ++x) d.mask_pixels.push_back({x, y});
    if (!by_id.emplace(im.id, std::move(d)).second) throw DatasetError("duplicate image id '" + im.id + "'");
  }
  for (const CorrespondenceTuple& t : tuples)
    if (!by_id.count(t.src_id) || !by_id.count(t.tgt_id))
      throw DatasetError("tuple references unknown image '" + (by_id.count(t.src_id) ? t.tgt_id : t.src_id) + "'");
  DescriptorModel<Scalar> model = DescriptorModel<Scalar>::initialize(cfg.arch, cfg.seed);
  AdamState<Scalar> adam;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto batch = sample_batch(tuples, by_id, cfg, std::uint64_t(step));
    const ContrastiveResult r = contrastive_loss(model, std::span<const MatchSample>(batch), cfg.margin, cfg.threads);
    if (curve != nullptr) curve->push_back({std::uint64_t(step), r.loss});
    adam.step(model.params(), r.gradient, cfg);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Matching and visualization.

// Nearest in-mask target pixel in descriptor space; ties go to the lowest
// row-major index.
inline Pixel match(const DescriptorImage& desc_s, const Pixel& u_s, const DescriptorImage& desc_t,
                   const Mask* mask_t = nullptr) {
  const int sx = int(std::lround(u_s.u));
  const int sy = int(std::lround(u_s.v));
  if (sx < 0 || sy < 0 || sx >= desc_s.width || sy >= desc_s.height)
    throw InvalidPixelError("match: source pixel outside the descriptor image");
  if (desc_s.dim != desc_t.dim) throw DomainError("match: descriptor dimensions differ");
  if (mask_t != nullptr && (mask_t->width != desc_t.width || mask_t->height != desc_t.height))
    throw DomainError("match: mask size differs from the target descriptor image");
  const double* f = desc_s.at(sx, sy);
  double best = std::numeric_limits<double>::infinity();
  Pixel arg{-1.0, -1.0};
  for (int y = 0; y < desc_t.height; ++y)
    for (int x = 0; x < desc_t.width; ++x) {
      if (mask_t != nullptr && !mask_t->at(x, y)) continue;
      const double d = descriptor_distance_sq(f, desc_t.at(x, y), desc_t.dim);
      if (d < best) {
        best = d;
        arg = {double(x), double(y)};
      }
    }
  if (arg.u < 0.0) throw DomainError("match: target mask is empty");
  return arg;
}

// Min-max normalizes each of the first three channels into an RGB image.
inline ImageRGB visualize(const DescriptorImage& d) {
  ImageRGB out(d.width, d.height);
  for (int c = 0; c < std::min(d.dim, 3); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) {
        lo = std::min(lo, d.at(x, y)[c]);
        hi = std::max(hi, d.at(x, y)[c]);
      }
    const double span = hi > lo ? hi - lo : 1.0;
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x) out.at(x, y)[c] = static_cast<float>((d.at(x, y)[c] - lo) / span);
  }
  return out;
}

// Model snapshot: "NSDESC\0\0", u32 version (1), u32 layers, hidden, dim,
// padding, u64 parameter count, f32 parameters; little-endian.
inline constexpr char kDescMagic[9] = "NSDESC\0";

template <typename Scalar>
std::string encode_model(const DescriptorModel<Scalar>& m) {
  std::string out(kDescMagic, 8);
  detail::put_u32(out, 1);
  detail::put_u32(out, std::uint32_t(m.arch().layers));
  detail::put_u32(out, std::uint32_t(m.arch().hidden));
  detail::put_u32(out, std::uint32_t(m.arch().dim));
  detail::put_u32(out, static_cast<std::uint32_t>(m.arch().padding));
  detail::put_u64(out, m.params().size());
  for (Scalar v : m.params()) detail::put_f32(out, float(v));
  return out;
}

inline DescriptorModel<float> decode_model(std::string bytes, const std::string& name = "model snapshot") {
  detail::ByteReader in(std::move(bytes), name);
  in.expect_magic(kDescMagic);
  if (in.u32() != 1) throw LoadError(name + ": unsupported version");
  DescriptorArch arch;
  arch.layers = int(in.u32());
  arch.hidden = int(in.u32());
  arch.dim = int(in.u32());
  const auto padding = in.u32();
  if (padding > 1) throw LoadError(name + ": unknown padding mode");
  arch.padding = static_cast<Padding>(padding);
  if (arch.layers < 1 || arch.layers > 64 || arch.hidden < 1 || arch.hidden > 4096 || arch.dim < 1 || arch.dim > 4096)
    throw LoadError(name + ": implausible architecture");
  DescriptorModel<float> m(arch);
  if (in.u64() != m.params().size()) throw LoadError(name + ": parameter count does not match architecture");
  for (float& v : m.params()) v = in.f32();
  in.finish();
  return m;
}

template <typename Scalar>
void save_model(const DescriptorModel<Scalar>& m, const std::string& path) {
  write_file(path, encode_model(m));
}
inline DescriptorModel<float> load_model(const std::string& path) { return decode_model(read_file(path), path); }

}  // namespace nerfsup
