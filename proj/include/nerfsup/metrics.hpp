// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Correspondence metrics (average end-point error, percentage of correct
// keypoints) and the evaluation harness that runs a matcher over analytic
// annotations.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nerfsup/descriptor.hpp"
#include "nerfsup/error.hpp"
#include "nerfsup/fixtures.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/optimizer.hpp"

namespace nerfsup {

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw DomainError(std::string(what) + ": prediction and ground-truth lengths differ");
  if (a == 0) throw DomainError(std::string(what) + ": needs at least one pair");
}
}  // namespace detail

inline double aepe(std::span<const Pixel> pred, std::span<const Pixel> gt) {
  detail::check_lengths(pred.size(), gt.size(), "aepe");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += pixel_distance(pred[i], gt[i]);
  return s / double(pred.size());
}

// Fraction of pairs closer than delta; a distance of exactly delta misses.
inline double pck(std::span<const Pixel> pred, std::span<const Pixel> gt, double delta) {
  detail::check_lengths(pred.size(), gt.size(), "pck");
  if (!(delta > 0.0)) throw DomainError("pck: threshold must be positive");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pixel_distance(pred[i], gt[i]) < delta ? 1 : 0;
  return double(hit) / double(pred.size());
}

inline const std::vector<double>& default_pck_thresholds() {
  static const std::vector<double> t{3.0, 5.0};
  return t;
}

struct EvalResult {
  std::string method;
  double aepe = 0.0;                // over valid predictions; infinite when there are none
  std::map<double, double> pck;     // threshold -> fraction of all annotations
  std::size_t n = 0;                // annotations
  std::size_t n_valid = 0;          // annotations that received a prediction

  double pck_at(double delta) const {
    const auto it = pck.find(delta);
    if (it == pck.end()) throw DomainError("eval: PCK threshold " + format_double(delta) + " was not computed");
    return it->second;
  }
};

// Aggregates per-annotation errors; a non-finite error marks an annotation
// without a prediction, which counts as a miss at every threshold.
inline EvalResult summarize_errors(std::span<const double> errors, std::span<const double> thresholds = default_pck_thresholds()) {
  if (errors.empty()) throw DomainError("eval: no annotations");
  EvalResult r;
  r.n = errors.size();
  double sum = 0.0;
  for (double e : errors)
    if (std::isfinite(e)) {
      sum += e;
      ++r.n_valid;
    }
  r.aepe = r.n_valid > 0 ? sum / double(r.n_valid) : std::numeric_limits<double>::infinity();
  for (double d : thresholds) {
    if (!(d > 0.0)) throw DomainError("eval: PCK thresholds must be positive");
    std::size_t hit = 0;
    for (double e : errors) hit += e < d ? 1 : 0;
    r.pck[d] = double(hit) / double(r.n);
  }
  return r;
}

// A matcher maps (annotation) to a predicted target pixel, or nothing.
using Matcher = std::function<std::optional<Pixel>(const AnnotatedCorrespondence&)>;

inline EvalResult evaluate_matcher(const Matcher& matcher, std::span<const AnnotatedCorrespondence> annotations,
                                   std::span<const double> thresholds = default_pck_thresholds()) {
  if (annotations.empty()) throw DomainError("eval: empty annotation set");
  std::vector<double> errors;
  for (const AnnotatedCorrespondence& a : annotations) {
    const auto p = matcher(a);
    errors.push_back(p ? a.error(*p) : std::numeric_limits<double>::infinity());
  }
  return summarize_errors(errors, thresholds);
}

// Descriptor matcher: dense descriptors per image (computed once, in
// parallel), nearest neighbour inside the target mask.
template <typename Scalar>
EvalResult evaluate_descriptors(const DescriptorModel<Scalar>& model, std::span<const PosedImage> images,
                                std::span<const AnnotatedCorrespondence> annotations, int threads = 1,
                                std::map<std::string, DescriptorImage>* descriptors_out = nullptr) {
  std::map<std::string, const PosedImage*> by_id;
  for (const PosedImage& im : images) by_id[im.id] = &im;
  std::vector<DescriptorImage> desc(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { desc[i] = forward(model, images[i].image); });
  std::map<std::string, const DescriptorImage*> desc_by_id;
  for (std::size_t i = 0; i < images.size(); ++i) desc_by_id[images[i].id] = &desc[i];
  EvalResult r = evaluate_matcher(
      [&](const AnnotatedCorrespondence& a) -> std::optional<Pixel> {
        const auto s = desc_by_id.find(a.src_id);
        const auto t = desc_by_id.find(a.tgt_id);
        if (s == desc_by_id.end() || t == desc_by_id.end())
          throw DatasetError("eval: annotation references unknown image '" +
                             (s == desc_by_id.end() ? a.src_id : a.tgt_id) + "'");
        const PosedImage& tgt = *by_id.at(a.tgt_id);
        return match(*s->second, a.u_s, *t->second, tgt.mask ? &*tgt.mask : nullptr);
      },
      annotations);
  if (descriptors_out != nullptr)
    for (std::size_t i = 0; i < images.size(); ++i) (*descriptors_out)[images[i].id] = std::move(desc[i]);
  return r;
}

inline std::string eval_csv_header() { return "method,n,aepe,pck3,pck5\n"; }
inline std::string eval_csv_row(const EvalResult& r) {
  return r.method + "," + std::to_string(r.n) + "," + format_double(r.aepe) + "," + format_double(r.pck_at(3.0)) + "," +
         format_double(r.pck_at(5.0)) + "\n";
}

// Peak signal-to-noise ratio in dB for images in [0, 1].
inline double psnr(const ImageRGB& a, const ImageRGB& b) {
  if (a.width != b.width || a.height != b.height) throw DomainError("psnr: image sizes differ");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (double(a.data[i]) - b.data[i]) * (double(a.data[i]) - b.data[i]);
  const double mse = se / double(a.data.size());
  return mse > 0.0 ? -10.0 * std::log10(mse) : std::numeric_limits<double>::infinity();
}

}  // namespace nerfsup
