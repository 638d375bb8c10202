// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Correspondence generation from a radiance field. A source pixel's ray is
// rendered into a termination distribution; the depth-map method reprojects
// its expectation, the density-field method reprojects one draw from it.
// A cycle check maps the target pixel back with the same method and keeps the
// tuple only if it lands near the source pixel.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerfsup/error.hpp"
#include "nerfsup/field.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/renderer.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

enum class GenMethod { kDepthMap, kDensityField };

inline std::string method_name(GenMethod m) { return m == GenMethod::kDepthMap ? "depth_map" : "density_field"; }

// Accepts both the CSV spelling (depth_map) and the flag spelling (depth-map).
inline GenMethod parse_method(std::string_view s) {
  if (s == "depth_map" || s == "depth-map") return GenMethod::kDepthMap;
  if (s == "density_field" || s == "density-field") return GenMethod::kDensityField;
  throw ConfigError("unknown generation method '" + std::string(s) + "'");
}

struct CorrespondenceTuple {
  std::string src_id;
  Pixel u_s;
  std::string tgt_id;
  Pixel u_t;
  double sampled_depth = 0.0;  // distance along the source ray
  double weight = 1.0;         // normalized mass of the drawn interval; 1 for depth maps
  GenMethod method = GenMethod::kDepthMap;

  friend bool operator==(const CorrespondenceTuple&, const CorrespondenceTuple&) = default;
};

struct GenConfig {
  int pairs = 64;              // ordered image pairs drawn per run
  int samples_per_pair = 64;   // source pixels per pair
  double cycle_threshold = 2.0;
  bool cycle_check = true;
  int k_samples = 192;
  std::uint64_t seed = 0;
  GenMethod method = GenMethod::kDensityField;
  bool jitter = false;                  // uniform offset inside the drawn interval
  bool reverse_expected_depth = false;  // cycle check reverses with the expectation instead of a draw
  double empty_threshold = kEmptyRayMass;
  int threads = 1;

  void validate() const {
    if (pairs < 0 || samples_per_pair < 0) throw ConfigError("gen: counts must be non-negative");
    if (!(cycle_threshold > 0.0)) throw ConfigError("gen: cycle threshold must be positive");
    if (k_samples < 2) throw ConfigError("gen: need at least 2 samples per ray");
    if (!(empty_threshold >= 0.0)) throw ConfigError("gen: empty-ray threshold must be non-negative");
  }
};

enum class Rejection { kNone, kEmptyRay, kOutOfBounds, kCycle };

// One directed mapping of a pixel into another view.
struct PixelMapping {
  Rejection status = Rejection::kNone;
  Pixel target;
  double distance = 0.0;
  double weight = 1.0;
};

// Maps `u` in `from` into `to` by the given method. `rng` is consumed only
// by the density-field method (one uniform, plus one for jitter).
template <typename Scalar>
PixelMapping map_pixel(const VoxelField<Scalar>& field, const PosedImage& from, const PosedImage& to, const Pixel& u,
                       GenMethod method, const GenConfig& cfg, Rng& rng) {
  PixelMapping out;
  const auto ray = clip_to_box(generate_ray(from.intr, from.pose, u), field.bbox());
  if (!ray) {
    out.status = Rejection::kEmptyRay;
    return out;
  }
  const RaySamples s = march(field, *ray, cfg.k_samples, false);
  const DepthDistribution dist = depth_distribution(s, cfg.empty_threshold);
  if (dist.empty) {
    out.status = Rejection::kEmptyRay;
    return out;
  }
  if (method == GenMethod::kDepthMap) {
    out.distance = dist.expectation();
  } else {
    const std::size_t k = dist.draw(rng.uniform());
    out.distance = cfg.jitter ? rng.uniform(dist.lower[k], dist.upper[k]) : dist.t[k];
    out.weight = dist.w_normalized[k];
  }
  const double depth = distance_to_depth(from.intr, u, out.distance);
  if (!(depth > 0.0)) {
    out.status = Rejection::kEmptyRay;
    return out;
  }
  const Reprojection r = reproject(u, depth, from.intr, from.pose, to.intr, to.pose);
  out.target = r.pixel;
  if (!r.valid || !to.in_mask(r.pixel)) out.status = Rejection::kOutOfBounds;
  return out;
}

// Maps u_t back into the source view and accepts iff it lands strictly closer
// than `threshold` to u_s.
template <typename Scalar>
bool cycle_check(const VoxelField<Scalar>& field, const PosedImage& src, const PosedImage& tgt, const Pixel& u_s,
                 const Pixel& u_t, double threshold, GenMethod method, const GenConfig& cfg, Rng& rng) {
  if (!tgt.intr.contains(u_t)) throw InvalidPixelError("cycle check: target pixel outside image '" + tgt.id + "'");
  const GenMethod reverse =
      method == GenMethod::kDensityField && cfg.reverse_expected_depth ? GenMethod::kDepthMap : method;
  const PixelMapping back = map_pixel(field, tgt, src, u_t, reverse, cfg, rng);
  if (back.status == Rejection::kEmptyRay) return false;
  if (!src.intr.contains(back.target)) return false;
  return pixel_distance(back.target, u_s) < threshold;
}

struct GenOutcome {
  Rejection status = Rejection::kNone;
  CorrespondenceTuple tuple;
  bool accepted() const { return status == Rejection::kNone; }
};

template <typename Scalar>
GenOutcome generate_one(const VoxelField<Scalar>& field, const PosedImage& src, const PosedImage& tgt,
                        const Pixel& u_s, GenMethod method, const GenConfig& cfg, Rng& rng) {
  if (!src.in_mask(u_s)) throw InvalidPixelError("gen: source pixel outside the mask of '" + src.id + "'");
  GenOutcome out;
  const PixelMapping fwd = map_pixel(field, src, tgt, u_s, method, cfg, rng);
  out.status = fwd.status;
  if (fwd.status != Rejection::kNone) return out;
  if (cfg.cycle_check && !cycle_check(field, src, tgt, u_s, fwd.target, cfg.cycle_threshold, method, cfg, rng)) {
    out.status = Rejection::kCycle;
    return out;
  }
  out.tuple = {src.id, u_s, tgt.id, fwd.target, fwd.distance, fwd.weight, method};
  return out;
}

template <typename Scalar>
GenOutcome gen_depth_map(const VoxelField<Scalar>& field, const PosedImage& src, const PosedImage& tgt,
                         const Pixel& u_s, const GenConfig& cfg, Rng& rng) {
  return generate_one(field, src, tgt, u_s, GenMethod::kDepthMap, cfg, rng);
}

template <typename Scalar>
GenOutcome gen_density_field(const VoxelField<Scalar>& field, const PosedImage& src, const PosedImage& tgt,
                             const Pixel& u_s, const GenConfig& cfg, Rng& rng) {
  return generate_one(field, src, tgt, u_s, GenMethod::kDensityField, cfg, rng);
}

// ---------------------------------------------------------------------------
// Whole-dataset generation.

struct GenerationReport {
  std::string method;
  std::uint64_t attempted = 0;
  std::uint64_t emitted = 0;
  std::uint64_t rejected_empty_ray = 0;
  std::uint64_t rejected_out_of_bounds = 0;  // includes targets outside the target mask
  std::uint64_t rejected_cycle = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    return {{"method", method},
            {"attempted", attempted},
            {"emitted", emitted},
            {"rejected_empty_ray", rejected_empty_ray},
            {"rejected_out_of_bounds", rejected_out_of_bounds},
            {"rejected_cycle", rejected_cycle},
            {"warnings", warnings}};
  }
};

struct GenerationResult {
  std::vector<CorrespondenceTuple> tuples;
  GenerationReport report;
};

// Pairs are uniform over ordered pairs of distinct usable images (images with
// at least one in-mask pixel), source pixels uniform over the source mask.
// Pair p draws from stream (seed, p), sample j of it from (seed, p, j); tuples
// come out in (p, j) order whatever the thread count.
template <typename Scalar>
GenerationResult generate_dataset(const VoxelField<Scalar>& field, std::span<const PosedImage> images,
                                  const GenConfig& cfg) {
  cfg.validate();
  if (images.size() < 2) throw DatasetError("gen: need at least 2 images");
  GenerationResult result;
  result.report.method = method_name(cfg.method);
  std::vector<const PosedImage*> usable;
  std::vector<std::vector<Pixel>> pixels;
  for (const PosedImage* im : detail::canonical_order(images)) {
    std::vector<Pixel> in;
    for (int y = 0; y < im->intr.height; ++y)
      for (int x = 0; x < im->intr.width; ++x)
        if (im->in_mask({double(x), double(y)})) in.push_back({double(x), double(y)});
    if (in.empty()) {
      result.report.warnings.push_back("image '" + im->id + "' has an empty mask and was skipped");
      continue;
    }
    usable.push_back(im);
    pixels.push_back(std::move(in));
  }
  if (usable.size() < 2) {
    result.report.warnings.push_back("fewer than 2 images with in-mask pixels; nothing generated");
    return result;
  }
  const std::size_t per_pair = std::size_t(cfg.samples_per_pair);
  const std::size_t total = std::size_t(cfg.pairs) * per_pair;
  std::vector<std::pair<std::size_t, std::size_t>> pair_of(std::size_t(cfg.pairs));
  for (std::size_t p = 0; p < pair_of.size(); ++p) {
    Rng rng(cfg.seed, {stream::kPairs, p});
    const std::size_t a = rng.uniform_index(usable.size());
    const std::size_t b = (a + 1 + rng.uniform_index(usable.size() - 1)) % usable.size();
    pair_of[p] = {a, b};
  }
  std::vector<GenOutcome> outcomes(total);
  parallel_for(total, cfg.threads, [&](std::size_t i) {
    const std::size_t p = i / per_pair;
    const std::size_t j = i % per_pair;
    const auto [a, b] = pair_of[p];
    Rng pick(cfg.seed, {stream::kPixels, p, j});
    const Pixel u_s = pixels[a][pick.uniform_index(pixels[a].size())];
    Rng rng(cfg.seed, {stream::kCorrespondence, p, j});
    outcomes[i] = generate_one(field, *usable[a], *usable[b], u_s, cfg.method, cfg, rng);
  });
  GenerationReport& rep = result.report;
  for (const GenOutcome& o : outcomes) {
    ++rep.attempted;
    switch (o.status) {
      case Rejection::kNone:
        ++rep.emitted;
        result.tuples.push_back(o.tuple);
        break;
      case Rejection::kEmptyRay: ++rep.rejected_empty_ray; break;
      case Rejection::kOutOfBounds: ++rep.rejected_out_of_bounds; break;
      case Rejection::kCycle: ++rep.rejected_cycle; break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tuple CSV.

inline constexpr std::string_view kTupleHeader = "src_id,us_x,us_y,tgt_id,ut_x,ut_y,depth,weight,method";

inline std::string tuples_to_csv(std::span<const CorrespondenceTuple> tuples) {
  std::string out(kTupleHeader);
  out += '\n';
  for (const CorrespondenceTuple& t : tuples) {
    out += t.src_id + ',' + format_double(t.u_s.u) + ',' + format_double(t.u_s.v) + ',' + t.tgt_id + ',' +
           format_double(t.u_t.u) + ',' + format_double(t.u_t.v) + ',' + format_double(t.sampled_depth) + ',' +
           format_double(t.weight) + ',' + method_name(t.method) + '\n';
  }
  return out;
}

inline std::vector<CorrespondenceTuple> tuples_from_csv(std::string_view text, const std::string& name = "tuples") {
  const auto rows = detail::lines(text);
  if (rows.empty() || rows.front() != kTupleHeader) throw LoadError(name + ": missing or wrong header");
  std::vector<CorrespondenceTuple> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = name + ":" + std::to_string(r + 1);
    const auto f = detail::split(rows[r], ',');
    if (f.size() != 9) throw LoadError(where + ": expected 9 fields");
    CorrespondenceTuple t;
    t.src_id = std::string(f[0]);
    t.u_s = {parse_double(f[1], where), parse_double(f[2], where)};
    t.tgt_id = std::string(f[3]);
    t.u_t = {parse_double(f[4], where), parse_double(f[5], where)};
    t.sampled_depth = parse_double(f[6], where);
    t.weight = parse_double(f[7], where);
    try {
      t.method = parse_method(f[8]);
    } catch (const ConfigError& e) {
      throw LoadError(where + ": " + e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline void save_tuples(const std::string& path, std::span<const CorrespondenceTuple> tuples) {
  write_file(path, tuples_to_csv(tuples));
}
inline std::vector<CorrespondenceTuple> load_tuples(const std::string& path) {
  return tuples_from_csv(read_file(path), path);
}

}  // namespace nerfsup
