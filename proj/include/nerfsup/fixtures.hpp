// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Named synthetic fixtures (scene + camera rig + seed), rendering them into
// posed-image datasets with sparse depth, analytic correspondence
// annotations, and a JSON description that reproduces a fixture exactly.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerfsup/error.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/parallel.hpp"
#include "nerfsup/rng.hpp"
#include "nerfsup/scene.hpp"

namespace nerfsup {

struct FixtureParams {
  std::string name = "slab";
  std::uint64_t seed = 0;
  int width = 64;
  int height = 64;
  double focal = 80.0;
  double camera_distance = 3.2;
  int views = 16;      // training views; ignored by fixtures with a fixed rig
  int test_views = 4;  // held-out views
  int sparse_depth_per_view = 48;
  int annotations = 100;
};

struct CameraRig {
  CameraIntrinsics intr;
  std::vector<std::string> ids;
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }
  void add(std::string id, const Pose& pose) {
    ids.push_back(std::move(id));
    poses.push_back(pose);
  }
};

// Image-space darkening of a disc in one view, standing in for a transient
// shadow that the static scene cannot explain.
struct ShadowSpec {
  std::string view_id;
  Pixel center;
  double radius = 0.0;
  double factor = 1.0;
};

struct Fixture {
  FixtureParams params;
  SyntheticScene scene;
  CameraRig train;
  CameraRig test;
  std::vector<ShadowSpec> shadows;
};

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names{"slab", "sphere", "thin_rod", "paired_sheets", "transient_shadow"};
  return names;
}

// Camera on a sphere around `target`: azimuth about +Y measured from +Z,
// elevation towards +Y, both in degrees.
inline Pose orbit_pose(double azimuth_deg, double elevation_deg, double distance, const Vec3& target = Vec3::Zero()) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Vec3 eye = target + distance * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  return Pose::look_at(eye, target);
}

namespace detail {

inline std::string view_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03zu", prefix, i);
  return buf;
}

inline CameraIntrinsics fixture_intrinsics(const FixtureParams& p) {
  if (p.width < 8 || p.height < 8) throw ConfigError("fixture: images must be at least 8x8");
  if (!(p.focal > 0.0) || !(p.camera_distance > 0.0)) throw ConfigError("fixture: focal and distance must be positive");
  CameraIntrinsics intr{p.focal, p.focal, 0.5 * (p.width - 1), 0.5 * (p.height - 1), p.width, p.height};
  intr.validate();
  return intr;
}

// Full circle of training views with alternating elevations; test views sit
// halfway between training azimuths.
inline void ring_rig(Fixture& f, double elevation_a, double elevation_b) {
  const FixtureParams& p = f.params;
  if (p.views < 2) throw ConfigError("fixture '" + p.name + "': needs at least 2 views");
  if (p.test_views < 0) throw ConfigError("fixture: test view count must be non-negative");
  for (int i = 0; i < p.views; ++i)
    f.train.add(view_id("view", std::size_t(i)),
                orbit_pose(360.0 * i / p.views, i % 2 == 0 ? elevation_a : elevation_b, p.camera_distance));
  for (int i = 0; i < p.test_views; ++i)
    f.test.add(view_id("test", std::size_t(i)),
               orbit_pose(360.0 * (i + 0.5) / std::max(p.test_views, 1) + 11.25, 0.5 * (elevation_a + elevation_b),
                          p.camera_distance));
}

// Views spread over the front hemisphere (azimuth within +-span).
inline void front_rig(Fixture& f, double span, double elevation) {
  const FixtureParams& p = f.params;
  if (p.views < 2) throw ConfigError("fixture '" + p.name + "': needs at least 2 views");
  if (p.test_views < 0) throw ConfigError("fixture: test view count must be non-negative");
  for (int i = 0; i < p.views; ++i) {
    const double az = -span + 2.0 * span * i / (p.views - 1);
    f.train.add(view_id("view", std::size_t(i)), orbit_pose(az, i % 2 == 0 ? elevation : -elevation, p.camera_distance));
  }
  for (int i = 0; i < p.test_views; ++i) {
    const double az = -span + 2.0 * span * (i + 0.5) / std::max(p.test_views, 1);
    f.test.add(view_id("test", std::size_t(i)), orbit_pose(az, i % 2 == 0 ? 0.5 * elevation : -0.5 * elevation,
                                                           p.camera_distance));
  }
}

inline Texture fixture_texture(const FixtureParams& p, std::uint64_t key, const Vec3& base, double frequency,
                               double amplitude = 0.12) {
  Rng rng(p.seed, {stream::kFixture, key});
  return Texture::random(rng, base, amplitude, 3, frequency);
}

}  // namespace detail

inline constexpr double kOpaqueDensity = 400.0;

inline Fixture make_fixture(const FixtureParams& params) {
  Fixture f;
  f.params = params;
  f.train.intr = f.test.intr = detail::fixture_intrinsics(params);
  const Aabb box{Vec3::Constant(-1.0), Vec3::Constant(1.0)};
  const std::string& name = params.name;
  std::vector<Primitive> prims;
  if (name == "slab" || name == "transient_shadow") {
    prims.push_back(Primitive::box("slab", Vec3(-0.55, -0.55, -0.2), Vec3(0.55, 0.55, 0.2), kOpaqueDensity,
                                   detail::fixture_texture(params, 1, Vec3(0.55, 0.45, 0.4), 9.0)));
    detail::ring_rig(f, 20.0, 40.0);
    if (name == "transient_shadow") {
      // A dark disc over the object in every third training view.
      Rng rng(params.seed, {stream::kFixture, 100});
      for (std::size_t i = 0; i < f.train.size(); i += 3) {
        const double r = 0.22 * params.width;
        const Pixel c{f.train.intr.cx + rng.uniform(-0.12, 0.12) * params.width,
                      f.train.intr.cy + rng.uniform(-0.12, 0.12) * params.height};
        f.shadows.push_back({f.train.ids[i], c, r, 0.4});
      }
    }
  } else if (name == "sphere") {
    prims.push_back(Primitive::sphere("sphere", Vec3::Zero(), 0.6, kOpaqueDensity,
                                      detail::fixture_texture(params, 1, Vec3(0.4, 0.5, 0.55), 9.0)));
    detail::ring_rig(f, 15.0, 35.0);
  } else if (name == "thin_rod") {
    prims.push_back(Primitive::box("plate", Vec3(-0.7, -0.7, -0.45), Vec3(0.7, 0.7, -0.35), kOpaqueDensity,
                                   detail::fixture_texture(params, 1, Vec3(0.5, 0.5, 0.5), 8.0)));
    prims.push_back(Primitive::box("rod_a", Vec3(-0.32, -0.6, 0.18), Vec3(-0.28, 0.6, 0.22), kOpaqueDensity,
                                   Texture::uniform(Vec3(0.9, 0.2, 0.15))));
    prims.push_back(Primitive::box("rod_b", Vec3(0.23, -0.6, 0.28), Vec3(0.27, 0.6, 0.32), kOpaqueDensity,
                                   Texture::uniform(Vec3(0.15, 0.3, 0.9))));
    detail::front_rig(f, 50.0, 15.0);
  } else if (name == "paired_sheets") {
    // A semi-transparent sheet absorbing half of the light in front of a larger
    // opaque one, plus an opaque post in front of both that hides different
    // parts of the sheets from different views. The front texture is busy and
    // the back one nearly flat.
    const double front_thickness = 0.08;
    prims.push_back(Primitive::box("front_sheet", Vec3(-0.56, -0.56, 0.42), Vec3(0.56, 0.56, 0.42 + front_thickness),
                                   std::numbers::ln2 / front_thickness,
                                   detail::fixture_texture(params, 1, Vec3(0.6, 0.45, 0.35), 22.0, 0.15)));
    prims.push_back(Primitive::box("back_sheet", Vec3(-0.65, -0.65, -0.5), Vec3(0.65, 0.65, -0.44), kOpaqueDensity,
                                   detail::fixture_texture(params, 2, Vec3(0.35, 0.5, 0.6), 14.0, 0.05)));
    prims.push_back(Primitive::box("post", Vec3(-0.06, -0.75, 0.78), Vec3(0.06, 0.75, 0.9), kOpaqueDensity,
                                   Texture::uniform(Vec3(0.1, 0.1, 0.1))));
    detail::front_rig(f, 45.0, 12.0);
  } else {
    throw ConfigError("unknown fixture '" + name + "'");
  }
  f.scene = SyntheticScene(std::move(prims), box);
  return f;
}

// ---------------------------------------------------------------------------
// Rendering a rig into a dataset.

inline void apply_shadow(ImageRGB& img, const ShadowSpec& s) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (std::hypot(x - s.center.u, y - s.center.v) <= s.radius)
        for (int ch = 0; ch < 3; ++ch) img.at(x, y)[ch] = static_cast<float>(img.at(x, y)[ch] * s.factor);
}

// Renders every view of `rig` with the exact integrator. Sparse depth points
// are drawn uniformly from pixels with a surface, keyed by (seed, view).
inline std::vector<PosedImage> render_rig(const Fixture& f, const CameraRig& rig, bool with_shadows,
                                          int threads = 1, std::vector<DepthMap>* depth_out = nullptr) {
  std::vector<PosedImage> out(rig.size());
  std::vector<DepthMap> depths(rig.size());
  parallel_for(rig.size(), threads, [&](std::size_t i) {
    const AnalyticView view = render_analytic(f.scene, rig.intr, rig.poses[i]);
    PosedImage& im = out[i];
    im.id = rig.ids[i];
    im.intr = rig.intr;
    im.pose = rig.poses[i];
    im.image = view.image;
    im.mask = view.mask;
    if (with_shadows)
      for (const ShadowSpec& s : f.shadows)
        if (s.view_id == im.id) apply_shadow(im.image, s);
    std::vector<std::size_t> candidates;
    for (std::size_t p = 0; p < view.depth.data.size(); ++p)
      if (view.depth.data[p] > 0.0f) candidates.push_back(p);
    Rng rng(f.params.seed, {stream::kFixture, 200, i});
    const std::size_t n = std::min<std::size_t>(candidates.size(), std::size_t(std::max(f.params.sparse_depth_per_view, 0)));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t j = k + rng.uniform_index(candidates.size() - k);
      std::swap(candidates[k], candidates[j]);
    }
    candidates.resize(n);
    std::sort(candidates.begin(), candidates.end());
    for (std::size_t p : candidates) {
      const Pixel px{double(p % std::size_t(rig.intr.width)), double(p / std::size_t(rig.intr.width))};
      const Ray ray = generate_ray(rig.intr, rig.poses[i], px);
      const double t = depth_to_distance(rig.intr, px, view.depth.data[p]);
      im.sparse_depth.push_back(depth_point_from_keypoint(im.id, px, ray.at(t), rig.poses[i]));
    }
    depths[i] = view.depth;
  });
  if (depth_out != nullptr) *depth_out = std::move(depths);
  return out;
}

// ---------------------------------------------------------------------------
// Annotations: analytic correspondences between held-out views.

struct AnnotatedCorrespondence {
  std::string src_id;
  Pixel u_s;
  std::string tgt_id;
  Pixel u_t_gt;                    // first genuine correspondence along the source ray
  std::vector<Pixel> alternates;   // further genuine correspondences (semi-transparent surfaces)

  double error(const Pixel& predicted) const {
    double e = pixel_distance(u_t_gt, predicted);
    for (const Pixel& a : alternates) e = std::min(e, pixel_distance(a, predicted));
    return e;
  }
};

// Draws ordered view pairs and in-mask integer source pixels until `count`
// annotations with a genuine correspondence are found.
inline std::vector<AnnotatedCorrespondence> make_annotations(const Fixture& f, const CameraRig& rig,
                                                             const std::vector<PosedImage>& images, int count,
                                                             const GroundTruthOptions& opt = {}) {
  if (rig.size() < 2) throw ConfigError("annotations need at least 2 views");
  std::vector<AnnotatedCorrespondence> out;
  Rng rng(f.params.seed, {stream::kAnnotations});
  const std::uint64_t n = rig.size();
  const int max_attempts = 200 * std::max(count, 1);
  for (int attempt = 0; attempt < max_attempts && int(out.size()) < count; ++attempt) {
    const std::uint64_t a = rng.uniform_index(n);
    const std::uint64_t b = (a + 1 + rng.uniform_index(n - 1)) % n;
    const int x = int(rng.uniform_index(std::uint64_t(rig.intr.width)));
    const int y = int(rng.uniform_index(std::uint64_t(rig.intr.height)));
    const Pixel u_s{double(x), double(y)};
    if (!images[a].in_mask(u_s)) continue;
    const GroundTruth gt = analytic_ground_truth(f.scene, rig.intr, rig.poses[a], rig.intr, rig.poses[b], u_s, opt);
    const std::vector<Pixel> targets = gt.valid_targets();
    if (targets.empty()) continue;
    AnnotatedCorrespondence ann{rig.ids[a], u_s, rig.ids[b], targets.front(), {}};
    ann.alternates.assign(targets.begin() + 1, targets.end());
    out.push_back(std::move(ann));
  }
  if (int(out.size()) < count) throw DatasetError("could not find enough annotatable pixels");
  return out;
}

// CSV with one row per genuine target; rows of one annotation share `id` and
// the first row holds the primary target.
inline std::string annotations_to_csv(const std::vector<AnnotatedCorrespondence>& anns) {
  std::string out = "id,src_id,us_x,us_y,tgt_id,ut_x,ut_y\n";
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const auto& a = anns[i];
    auto row = [&](const Pixel& t) {
      out += std::to_string(i) + "," + a.src_id + "," + format_double(a.u_s.u) + "," + format_double(a.u_s.v) + "," +
             a.tgt_id + "," + format_double(t.u) + "," + format_double(t.v) + "\n";
    };
    row(a.u_t_gt);
    for (const Pixel& alt : a.alternates) row(alt);
  }
  return out;
}

inline std::vector<AnnotatedCorrespondence> annotations_from_csv(std::string_view text,
                                                                 const std::string& name = "annotations") {
  const auto rows = detail::lines(text);
  if (rows.empty() || rows.front() != "id,src_id,us_x,us_y,tgt_id,ut_x,ut_y")
    throw LoadError(name + ": missing or wrong header");
  std::vector<AnnotatedCorrespondence> out;
  std::string last_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = name + ":" + std::to_string(r + 1);
    const auto f = detail::split(rows[r], ',');
    if (f.size() != 7) throw LoadError(where + ": expected 7 fields");
    const Pixel u_s{parse_double(f[2], where), parse_double(f[3], where)};
    const Pixel u_t{parse_double(f[5], where), parse_double(f[6], where)};
    if (!out.empty() && f[0] == last_id) {
      const auto& a = out.back();
      if (a.src_id != f[1] || a.tgt_id != f[4] || !(a.u_s == u_s))
        throw LoadError(where + ": alternate target disagrees with its annotation");
      out.back().alternates.push_back(u_t);
      continue;
    }
    last_id = std::string(f[0]);
    out.push_back({std::string(f[1]), u_s, std::string(f[4]), u_t, {}});
  }
  if (out.empty()) throw LoadError(name + ": no annotations");
  return out;
}

inline void save_annotations(const std::string& path, const std::vector<AnnotatedCorrespondence>& anns) {
  write_file(path, annotations_to_csv(anns));
}
inline std::vector<AnnotatedCorrespondence> load_annotations(const std::string& path) {
  return annotations_from_csv(read_file(path), path);
}

// ---------------------------------------------------------------------------
// JSON description.

namespace detail {

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw LoadError("fixture: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json rig_to_json(const CameraRig& rig) {
  nlohmann::json views = nlohmann::json::array();
  for (std::size_t i = 0; i < rig.size(); ++i)
    views.push_back({{"id", rig.ids[i]}, {"pose", rig.poses[i].to_matrix()}});
  return views;
}

inline CameraRig rig_from_json(const nlohmann::json& j, const CameraIntrinsics& intr) {
  CameraRig rig;
  rig.intr = intr;
  for (const auto& v : j) rig.add(v.at("id").get<std::string>(), Pose::from_matrix(v.at("pose").get<std::array<double, 16>>(), 1e-6));
  return rig;
}

}  // namespace detail

inline nlohmann::json fixture_to_json(const Fixture& f) {
  using nlohmann::json;
  const FixtureParams& p = f.params;
  json prims = json::array();
  for (const Primitive& pr : f.scene.primitives()) {
    json waves = json::array();
    for (const auto& w : pr.texture.waves)
      waves.push_back({{"channel", w.channel}, {"frequency", detail::to_json(w.frequency)}, {"phase", w.phase}});
    json jp{{"name", pr.name},
            {"kind", pr.kind == Primitive::Kind::kBox ? "box" : "sphere"},
            {"density", pr.density},
            {"texture", {{"base", detail::to_json(pr.texture.base)}, {"amplitude", pr.texture.amplitude}, {"waves", waves}}}};
    if (pr.kind == Primitive::Kind::kBox) {
      jp["lo"] = detail::to_json(pr.lo);
      jp["hi"] = detail::to_json(pr.hi);
    } else {
      jp["center"] = detail::to_json(pr.center);
      jp["radius"] = pr.radius;
    }
    prims.push_back(jp);
  }
  json shadows = json::array();
  for (const ShadowSpec& s : f.shadows)
    shadows.push_back({{"view", s.view_id}, {"center", {s.center.u, s.center.v}}, {"radius", s.radius}, {"factor", s.factor}});
  const CameraIntrinsics& in = f.train.intr;
  return json{{"fixture", p.name},
              {"seed", p.seed},
              {"params",
               {{"width", p.width}, {"height", p.height}, {"focal", p.focal}, {"camera_distance", p.camera_distance},
                {"views", p.views}, {"test_views", p.test_views}, {"sparse_depth_per_view", p.sparse_depth_per_view},
                {"annotations", p.annotations}}},
              {"bbox", {{"lo", detail::to_json(f.scene.bbox().lo)}, {"hi", detail::to_json(f.scene.bbox().hi)}}},
              {"primitives", prims},
              {"intrinsics", {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}}},
              {"views", detail::rig_to_json(f.train)},
              {"test_views", detail::rig_to_json(f.test)},
              {"shadows", shadows}};
}

inline Fixture fixture_from_json(const nlohmann::json& j) {
  try {
    Fixture f;
    FixtureParams& p = f.params;
    p.name = j.at("fixture").get<std::string>();
    p.seed = j.at("seed").get<std::uint64_t>();
    const auto& jp = j.at("params");
    p.width = jp.at("width").get<int>();
    p.height = jp.at("height").get<int>();
    p.focal = jp.at("focal").get<double>();
    p.camera_distance = jp.at("camera_distance").get<double>();
    p.views = jp.at("views").get<int>();
    p.test_views = jp.at("test_views").get<int>();
    p.sparse_depth_per_view = jp.at("sparse_depth_per_view").get<int>();
    p.annotations = jp.at("annotations").get<int>();
    std::vector<Primitive> prims;
    for (const auto& jpr : j.at("primitives")) {
      Primitive pr;
      pr.name = jpr.at("name").get<std::string>();
      const std::string kind = jpr.at("kind").get<std::string>();
      pr.density = jpr.at("density").get<double>();
      if (kind == "box") {
        pr.kind = Primitive::Kind::kBox;
        pr.lo = detail::vec3_from_json(jpr.at("lo"));
        pr.hi = detail::vec3_from_json(jpr.at("hi"));
      } else if (kind == "sphere") {
        pr.kind = Primitive::Kind::kSphere;
        pr.center = detail::vec3_from_json(jpr.at("center"));
        pr.radius = jpr.at("radius").get<double>();
      } else {
        throw LoadError("fixture: unknown primitive kind '" + kind + "'");
      }
      const auto& jt = jpr.at("texture");
      pr.texture.base = detail::vec3_from_json(jt.at("base"));
      pr.texture.amplitude = jt.at("amplitude").get<double>();
      for (const auto& w : jt.at("waves"))
        pr.texture.waves.push_back(
            {w.at("channel").get<int>(), detail::vec3_from_json(w.at("frequency")), w.at("phase").get<double>()});
      prims.push_back(std::move(pr));
    }
    const Aabb box{detail::vec3_from_json(j.at("bbox").at("lo")), detail::vec3_from_json(j.at("bbox").at("hi"))};
    f.scene = SyntheticScene(std::move(prims), box);
    const auto& ji = j.at("intrinsics");
    CameraIntrinsics intr{ji.at("fx").get<double>(), ji.at("fy").get<double>(), ji.at("cx").get<double>(),
                          ji.at("cy").get<double>(), ji.at("width").get<int>(), ji.at("height").get<int>()};
    intr.validate();
    f.train = detail::rig_from_json(j.at("views"), intr);
    f.test = detail::rig_from_json(j.at("test_views"), intr);
    for (const auto& s : j.at("shadows"))
      f.shadows.push_back({s.at("view").get<std::string>(), {s.at("center")[0].get<double>(), s.at("center")[1].get<double>()},
                           s.at("radius").get<double>(), s.at("factor").get<double>()});
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("fixture description: ") + e.what());
  } catch (const DomainError& e) {
    throw LoadError(std::string("fixture description: ") + e.what());
  }
}

}  // namespace nerfsup
