// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

// Dataset manifests. A manifest is a JSON document:
//
//   {
//     "version": 1,
//     "convention": "...",                 // informational
//     "intrinsics": {"fx", "fy", "cx", "cy", "width", "height"},
//     "bbox": {"lo": [x, y, z], "hi": [x, y, z]},          // optional
//     "images": [
//       {"id": "view_000", "image": "images/view_000.png",
//        "pose": [16 numbers, row-major 4x4 camera-to-world],
//        "intrinsics": {...},               // optional per-image override
//        "mask": "masks/view_000.png",      // optional
//        "sparse_depth": [{"u", "v", "depth"} or {"u", "v", "kx", "ky", "kz"}]}
//     ]
//   }
//
// Paths are relative to the manifest's directory. Camera frame: +x right,
// +y down, +z forward; integer pixel coordinates are pixel centers.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nerfsup/error.hpp"
#include "nerfsup/geometry.hpp"
#include "nerfsup/image.hpp"
#include "nerfsup/io.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/rng.hpp"

namespace nerfsup {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kPoseConvention =
    "pose: row-major 4x4 camera-to-world; camera frame +x right, +y down, +z forward; "
    "integer pixel coordinates address pixel centers";

struct Dataset {
  std::vector<PosedImage> images;  // sorted by id
  std::optional<Aabb> bbox;
};

namespace detail {

inline nlohmann::json intrinsics_to_json(const CameraIntrinsics& in) {
  return {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy}, {"width", in.width}, {"height", in.height}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics in{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                      j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
  in.validate();
  return in;
}

inline std::array<double, 3> vec3_array(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw LoadError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline Dataset load_manifest(const std::string& path) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": not valid JSON (" + e.what() + ")");
  }
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& rel) { return (base / rel).string(); };
  Dataset ds;
  std::string where = path;
  try {
    if (j.at("version").get<int>() != kManifestVersion)
      throw LoadError(path + ": unsupported manifest version");
    std::optional<CameraIntrinsics> shared;
    if (j.contains("intrinsics")) shared = detail::intrinsics_from_json(j.at("intrinsics"));
    if (j.contains("bbox")) {
      const auto lo = detail::vec3_array(j.at("bbox").at("lo"));
      const auto hi = detail::vec3_array(j.at("bbox").at("hi"));
      Aabb box{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
      box.validate();
      ds.bbox = box;
    }
    const auto& entries = j.at("images");
    if (!entries.is_array()) throw LoadError(path + ": 'images' must be an array");
    for (const auto& e : entries) {
      PosedImage im;
      im.id = e.at("id").get<std::string>();
      where = path + ": image '" + im.id + "'";
      if (e.contains("intrinsics")) im.intr = detail::intrinsics_from_json(e.at("intrinsics"));
      else if (shared) im.intr = *shared;
      else throw LoadError("no intrinsics");
      im.pose = Pose::from_matrix(e.at("pose").get<std::array<double, 16>>(), 1e-6);
      const std::string image_path = resolve(e.at("image").get<std::string>());
      if (!fs::exists(image_path)) throw LoadError("missing image file " + image_path);
      im.image = read_image(image_path);
      if (e.contains("mask") && !e.at("mask").is_null()) {
        const std::string mask_path = resolve(e.at("mask").get<std::string>());
        if (!fs::exists(mask_path)) throw LoadError("missing mask file " + mask_path);
        im.mask = read_mask(mask_path);
      }
      if (e.contains("sparse_depth")) {
        for (const auto& d : e.at("sparse_depth")) {
          const Pixel px{d.at("u").get<double>(), d.at("v").get<double>()};
          if (!im.intr.contains(px)) throw LoadError("sparse depth pixel outside the image");
          const bool has_key = d.contains("kx");
          const bool has_depth = d.contains("depth");
          if (has_key) {
            const Vec3 k(d.at("kx").get<double>(), d.at("ky").get<double>(), d.at("kz").get<double>());
            SparseDepthPoint p = depth_point_from_keypoint(im.id, px, k, im.pose);
            if (has_depth) {
              const double stored = d.at("depth").get<double>();
              if (std::abs(stored - p.depth_gt) > 1e-9 * std::max(1.0, std::abs(stored)))
                throw LoadError("sparse depth disagrees with its keypoint");
              p.depth_gt = stored;
            }
            im.sparse_depth.push_back(p);
          } else if (has_depth) {
            im.sparse_depth.push_back(depth_point_from_depth(im.id, px, d.at("depth").get<double>(), im.intr, im.pose));
          } else {
            throw LoadError("sparse depth entry needs 'depth' or 'kx','ky','kz'");
          }
        }
      }
      im.validate();
      ds.images.push_back(std::move(im));
    }
  } catch (const LoadError& e) {
    if (std::string(e.what()).rfind(path, 0) == 0) throw;
    throw LoadError(where + ": " + e.what());
  } catch (const Error& e) {
    throw LoadError(where + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(where + ": " + e.what());
  }
  std::sort(ds.images.begin(), ds.images.end(), [](const PosedImage& a, const PosedImage& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < ds.images.size(); ++i)
    if (ds.images[i].id == ds.images[i - 1].id) throw LoadError(path + ": duplicate image id '" + ds.images[i].id + "'");
  return ds;
}

// Writes images and masks as PNG under `dir` (images/, masks/) and the
// manifest as dir/manifest_name. Images are stored at 8 bits per channel.
inline std::string save_manifest(const std::string& dir, std::span<const PosedImage> images,
                                 const std::optional<Aabb>& bbox = std::nullopt,
                                 const std::string& manifest_name = "manifest.json",
                                 const std::string& image_subdir = "images") {
  nlohmann::json entries = nlohmann::json::array();
  std::vector<const PosedImage*> order;
  for (const PosedImage& im : images) order.push_back(&im);
  std::sort(order.begin(), order.end(), [](const PosedImage* a, const PosedImage* b) { return a->id < b->id; });
  const bool shared = std::all_of(order.begin(), order.end(), [&](const PosedImage* im) { return im->intr == order.front()->intr; });
  for (const PosedImage* im : order) {
    im->validate();
    nlohmann::json e{{"id", im->id}, {"image", image_subdir + "/" + im->id + ".png"}, {"pose", im->pose.to_matrix()}};
    write_image(dir + "/" + image_subdir + "/" + im->id + ".png", im->image);
    if (!shared) e["intrinsics"] = detail::intrinsics_to_json(im->intr);
    if (im->mask) {
      e["mask"] = "masks/" + im->id + ".png";
      write_mask(dir + "/masks/" + im->id + ".png", *im->mask);
    }
    nlohmann::json depth = nlohmann::json::array();
    for (const SparseDepthPoint& p : im->sparse_depth)
      depth.push_back({{"u", p.pixel.u}, {"v", p.pixel.v}, {"depth", p.depth_gt},
                       {"kx", p.keypoint_world.x()}, {"ky", p.keypoint_world.y()}, {"kz", p.keypoint_world.z()}});
    if (!depth.empty()) e["sparse_depth"] = depth;
    entries.push_back(e);
  }
  nlohmann::json j{{"version", kManifestVersion}, {"convention", kPoseConvention}, {"images", entries}};
  if (shared && !order.empty()) j["intrinsics"] = detail::intrinsics_to_json(order.front()->intr);
  if (bbox) j["bbox"] = {{"lo", {bbox->lo.x(), bbox->lo.y(), bbox->lo.z()}}, {"hi", {bbox->hi.x(), bbox->hi.y(), bbox->hi.z()}}};
  const std::string path = dir + "/" + manifest_name;
  write_file(path, j.dump(2) + "\n");
  return path;
}

// Seeded split into (train, test); both halves sorted by id.
inline std::pair<std::vector<PosedImage>, std::vector<PosedImage>> holdout_split(std::span<const PosedImage> images,
                                                                                 std::size_t n_test,
                                                                                 std::uint64_t seed) {
  if (n_test >= images.size()) throw DatasetError("holdout split: n_test must be smaller than the dataset");
  std::vector<const PosedImage*> order;
  for (const PosedImage& im : images) order.push_back(&im);
  std::sort(order.begin(), order.end(), [](const PosedImage* a, const PosedImage* b) { return a->id < b->id; });
  Rng rng(seed, {stream::kSplit});
  shuffle(order, rng);
  std::vector<PosedImage> train;
  std::vector<PosedImage> test;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_test ? test : train).push_back(*order[i]);
  auto by_id = [](const PosedImage& a, const PosedImage& b) { return a.id < b.id; };
  std::sort(train.begin(), train.end(), by_id);
  std::sort(test.begin(), test.end(), by_id);
  return {std::move(train), std::move(test)};
}

}  // namespace nerfsup
