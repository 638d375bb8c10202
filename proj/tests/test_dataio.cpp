// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <set>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "nerfsup/dataio.hpp"
#include "nerfsup/fixtures.hpp"

using namespace nerfsup;
namespace fs = std::filesystem;

namespace {

class DataIo : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nerfsup_dataio_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    FixtureParams p;
    p.views = 3;
    p.test_views = 0;
    p.width = p.height = 16;
    p.focal = 20.0;
    p.sparse_depth_per_view = 5;
    const Fixture f = make_fixture(p);
    images_ = render_rig(f, f.train, false);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string save() { return save_manifest(dir_.string(), std::span<const PosedImage>(images_), bbox_); }

  nlohmann::json read_json(const std::string& path) { return nlohmann::json::parse(read_file(path)); }
  void write_json(const std::string& path, const nlohmann::json& j) { write_file(path, j.dump(2)); }

  std::string load_error(const std::string& path) {
    try {
      load_manifest(path);
    } catch (const LoadError& e) {
      return e.what();
    }
    return "";
  }

  fs::path dir_;
  std::vector<PosedImage> images_;
  Aabb bbox_{Vec3(-1, -1, -0.5), Vec3(1, 1, 0.5)};
};

}  // namespace

TEST_F(DataIo, ManifestRoundTrip) {
  const Dataset ds = load_manifest(save());
  ASSERT_EQ(ds.images.size(), images_.size());
  ASSERT_TRUE(ds.bbox);
  EXPECT_EQ(*ds.bbox, bbox_);
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const PosedImage& a = images_[i];
    const PosedImage& b = ds.images[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.intr, b.intr);
    EXPECT_EQ(a.pose.to_matrix(), b.pose.to_matrix());
    EXPECT_EQ(quantize(a.image), b.image);
    ASSERT_TRUE(b.mask);
    EXPECT_EQ(*a.mask, *b.mask);
    ASSERT_EQ(a.sparse_depth.size(), b.sparse_depth.size());
    for (std::size_t k = 0; k < a.sparse_depth.size(); ++k) {
      EXPECT_EQ(a.sparse_depth[k].pixel, b.sparse_depth[k].pixel);
      EXPECT_EQ(a.sparse_depth[k].depth_gt, b.sparse_depth[k].depth_gt);
    }
  }
  // Saving what was loaded reproduces the manifest byte for byte.
  const std::string first = read_file((dir_ / "manifest.json").string());
  save_manifest((dir_ / "again").string(), std::span<const PosedImage>(ds.images), ds.bbox);
  EXPECT_EQ(read_file((dir_ / "again" / "manifest.json").string()), first);
}

TEST_F(DataIo, DepthOnlyEntriesLoad) {
  const std::string path = save();
  auto j = read_json(path);
  for (auto& e : j["images"])
    for (auto& d : e["sparse_depth"]) {
      d.erase("kx");
      d.erase("ky");
      d.erase("kz");
    }
  write_json(path, j);
  const Dataset ds = load_manifest(path);
  for (std::size_t i = 0; i < images_.size(); ++i)
    for (std::size_t k = 0; k < images_[i].sparse_depth.size(); ++k) {
      EXPECT_EQ(ds.images[i].sparse_depth[k].depth_gt, images_[i].sparse_depth[k].depth_gt);
      EXPECT_LT((ds.images[i].sparse_depth[k].keypoint_world - images_[i].sparse_depth[k].keypoint_world).norm(), 1e-9);
    }
}

TEST_F(DataIo, NonOrthonormalPoseIsRejectedWithImageId) {
  const std::string path = save();
  auto j = read_json(path);
  auto& pose = j["images"][1]["pose"];
  pose[0] = pose[0].get<double>() * 1.05;
  write_json(path, j);
  const std::string msg = load_error(path);
  EXPECT_NE(msg.find(images_[1].id), std::string::npos) << msg;
  EXPECT_NE(msg.find(path), std::string::npos) << msg;
}

TEST_F(DataIo, MissingFilesAreReported) {
  EXPECT_THROW(load_manifest((dir_ / "nope.json").string()), LoadError);
  const std::string path = save();
  fs::remove(dir_ / "images" / (images_[2].id + ".png"));
  const std::string msg = load_error(path);
  EXPECT_NE(msg.find(images_[2].id + ".png"), std::string::npos) << msg;
}

TEST_F(DataIo, InconsistentSparseDepthIsRejected) {
  const std::string path = save();
  auto j = read_json(path);
  auto& d = j["images"][0]["sparse_depth"][0];
  d["depth"] = d["depth"].get<double>() + 0.01;
  write_json(path, j);
  EXPECT_NE(load_error(path).find("disagrees"), std::string::npos);
}

TEST_F(DataIo, DuplicateIdsAndBadJsonAreRejected) {
  const std::string path = save();
  auto j = read_json(path);
  j["images"][1]["id"] = j["images"][0]["id"];
  write_json(path, j);
  EXPECT_NE(load_error(path).find("duplicate"), std::string::npos);
  write_file(path, "{not json");
  EXPECT_THROW(load_manifest(path), LoadError);
  write_json(path, {{"version", 7}, {"images", nlohmann::json::array()}});
  EXPECT_THROW(load_manifest(path), LoadError);
}

TEST_F(DataIo, PerImageIntrinsics) {
  images_[1].intr.fx = 21.0;
  const std::string path = save();
  const auto j = read_json(path);
  EXPECT_FALSE(j.contains("intrinsics"));
  const Dataset ds = load_manifest(path);
  EXPECT_EQ(ds.images[1].intr.fx, 21.0);
  EXPECT_EQ(ds.images[0].intr.fx, 20.0);
}

TEST(HoldoutSplit, SizesAndDeterminism) {
  std::vector<PosedImage> images(60);
  for (std::size_t i = 0; i < images.size(); ++i) images[i].id = detail::view_id("img", i);
  const auto [train, test] = holdout_split(std::span<const PosedImage>(images), 8, 3);
  EXPECT_EQ(train.size(), 52u);
  EXPECT_EQ(test.size(), 8u);
  std::set<std::string> ids;
  for (const auto& im : train) ids.insert(im.id);
  for (const auto& im : test) ids.insert(im.id);
  EXPECT_EQ(ids.size(), 60u);
  EXPECT_TRUE(std::is_sorted(test.begin(), test.end(), [](auto& a, auto& b) { return a.id < b.id; }));

  // Same seed, any input order: same split.
  std::vector<PosedImage> reversed(images.rbegin(), images.rend());
  const auto again = holdout_split(std::span<const PosedImage>(reversed), 8, 3);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(again.second[i].id, test[i].id);
  const auto other = holdout_split(std::span<const PosedImage>(images), 8, 4);
  bool differs = false;
  for (std::size_t i = 0; i < 8; ++i) differs |= other.second[i].id != test[i].id;
  EXPECT_TRUE(differs);
}

TEST(HoldoutSplit, EdgeCases) {
  std::vector<PosedImage> images(4);
  for (std::size_t i = 0; i < images.size(); ++i) images[i].id = detail::view_id("img", i);
  const auto [train, test] = holdout_split(std::span<const PosedImage>(images), 0, 1);
  EXPECT_EQ(train.size(), 4u);
  EXPECT_TRUE(test.empty());
  EXPECT_THROW(holdout_split(std::span<const PosedImage>(images), 4, 1), DatasetError);
  EXPECT_THROW(holdout_split(std::span<const PosedImage>(images), 9, 1), DatasetError);
}

TEST(DepthMapFile, RoundTrip) {
  DepthMap d(3, 2);
  d.at(1, 1) = 2.5f;
  d.at(2, 0) = 0.125f;
  EXPECT_EQ(decode_depth_map(encode_depth_map(d)), d);
  const std::string bytes = encode_depth_map(d);
  EXPECT_THROW(decode_depth_map(bytes.substr(0, bytes.size() - 1)), LoadError);
}
