// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "nerfsup/fixtures.hpp"
#include "nerfsup/metrics.hpp"
#include "nerfsup/optimizer.hpp"
#include "nerfsup/renderer.hpp"

using namespace nerfsup;

namespace {

const Aabb kBox{Vec3::Constant(-1.0), Vec3::Constant(1.0)};

VoxelField<double> random_field(std::uint64_t seed, ColorModel model = ColorModel::kConstant) {
  VoxelField<double> f({4, 4, 4}, kBox, model);
  Rng rng(seed);
  for (auto& v : f.density_raw()) v = rng.uniform(-1, 2);
  for (auto& v : f.color_raw()) v = rng.uniform(-2, 2);
  return f;
}

Ray ray_through_box(Rng& rng) {
  const Vec3 from(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 3.0);
  const Vec3 to(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), -1.0);
  Ray r;
  r.origin = from;
  r.direction = (to - from).normalized();
  return *clip_to_box(r, kBox);
}

// Small slab dataset that trains in a few seconds.
std::vector<PosedImage> tiny_dataset(int views = 4) {
  FixtureParams p;
  p.views = views;
  p.test_views = 0;
  p.width = p.height = 24;
  p.focal = 30.0;
  p.sparse_depth_per_view = 24;
  const Fixture f = make_fixture(p);
  return render_rig(f, f.train, false);
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 40;
  c.batch_size = 96;
  c.depth_batch_size = 16;
  c.k_samples = 32;
  c.resolution = {12, 12, 12};
  return c;
}

// Depth loss over every sparse point, unstratified.
double full_depth_loss(const RadianceField& field, const std::vector<PosedImage>& images) {
  std::vector<DepthObservation> obs;
  for (const auto& im : images)
    for (const auto& p : im.sparse_depth) obs.push_back(depth_observation(im.intr, im.pose, p.pixel, p.depth_gt));
  return depth_loss(field, std::span<const DepthObservation>(obs), LossOptions{64}).loss;
}

template <typename LossFn>
void check_gradient(VoxelField<double>& f, LossFn loss) {
  const LossResult r = loss(f);
  const double h = 1e-6;
  auto check = [&](std::vector<double>& params, const std::vector<double>& grad) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double p0 = params[i];
      params[i] = p0 + h;
      const double lp = loss(f).loss;
      params[i] = p0 - h;
      const double lm = loss(f).loss;
      params[i] = p0;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LE(std::abs(fd - grad[i]), std::max(1e-7, 1e-4 * std::abs(grad[i]))) << "parameter " << i;
    }
  };
  check(f.density_raw(), r.gradient.density);
  check(f.color_raw(), r.gradient.color);
}

}  // namespace

TEST(Optimizer, PhotometricGradientMatchesFiniteDifferences) {
  for (ColorModel m : {ColorModel::kConstant, ColorModel::kSphericalHarmonics1}) {
    auto f = random_field(1, m);
    Rng rng(2);
    std::vector<ColorObservation> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({ray_through_box(rng), Vec3(rng.uniform(), rng.uniform(), rng.uniform())});
    check_gradient(f, [&](const VoxelField<double>& g) {
      return photometric_loss(g, std::span<const ColorObservation>(batch), LossOptions{8});
    });
  }
}

TEST(Optimizer, DepthGradientMatchesFiniteDifferences) {
  auto f = random_field(3);
  Rng rng(4);
  std::vector<DepthObservation> batch;
  for (int i = 0; i < 3; ++i) batch.push_back({ray_through_box(rng), rng.uniform(1.5, 3.5), rng.uniform(0.8, 1.0)});
  check_gradient(f, [&](const VoxelField<double>& g) {
    return depth_loss(g, std::span<const DepthObservation>(batch), LossOptions{8});
  });
}

TEST(Optimizer, StratifiedGradientMatchesFiniteDifferences) {
  // Jitter is a pure function of (seed, step, ray), so the loss is a fixed
  // differentiable function of the parameters.
  auto f = random_field(5);
  Rng rng(6);
  std::vector<ColorObservation> batch;
  for (int i = 0; i < 3; ++i) batch.push_back({ray_through_box(rng), Vec3::Constant(0.3)});
  const LossOptions opt{8, true, 11, stream::kTrainStrata, 3};
  check_gradient(f, [&](const VoxelField<double>& g) {
    return photometric_loss(g, std::span<const ColorObservation>(batch), opt);
  });
}

TEST(Optimizer, ExactReproductionHasZeroLoss) {
  const auto f = random_field(7);
  Rng rng(8);
  std::vector<ColorObservation> colors;
  std::vector<DepthObservation> depths;
  for (int i = 0; i < 5; ++i) {
    const Ray r = ray_through_box(rng);
    const RaySamples s = march(f, *clip_to_box(r, f.bbox()), 16, false);
    colors.push_back({r, composite_color(s)});
    depths.push_back({r, composite_depth(s), 1.0});
  }
  const LossResult pc = photometric_loss(f, std::span<const ColorObservation>(colors), LossOptions{16});
  const LossResult dp = depth_loss(f, std::span<const DepthObservation>(depths), LossOptions{16});
  EXPECT_EQ(pc.loss, 0.0);
  EXPECT_EQ(dp.loss, 0.0);
  for (double g : pc.gradient.density) EXPECT_EQ(g, 0.0);
  for (double g : pc.gradient.color) EXPECT_EQ(g, 0.0);
  for (double g : dp.gradient.density) EXPECT_EQ(g, 0.0);
}

TEST(Optimizer, EmptyDepthBatchContributesNothing) {
  const auto f = random_field(9);
  const LossResult r = depth_loss(f, std::span<const DepthObservation>(), LossOptions{});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.gradient.density.size(), f.density_raw().size());
  for (double g : r.gradient.density) EXPECT_EQ(g, 0.0);
}

TEST(Optimizer, EmptyPhotometricBatchThrows) {
  EXPECT_THROW(photometric_loss(random_field(10), std::span<const ColorObservation>(), LossOptions{}), ConfigError);
}

TEST(Optimizer, LossIsInvariantToBatchOrder) {
  const auto f = random_field(11);
  Rng rng(12);
  std::vector<ColorObservation> batch;
  for (int i = 0; i < 6; ++i) batch.push_back({ray_through_box(rng), Vec3(rng.uniform(), 0.5, 0.2)});
  const double a = photometric_loss(f, std::span<const ColorObservation>(batch), LossOptions{16}).loss;
  std::reverse(batch.begin(), batch.end());
  const double b = photometric_loss(f, std::span<const ColorObservation>(batch), LossOptions{16}).loss;
  EXPECT_NEAR(a, b, 1e-15);
}

TEST(Optimizer, DepthSupervisionConverges) {
  const auto images = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.iterations = 500;
  const TrainState<float> init = TrainState<float>::initial(cfg);
  const double before = full_depth_loss(init.field, images);
  const RadianceField trained = train(std::span<const PosedImage>(images), cfg);
  const double after = full_depth_loss(trained, images);
  EXPECT_LT(after, 0.1 * before) << "before " << before << " after " << after;
}

TEST(Optimizer, CombinedLossDecreasesOverWindows) {
  const auto images = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.iterations = 500;
  std::vector<LossRecord> curve;
  train(std::span<const PosedImage>(images), cfg, &curve);
  ASSERT_EQ(curve.size(), 500u);
  double prev = INFINITY;
  for (std::size_t w = 0; w < 5; ++w) {
    double mean = 0.0;
    for (std::size_t i = 100 * w; i < 100 * (w + 1); ++i) mean += curve[i].total / 100.0;
    EXPECT_LE(mean, prev) << "window " << w;
    prev = mean;
  }
}

TEST(Optimizer, ZeroDepthWeightEqualsNoDepthData) {
  auto images = tiny_dataset();
  TrainConfig cfg = tiny_config();
  cfg.depth_loss_weight = 0.0;
  const RadianceField a = train(std::span<const PosedImage>(images), cfg);
  for (auto& im : images) im.sparse_depth.clear();
  cfg.depth_loss_weight = 1.0;
  const RadianceField b = train(std::span<const PosedImage>(images), cfg);
  EXPECT_EQ(a, b);
}

TEST(Optimizer, ImageOrderDoesNotMatter) {
  auto images = tiny_dataset();
  const RadianceField a = train(std::span<const PosedImage>(images), tiny_config());
  std::reverse(images.begin(), images.end());
  std::swap(images[0], images[2]);
  const RadianceField b = train(std::span<const PosedImage>(images), tiny_config());
  EXPECT_EQ(a, b);
}

TEST(Optimizer, ThreadCountDoesNotMatter) {
  const auto images = tiny_dataset();
  TrainConfig cfg = tiny_config();
  const RadianceField a = train(std::span<const PosedImage>(images), cfg);
  cfg.threads = 3;
  const RadianceField b = train(std::span<const PosedImage>(images), cfg);
  EXPECT_EQ(a, b);
}

TEST(Optimizer, ResumeIsBitExact) {
  const auto images = tiny_dataset();
  const TrainConfig cfg = tiny_config();
  std::vector<LossRecord> full_curve;
  const RadianceField full = train(std::span<const PosedImage>(images), cfg, &full_curve);

  TrainConfig half = cfg;
  half.iterations = 17;
  auto state = TrainState<float>::initial(cfg);
  train_resume(std::span<const PosedImage>(images), half, state);
  const auto path = (std::filesystem::temp_directory_path() / "nerfsup_resume_state.bin").string();
  save_train_state(state, path);
  auto restored = load_train_state(path);
  std::filesystem::remove(path);
  EXPECT_EQ(restored.step, 17u);

  std::vector<LossRecord> tail;
  train_resume(std::span<const PosedImage>(images), cfg, restored, [&](const LossRecord& r) { tail.push_back(r); });
  EXPECT_EQ(restored.field, full);
  ASSERT_EQ(tail.size(), full_curve.size() - 17);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    EXPECT_EQ(tail[i].step, full_curve[17 + i].step);
    EXPECT_EQ(tail[i].total, full_curve[17 + i].total);
  }
}

TEST(Optimizer, RejectsBadDatasets) {
  auto images = tiny_dataset(2);
  EXPECT_THROW(train(std::span<const PosedImage>(images.data(), 1), tiny_config()), DatasetError);
  images[1].image = ImageRGB(12, 12);
  EXPECT_THROW(train(std::span<const PosedImage>(images), tiny_config()), DatasetError);
  images = tiny_dataset(2);
  images[1].id = images[0].id;
  EXPECT_THROW(train(std::span<const PosedImage>(images), tiny_config()), DatasetError);
}

TEST(Optimizer, RejectsBadConfig) {
  const auto images = tiny_dataset(2);
  TrainConfig c = tiny_config();
  c.learning_rate = 0.0;
  EXPECT_THROW(train(std::span<const PosedImage>(images), c), ConfigError);
  c = tiny_config();
  c.momentum = 1.0;
  EXPECT_THROW(train(std::span<const PosedImage>(images), c), ConfigError);
}

TEST(Optimizer, LossCsvFormat) {
  EXPECT_EQ(loss_csv_header(), "step,L_photo,L_depth,L\n");
  EXPECT_EQ(loss_csv_row({3, 0.5, 0.25, 0.75}), "3,0.5,0.25,0.75\n");
}

TEST(Optimizer, EightViewSlabReachesTargetPsnr) {
  // Default configuration, 64x64 views: about three minutes on one core.
  FixtureParams p;
  p.views = 8;
  const Fixture f = make_fixture(p);
  const auto train_images = render_rig(f, f.train, false);
  const auto test_images = render_rig(f, f.test, false);
  TrainConfig c;
  c.threads = 2;
  const auto field = train(std::span<const PosedImage>(train_images), c);
  double mean = 0.0;
  for (const auto& im : test_images) {
    const RenderedView r = render_view(field, im.intr, im.pose, 192);
    mean += psnr(quantize(r.image), quantize(im.image)) / double(test_images.size());
  }
  EXPECT_GE(mean, 25.0);
}
