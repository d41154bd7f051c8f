#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "colornorm/error.hpp"
#include "colornorm/selfsup.hpp"
#include "colornorm/synth.hpp"
#include "colornorm/weights_io.hpp"

namespace cn = colornorm;

namespace {

cn::ImageRGB random_image(std::size_t w, std::size_t h, cn::Rng& rng, float lo = 0.0f, float hi = 1.0f) {
  cn::ImageRGB im(w, h);
  for (auto& v : im.pixels) v = rng.uniform(lo, hi);
  return im;
}

cn::PatchSet random_patches(std::size_t n, std::size_t size, std::uint64_t seed) {
  cn::Rng rng(seed);
  cn::PatchSet set;
  for (std::size_t i = 0; i < n; ++i) {
    set.patches.push_back(random_image(size, size, rng, 0.1f, 0.9f));
    set.sources.push_back({i, 0, 0});
  }
  return set;
}

cn::TrainConfig tiny_config() {
  cn::TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.patch_size = 12;
  cfg.iterations = 6;
  cfg.holdout_every = 4;
  cfg.seed = 9;
  return cfg;
}

cn::Model zero_head_model() {
  cn::Rng rng(1);
  cn::Model m = cn::build_model(cn::ArchSpec::reference(), rng);
  m.head().weights.fill(0.0f);
  m.head().bias.fill(0.0f);
  m.set_mode(cn::Mode::Infer);
  return m;
}

}  // namespace

TEST(SynthesizePair, GreenIsBitExact) {
  cn::Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const cn::ImageRGB target = random_image(8, 8, rng);
    const auto pair = cn::synthesize_pair(target, rng, 0.2f);
    for (std::size_t i = 0; i < target.pixel_count(); ++i) {
      ASSERT_EQ(pair.source.pixels[3 * i + 1], target.pixels[3 * i + 1]);
      ASSERT_EQ(pair.source.pixels[3 * i], target.pixels[3 * i] + pair.eps1);
      ASSERT_EQ(pair.source.pixels[3 * i + 2], target.pixels[3 * i + 2] + pair.eps2);
    }
    ASSERT_LT(std::abs(pair.eps1), 0.2f);
    ASSERT_LT(std::abs(pair.eps2), 0.2f);
  }
}

TEST(SynthesizePair, EpsilonsDrawnInOrder) {
  cn::Rng a(5), b(5);
  const auto pair = cn::synthesize_pair(cn::ImageRGB(2, 2, 0.5f), a, 0.2f);
  EXPECT_EQ(pair.eps1, b.uniform(-0.2f, 0.2f));
  EXPECT_EQ(pair.eps2, b.uniform(-0.2f, 0.2f));
}

TEST(SynthesizePair, ZeroOffsetIsIdentityAndNoClamp) {
  cn::Rng rng(2);
  const cn::ImageRGB target = random_image(5, 5, rng);
  EXPECT_EQ(cn::perturb_channels(target, 0.0f, 0.0f), target);
  cn::ImageRGB bright(1, 1, 0.9f);
  EXPECT_FLOAT_EQ(cn::perturb_channels(bright, 0.15f, 0.0f).pixels[0], 1.05f);
  EXPECT_FLOAT_EQ(cn::perturb_channels(cn::ImageRGB(1, 1, 0.05f), 0.0f, -0.15f).pixels[2], -0.1f);
}

TEST(SamplePatches, CountSizeAndFilter) {
  const auto images = cn::synthesize_corpus(4, 96, 96, 3);
  cn::Rng rng(4);
  const auto set = cn::sample_patches(images, 50, 32, rng);
  ASSERT_EQ(set.patches.size(), 50u);
  ASSERT_EQ(set.sources.size(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& p = set.patches[i];
    ASSERT_EQ(p.width, 32u);
    ASSERT_EQ(p.height, 32u);
    EXPECT_LE(cn::mean_luminance(p), cn::kTissueLuminanceLimit);
    const auto& s = set.sources[i];
    ASSERT_LT(s.image, images.size());
    ASSERT_LE(s.x + 32, 96u);
    ASSERT_LE(s.y + 32, 96u);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        for (std::size_t c = 0; c < 3; ++c) ASSERT_EQ(p.at(x, y, c), images[s.image].at(s.x + x, s.y + y, c));
  }
}

TEST(SamplePatches, ExactSizeImageGivesIdenticalPatches) {
  cn::Rng rng(5);
  const std::vector<cn::ImageRGB> images{random_image(16, 16, rng, 0.0f, 0.8f)};
  const auto set = cn::sample_patches(images, 10, 16, rng);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(set.patches[i], images[0]);
    EXPECT_EQ(set.sources[i].x, 0u);
    EXPECT_EQ(set.sources[i].y, 0u);
  }
}

TEST(SamplePatches, Errors) {
  cn::Rng rng(6);
  try {
    cn::sample_patches({cn::ImageRGB(64, 64, 1.0f)}, 10, 16, rng);
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::RejectionBudgetExhausted);
    EXPECT_NE(std::string(e.what()).find("acceptance rate"), std::string::npos);
  }
  try {
    cn::sample_patches({cn::ImageRGB(15, 64, 0.5f)}, 10, 16, rng);
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::InvalidArgument);
  }
}

TEST(SplitHoldout, PartitionsIndices) {
  cn::Rng rng(7);
  const auto [train, held] = cn::split_holdout(200, 0.1, rng);
  EXPECT_EQ(held.size(), 20u);
  EXPECT_EQ(train.size(), 180u);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(held.begin(), held.end());
  EXPECT_EQ(all.size(), 200u);
}

TEST(Train, DeterministicUnderSeed) {
  const auto patches = random_patches(20, 12, 11);
  const auto cfg = tiny_config();
  const auto a = cn::train(patches, cfg);
  const auto b = cn::train(patches, cfg);
  EXPECT_EQ(cn::encode_weights(a.model), cn::encode_weights(b.model));
  ASSERT_EQ(a.log.entries.size(), b.log.entries.size());
  for (std::size_t i = 0; i < a.log.entries.size(); ++i) {
    EXPECT_EQ(a.log.entries[i].loss, b.log.entries[i].loss);
    EXPECT_EQ(a.log.entries[i].holdout_loss, b.log.entries[i].holdout_loss);
  }
  auto other = cfg;
  other.seed = 10;
  EXPECT_NE(cn::encode_weights(cn::train(patches, other).model), cn::encode_weights(a.model));
}

TEST(Train, LogHasOneEntryPerIteration) {
  const auto result = cn::train(random_patches(20, 12, 12), tiny_config());
  ASSERT_EQ(result.log.entries.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(result.log.entries[i].iteration, i + 1);
    // every holdout_every iterations and at the end
    EXPECT_EQ(result.log.entries[i].holdout_loss.has_value(), i + 1 == 4 || i + 1 == 6);
  }
  EXPECT_EQ(result.model.mode(), cn::Mode::Infer);
  EXPECT_GT(result.log.initial_holdout_loss, 0.0);

  std::ostringstream csv;
  cn::write_train_log_csv(result.log, csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "iteration,loss,holdout_loss,millis");
  std::getline(lines, line);
  EXPECT_EQ(line.rfind("1,", 0), 0u);
  EXPECT_NE(line.find(",,"), std::string::npos) << line;  // blank holdout field
}

TEST(Train, RejectsBadConfig) {
  const auto patches = random_patches(20, 12, 13);
  auto cfg = tiny_config();
  cfg.iterations = 0;
  EXPECT_THROW(cn::train(patches, cfg), cn::Error);
  cfg = tiny_config();
  cfg.batch_size = 21;
  EXPECT_THROW(cn::train(patches, cfg), cn::Error);
  cfg = tiny_config();
  cfg.offset_range = 0.5;
  EXPECT_THROW(cn::train(patches, cfg), cn::Error);
}

TEST(Train, NonFiniteLossNamesIteration) {
  auto patches = random_patches(20, 12, 14);
  for (auto& p : patches.patches) p.pixels[5] = std::numeric_limits<float>::infinity();
  try {
    cn::train(patches, tiny_config());
    FAIL();
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::NonFinite);
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos) << e.what();
  }
}

TEST(OffsetRecovery, ZeroHeadControl) {
  const auto patches = random_patches(40, 16, 15);
  const cn::Model m = zero_head_model();
  cn::Rng rng(16);
  const auto none = cn::evaluate_offset_recovery(m, patches, 64, rng, 0.0f);
  for (double e : none.mae) EXPECT_EQ(e, 0.0);

  const auto rec = cn::evaluate_offset_recovery(m, patches, 1000, rng);
  EXPECT_EQ(rec.trials, 1000u);
  EXPECT_NEAR(rec.mae[0], 0.1, 0.01);  // E|Unif(-0.2, 0.2)|
  EXPECT_EQ(rec.mae[1], 0.0);
  EXPECT_NEAR(rec.mae[2], 0.1, 0.01);
}
