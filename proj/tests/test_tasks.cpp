#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "exprnn/exprnn.hpp"
#include "exprnn/tasks.hpp"

using namespace exprnn;

TEST(Copying, RenderedExampleIsReproduced) {
  const CopyConfig cfg{4, 5, 10, 1};
  // Alphabet {1, ..., 4} maps to ids 0..3.
  const std::vector<int> symbols{0, 3, 1, 1, 0};
  const CopyingExample ex = copying_example(cfg, symbols);
  EXPECT_EQ(render_copying(cfg, ex.input), "14221----------:----");
  EXPECT_EQ(render_copying(cfg, ex.target), "---------------14221");
}

TEST(Copying, SmallestCase) {
  const CopyConfig cfg{3, 1, 1, 1};
  const CopyingExample ex = copying_example(cfg, std::vector<int>{2});
  EXPECT_EQ(ex.input, (std::vector<int>{2, cfg.blank(), cfg.start()}));
  EXPECT_EQ(ex.target, (std::vector<int>{cfg.blank(), cfg.blank(), 2}));
}

TEST(Copying, BatchLayoutAndDeterminism) {
  const CopyConfig cfg{8, 10, 100, 16};
  Rng r1(7), r2(7);
  const CopyingBatch a = gen_copying_batch(cfg, r1);
  const CopyingBatch b = gen_copying_batch(cfg, r2);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.targets, b.targets);
  ASSERT_EQ(a.inputs.size(), 120u);
  for (std::size_t i = 0; i < cfg.batch; ++i) {
    EXPECT_EQ(a.inputs[110][i], cfg.start());
    for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(a.targets[110 + k][i], a.inputs[k][i]);
  }
}

TEST(Copying, SymbolFrequenciesAreUniform) {
  const CopyConfig cfg{5, 10, 1, 10000};
  Rng rng(8);
  const CopyingBatch b = gen_copying_batch(cfg, rng);
  std::vector<double> freq(5, 0.0);
  for (std::size_t k = 0; k < 10; ++k)
    for (int s : b.inputs[k]) freq[static_cast<std::size_t>(s)] += 1.0;
  for (double f : freq) EXPECT_NEAR(f / 100000.0, 0.2, 0.01);
}

TEST(Copying, InvalidConfig) {
  Rng rng(1);
  EXPECT_THROW(gen_copying_batch(CopyConfig{1, 5, 10, 1}, rng), DomainError);
  EXPECT_THROW(copying_example(CopyConfig{4, 2, 3, 1}, std::vector<int>{0}), DimensionError);
  EXPECT_THROW(copying_example(CopyConfig{4, 1, 3, 1}, std::vector<int>{4}), DomainError);
}

TEST(CopyingBaseline, Values) {
  EXPECT_NEAR(copying_baseline(CopyConfig{4, 5, 10, 1}), 5 * std::log(4.0) / 20, 1e-15);
  EXPECT_NEAR(copying_baseline(CopyConfig{4, 5, 10, 1}), 0.34657, 5e-6);
  EXPECT_NEAR(copying_baseline(CopyConfig{8, 10, 100, 1}), 0.17329, 5e-6);
  EXPECT_EQ(copying_baseline(CopyConfig{1, 10, 100, 1}), 0.0);
}

TEST(CopyingBaseline, ClosedLoopAgainstLossImplementation) {
  // Blanks with certainty until the recall region, then uniform over the N
  // symbols; every other class gets a logit far enough down to vanish.
  for (const CopyConfig cfg : {CopyConfig{4, 5, 10, 3}, CopyConfig{8, 10, 100, 5}}) {
    Rng rng(9);
    const CopyingBatch b = gen_copying_batch(cfg, rng);
    const std::size_t len = cfg.seq_len(), recall = len - static_cast<std::size_t>(cfg.copy_len);
    std::vector<Matrix> logits;
    for (std::size_t t = 0; t < len; ++t) {
      Matrix l(cfg.batch, cfg.vocab(), -1000.0);
      for (std::size_t i = 0; i < cfg.batch; ++i) {
        if (t < recall) {
          l(i, static_cast<std::size_t>(cfg.blank())) = 0.0;
        } else {
          for (int s = 0; s < cfg.alphabet; ++s) l(i, static_cast<std::size_t>(s)) = 0.0;
        }
      }
      logits.push_back(std::move(l));
    }
    EXPECT_NEAR(cross_entropy(logits, b.targets).loss, copying_baseline(cfg), 1e-12);
  }
}

TEST(Copying, OneHotAndRecallAccuracy) {
  const CopyConfig cfg{4, 2, 3, 2};
  Rng rng(10);
  const CopyingBatch b = gen_copying_batch(cfg, rng);
  const auto xs = one_hot(b.inputs, cfg.vocab());
  ASSERT_EQ(xs.size(), cfg.seq_len());
  for (std::size_t t = 0; t < xs.size(); ++t)
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(std::accumulate(xs[t].row(i).begin(), xs[t].row(i).end(), 0.0), 1.0);
      EXPECT_EQ(xs[t](i, static_cast<std::size_t>(b.inputs[t][i])), 1.0);
    }
  // Perfect predictions from the targets themselves.
  const auto perfect = one_hot(b.targets, cfg.vocab());
  EXPECT_EQ(recall_accuracy(cfg, perfect, b.targets), 1.0);
  EXPECT_THROW(one_hot(TokenSteps{{9}}, 4), DomainError);
}

namespace {

std::string write_fixture(const std::string& name, const std::vector<unsigned char>& bytes) {
  const std::string path = ::testing::TempDir() + name;
  std::ofstream os(path, std::ios::binary);
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return path;
}

// Two 2×2 images, authored byte by byte.
const std::vector<unsigned char> kImages{0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                         0, 255, 51, 102, 204, 1, 0, 128};
const std::vector<unsigned char> kLabels{0, 0, 8, 1, 0, 0, 0, 2, 7, 3};

}  // namespace

TEST(Idx, DecodesHandcraftedFixture) {
  const ImageSet s = load_idx(write_fixture("img.idx", kImages), write_fixture("lbl.idx", kLabels));
  ASSERT_EQ(s.count(), 2u);
  EXPECT_EQ(s.rows, 2u);
  EXPECT_EQ(s.cols, 2u);
  const std::vector<double> want{0.0, 1.0, 0.2, 0.4, 0.8, 1.0 / 255, 0.0, 128.0 / 255};
  ASSERT_EQ(s.pixels.size(), want.size());
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_DOUBLE_EQ(s.pixels[k], want[k]) << k;
  EXPECT_EQ(s.labels, (std::vector<int>{7, 3}));
}

TEST(Idx, DistinctErrors) {
  EXPECT_THROW(load_idx_labels(write_fixture("as_labels.idx", kImages)), BadMagicError);
  EXPECT_THROW(load_idx_images(write_fixture("as_images.idx", kLabels)), BadMagicError);
  EXPECT_THROW(load_idx_images(write_fixture("empty.idx", {})), TruncatedError);
  auto cut = kImages;
  cut.pop_back();
  EXPECT_THROW(load_idx_images(write_fixture("cut.idx", cut)), TruncatedError);
  auto extra = kImages;
  extra.push_back(9);
  EXPECT_THROW(load_idx_images(write_fixture("extra.idx", extra)), DimensionError);
  const std::vector<unsigned char> three_labels{0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3};
  EXPECT_THROW(load_idx(write_fixture("i.idx", kImages), write_fixture("l3.idx", three_labels)),
               DimensionError);
  EXPECT_THROW(load_idx_images(::testing::TempDir() + "missing.idx"), Error);
}

TEST(Idx, LimitKeepsLeadingImages) {
  const ImageSet s =
      load_idx(write_fixture("img2.idx", kImages), write_fixture("lbl2.idx", kLabels), 1);
  EXPECT_EQ(s.count(), 1u);
  EXPECT_EQ(s.labels, (std::vector<int>{7}));
}

namespace {

ImageSet random_images(std::size_t count, Rng& rng) {
  ImageSet s;
  s.rows = s.cols = 28;
  s.pixels.resize(count * kMnistPixels);
  for (double& p : s.pixels) p = std::floor(uniform(rng, 0, 256)) / 255.0;
  s.labels.assign(count, 0);
  return s;
}

}  // namespace

TEST(PermutePixels, NoSeedIsIdentity) {
  Rng rng(11);
  const ImageSet s = random_images(3, rng);
  EXPECT_EQ(permute_pixels(s, std::nullopt).pixels, s.pixels);
}

TEST(PermutePixels, IsBijective) {
  PixelPermutation p = PixelPermutation::from_seed(kMnistPixels, 5544);
  std::vector<std::size_t> sorted = p.order;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k) EXPECT_EQ(sorted[k], k);
}

TEST(PermutePixels, InverseRestoresBitExactly) {
  Rng rng(12);
  const ImageSet s = random_images(4, rng);
  const PixelPermutation p = PixelPermutation::from_seed(kMnistPixels, 5544);
  const ImageSet moved = permute_pixels(s, p);
  EXPECT_NE(moved.pixels, s.pixels);
  const ImageSet twice = permute_pixels(moved, p);
  EXPECT_NE(twice.pixels, s.pixels);
  for (std::size_t i = 0; i < s.count(); ++i) {
    const auto back = p.undo(moved.image(i));
    EXPECT_TRUE(std::equal(back.begin(), back.end(), s.image(i).begin()));
  }
  EXPECT_EQ(permute_pixels(s, std::optional<std::uint64_t>{5544}).pixels, moved.pixels);
}

TEST(PixelSequence, RowMajorSteps) {
  Rng rng(13);
  const ImageSet s = random_images(3, rng);
  const std::vector<std::size_t> which{2, 0};
  const auto xs = pixel_sequence(s, which);
  ASSERT_EQ(xs.size(), kMnistPixels);
  EXPECT_EQ(xs[29](0, 0), s.image(2)[29]);
  EXPECT_EQ(xs[783](1, 0), s.image(0)[783]);
}
