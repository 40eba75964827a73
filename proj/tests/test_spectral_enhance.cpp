#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "fd_oracle.hpp"
#include "golden.hpp"
#include "sert/errors.hpp"
#include "sert/ops.hpp"
#include "sert/spectral_enhance.hpp"

using namespace sert;
namespace o = sert::ops;

namespace {

void expect_bitwise(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "at " << i;
}

SEWeights random_se(std::size_t c, std::size_t k, std::uint64_t seed) {
  return {fd::random_tensor({c, k}, seed, -0.5, 0.5), fd::random_tensor({c, k}, seed + 1, -0.5, 0.5)};
}

}  // namespace

TEST(Cubes, GridCount) {
  CubeGrid g = partition_cubes(fd::random_tensor({1, 8, 8, 3}, 1), 4, false);
  EXPECT_EQ(g.patches.shape(), (Shape{4, 16, 3}));
  EXPECT_EQ(g.grid_rows(), 2u);
  EXPECT_EQ(g.shift_rows, 0u);
}

TEST(Cubes, ShiftedRoundTrip) {
  Tensor z = fd::random_tensor({2, 8, 12, 3}, 2);
  for (bool shifted : {false, true}) {
    CubeGrid g = partition_cubes(z, 4, shifted);
    expect_bitwise(merge_cubes(g.patches, g), z);
  }
  CubeGrid odd = partition_cubes(z, 4, 3, true);
  EXPECT_EQ(odd.shift_rows, 2u);
  EXPECT_EQ(odd.shift_cols, 1u);
  expect_bitwise(merge_cubes(odd.patches, odd), z);
}

TEST(Cubes, ShiftMixesAcrossBorders) {
  // Two-tone map: each unshifted 4x4 patch is constant.
  Tensor z({1, 8, 8, 1});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) z.mutable_data()[i * 8 + j] = ((i / 4 + j / 4) % 2) ? 1.0 : 0.0;
  auto mixed_patches = [](const CubeGrid& g) {
    std::size_t mixed = 0;
    for (std::size_t p = 0; p < g.patches.dim(0); ++p) {
      const double first = g.patches[p * 16];
      for (std::size_t t = 1; t < 16; ++t) {
        if (g.patches[p * 16 + t] != first) {
          ++mixed;
          break;
        }
      }
    }
    return mixed;
  };
  EXPECT_EQ(mixed_patches(partition_cubes(z, 4, false)), 0u);
  EXPECT_EQ(mixed_patches(partition_cubes(z, 4, true)), 4u);
}

TEST(Cubes, OversizedPatchIsConfigError) {
  EXPECT_THROW(partition_cubes(Tensor({1, 4, 4, 2}), 8, false), ConfigError);
}

TEST(Squeeze, ConstantPatch) {
  Tensor zc = squeeze(Tensor({2, 9, 3}, 0.25));
  ASSERT_EQ(zc.shape(), (Shape{2, 3}));
  for (double v : zc.data()) EXPECT_EQ(v, 0.25);
}

TEST(Squeeze, MeanOfFourPixels) {
  Tensor p({1, 4, 1}, std::vector<double>{0, 1, 2, 3});
  EXPECT_EQ(squeeze(p)[0], 1.5);
}

TEST(Squeeze, PixelOrderIrrelevant) {
  Tensor p = fd::random_tensor({1, 4, 2}, 3);
  Tensor q({1, 4, 2}, std::vector<double>{p[6], p[7], p[2], p[3], p[0], p[1], p[4], p[5]});
  Tensor a = squeeze(p), b = squeeze(q);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a[c], b[c], 1e-15);
}

TEST(ProjectRank, SelectorTakesLeadingChannels) {
  Tensor w({4, 2});
  w.mutable_data()[0] = 1.0;  // (0, 0)
  w.mutable_data()[3] = 1.0;  // (1, 1)
  Tensor zc({1, 4}, std::vector<double>{5, 6, 7, 8});
  Tensor zk = project_rank(zc, w);
  EXPECT_EQ(zk[0], 5.0);
  EXPECT_EQ(zk[1], 6.0);
  Tensor zero = project_rank(Tensor({1, 4}), w);
  EXPECT_EQ(zero[0], 0.0);
  EXPECT_EQ(zero[1], 0.0);
}

TEST(ProjectRank, ShapeMismatch) { EXPECT_THROW(project_rank(Tensor({1, 4}), Tensor({3, 2})), DimensionError); }

TEST(ProjectRank, Gradient) {
  auto r = fd::check([](const auto& in) { return project_rank(in[0], in[1]); },
                     {fd::random_tensor({3, 5}, 4), fd::random_tensor({5, 2}, 5)});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(MemoryRead, IdenticalColumnsReturnThatColumn) {
  MemoryBank bank{Tensor({3, 4})};
  const double col[3] = {0.3, -1.2, 2.0};
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t e = 0; e < 4; ++e) bank.m.mutable_data()[k * 4 + e] = col[k];
  MemoryReadout r = memory_read(fd::random_tensor({2, 3}, 6, -4, 4), bank);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.low_rank[b * 3 + k], col[k], 1e-14);
}

TEST(MemoryRead, SharpenedQuerySelectsColumn) {
  // Orthogonal columns e0, e1, e2 scaled differently; query points at column 1.
  MemoryBank bank{Tensor({3, 3}, std::vector<double>{0.7, 0, 0, 0, 1.3, 0, 0, 0, 0.9})};
  Tensor zk({1, 3}, std::vector<double>{0, 100.0, 0});
  MemoryReadout r = memory_read(zk, bank);
  EXPECT_GT(r.coefficients[1], 0.99);
  EXPECT_NEAR(r.low_rank[1], 1.3, 0.013);
  EXPECT_NEAR(r.low_rank[0], 0.0, 0.013);
  EXPECT_NEAR(r.low_rank[2], 0.0, 0.013);
}

TEST(MemoryRead, HandExample) {
  MemoryBank bank{Tensor({1, 2}, std::vector<double>{1, 3})};
  MemoryReadout r = memory_read(Tensor({1, 1}, 0.0), bank);
  EXPECT_EQ(r.coefficients[0], 0.5);
  EXPECT_EQ(r.coefficients[1], 0.5);
  EXPECT_EQ(r.low_rank[0], 2.0);
}

TEST(MemoryRead, ConvexCombinationProperties) {
  MemoryBank bank{fd::random_tensor({4, 7}, 7, -2, 2)};
  MemoryReadout r = memory_read(fd::random_tensor({20, 4}, 8, -3, 3), bank);
  for (std::size_t b = 0; b < 20; ++b) {
    double s = 0.0;
    for (std::size_t e = 0; e < 7; ++e) s += r.coefficients[b * 7 + e];
    EXPECT_NEAR(s, 1.0, 1e-12);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto row = bank.m.data().subspan(k * 7, 7);
      const double lo = *std::min_element(row.begin(), row.end());
      const double hi = *std::max_element(row.begin(), row.end());
      EXPECT_GE(r.low_rank[b * 4 + k], lo - 1e-12);
      EXPECT_LE(r.low_rank[b * 4 + k], hi + 1e-12);
    }
  }
}

TEST(MemoryRead, ShapeMismatch) {
  EXPECT_THROW(memory_read(Tensor({1, 3}), MemoryBank{Tensor({2, 4})}), DimensionError);
}

TEST(Rescale, IdentityAndZeroGates) {
  Tensor p = fd::random_tensor({2, 4, 3}, 9);
  Tensor zl({2, 1}, 1.0);
  expect_bitwise(rescale(p, zl, Tensor({3, 1}, 1.0)), p);
  const Tensor zeroed = rescale(p, zl, Tensor({3, 1}, 0.0));
  for (double v : zeroed.data()) EXPECT_EQ(v, 0.0);
}

TEST(Rescale, HandGate) {
  Tensor p({1, 2, 3}, 2.0);
  Tensor w({3, 1}, std::vector<double>{0.5, 1, 2});
  Tensor out = rescale(p, Tensor({1, 1}, 1.0), w);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(out[t * 3 + 0], 1.0);
    EXPECT_EQ(out[t * 3 + 1], 2.0);
    EXPECT_EQ(out[t * 3 + 2], 4.0);
  }
}

TEST(Rescale, SigmoidVariant) {
  Tensor out = rescale(Tensor({1, 1, 2}, 1.0), Tensor({1, 1}, 0.0), Tensor({2, 1}, 3.0), true);
  EXPECT_EQ(out[0], 0.5);
  EXPECT_EQ(out[1], 0.5);
}

TEST(Rescale, ShapeMismatch) {
  EXPECT_THROW(rescale(Tensor({1, 2, 3}), Tensor({1, 1}), Tensor({4, 1})), DimensionError);
}

TEST(SeForward, ComposesToIdentity) {
  // Identical memory columns fix Zl = 2, and W_c = 0.5 turns that into a unit gate.
  const std::size_t C = 4;
  SEWeights w = random_se(C, 1, 10);
  w.w_c = Tensor({C, 1}, 0.5);
  MemoryBank bank{Tensor({1, 5}, 2.0)};
  Tensor z = fd::random_tensor({1, 6, 7, C}, 11);
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 4;
  for (bool shifted : {false, true}) {
    opt.shifted = shifted;
    Tensor out = se_forward(z, opt, w, bank);
    ASSERT_EQ(out.shape(), z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(out[i], z[i], 1e-15);
  }
}

TEST(SeForward, ShapeKeptOnPaddingPath) {
  SEWeights w = random_se(6, 2, 12);
  MemoryBank bank{fd::random_tensor({2, 5}, 13)};
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 4;
  for (auto [H, W] : {std::pair<std::size_t, std::size_t>{5, 9}, {3, 3}, {4, 11}}) {
    opt.shifted = H % 2 == 1;
    EXPECT_EQ(se_forward(fd::random_tensor({2, H, W, 6}, 14), opt, w, bank).shape(), (Shape{2, H, W, 6}));
  }
  opt.whole_map = true;
  EXPECT_EQ(se_forward(fd::random_tensor({1, 5, 9, 6}, 15), opt, w, bank).shape(), (Shape{1, 5, 9, 6}));
}

TEST(SeForward, GateUniformWithinPatch) {
  const std::size_t C = 5;
  SEWeights w = random_se(C, 2, 16);
  MemoryBank bank{fd::random_tensor({2, 4}, 17)};
  Tensor z = fd::random_tensor({1, 8, 8, C}, 18, 0.1, 1.0);
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 4;
  Tensor out = se_forward(z, opt, w, bank);
  for (std::size_t pr = 0; pr < 2; ++pr) {
    for (std::size_t pc = 0; pc < 2; ++pc) {
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t ref = ((pr * 4) * 8 + pc * 4) * C + c;
        const double ratio = out[ref] / z[ref];
        for (std::size_t i = 0; i < 4; ++i)
          for (std::size_t j = 0; j < 4; ++j) {
            const std::size_t at = ((pr * 4 + i) * 8 + pc * 4 + j) * C + c;
            EXPECT_NEAR(out[at] / z[at], ratio, 1e-12);
          }
      }
    }
  }
}

TEST(SeForward, PixelPermutationInsidePatchKeepsReadout) {
  const std::size_t C = 4;
  SEWeights w = random_se(C, 2, 19);
  MemoryBank bank{fd::random_tensor({2, 6}, 20)};
  Tensor z = fd::random_tensor({1, 4, 4, C}, 21);
  // Swap two pixels inside the first 2x2 patch.
  Tensor zp = z.clone();
  auto d = zp.mutable_data();
  for (std::size_t c = 0; c < C; ++c) std::swap(d[0 * C + c], d[(1 * 4 + 1) * C + c]);
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 2;
  SeTrace a, b;
  se_forward(z, opt, w, bank, &a);
  se_forward(zp, opt, w, bank, &b);
  for (std::size_t i = 0; i < a.low_rank.size(); ++i) EXPECT_EQ(a.low_rank[i], b.low_rank[i]);
  for (std::size_t i = 0; i < a.coefficients.size(); ++i) EXPECT_EQ(a.coefficients[i], b.coefficients[i]);
}

TEST(SeForward, WithoutMemoryGateUsesProjection) {
  const std::size_t C = 4;
  SEWeights w = random_se(C, 2, 22);
  Tensor z = fd::random_tensor({1, 4, 4, C}, 23);
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 4;
  opt.use_memory = false;
  SeTrace t;
  se_forward(z, opt, w, MemoryBank{}, &t);
  Tensor zk = project_rank(squeeze(partition_cubes(z, 4, false).patches), w.w_k);
  expect_bitwise(t.low_rank, zk);
  EXPECT_FALSE(t.coefficients.defined());
}

TEST(SeForward, Golden) {
  SEWeights w = random_se(4, 2, 100);
  MemoryBank bank{fd::random_tensor({2, 5}, 200)};
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 4;
  opt.shifted = true;
  golden::expect_matches("se_forward_8x8x4", se_forward(fd::random_tensor({1, 8, 8, 4}, 300), opt, w, bank));
}

TEST(SeForward, AllParametersPassFiniteDifferences) {
  SeOptions opt;
  opt.patch_rows = opt.patch_cols = 3;
  opt.shifted = true;
  auto f = [&](const std::vector<Tensor>& t) { return se_forward(t[0], opt, SEWeights{t[1], t[2]}, MemoryBank{t[3]}); };
  auto r = fd::check(f, {fd::random_tensor({1, 5, 4, 4}, 24), fd::random_tensor({4, 2}, 25),
                         fd::random_tensor({4, 2}, 26), fd::random_tensor({2, 5}, 27)});
  EXPECT_LT(r.max_rel_error, 1e-4);
  opt.sigmoid_gate = true;
  EXPECT_LT(fd::check(f, {fd::random_tensor({1, 5, 4, 4}, 28), fd::random_tensor({4, 2}, 29),
                          fd::random_tensor({4, 2}, 30), fd::random_tensor({2, 5}, 31)})
                .max_rel_error,
            1e-4);
}

TEST(SeWeights, RankMustBeBelowChannels) {
  EXPECT_THROW(SEWeights::zeros(4, 4), ConfigError);
  EXPECT_THROW(SEWeights::zeros(4, 0), ConfigError);
  EXPECT_NO_THROW(SEWeights::zeros(4, 3));
}
