#include <gtest/gtest.h>

#include <cmath>

#include "dcpr/denoisers.hpp"
#include "dcpr/error.hpp"

using namespace dcpr;

namespace {

// Direct loop implementation of the attention denoiser.
Matrix attention_oracle(const std::vector<std::vector<double>>& z, const GlobalModel& m, const Matrix* delta) {
  const std::size_t M = z.size(), d = m.dim();
  auto proj = [&](const Matrix& w) {
    std::vector<std::vector<double>> out(M, std::vector<double>(d, 0.0));
    for (std::size_t a = 0; a < M; ++a)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t i = 0; i < d; ++i) out[a][j] += z[a][i] * w(i, j);
    return out;
  };
  const auto q = proj(m.w_q), k = proj(m.w_k), v = proj(m.w_v);
  Matrix out(1, d);
  for (std::size_t a = 0; a < M; ++a) {
    std::vector<double> logit(M);
    double mx = -1e300;
    for (std::size_t b = 0; b < M; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += q[a][j] * k[b][j];
      if (delta) s += (*delta)(a, b);
      logit[b] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, logit[b]);
    }
    double den = 0;
    for (double& l : logit) den += (l = std::exp(l - mx));
    for (std::size_t b = 0; b < M; ++b)
      for (std::size_t j = 0; j < d; ++j) out[j] += logit[b] / den * v[b][j];
  }
  return out;
}

std::vector<double> noise_row(const Matrix& x_t, int t, double lambda) {
  std::vector<double> r(x_t.cols());
  for (std::size_t j = 0; j < r.size(); ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(r.size()));
    const double e = j % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq);
    r[j] = lambda * (x_t[j] + e);
  }
  return r;
}

}  // namespace

TEST(StepEmbedding, SinCosPairs) {
  const Matrix e = step_embedding(5, 6);
  EXPECT_DOUBLE_EQ(e[0], std::sin(5.0));
  EXPECT_DOUBLE_EQ(e[1], std::cos(5.0));
  EXPECT_NEAR(e[2], std::sin(5.0 / std::pow(10000.0, 2.0 / 6.0)), 1e-15);
  EXPECT_NEAR(e[3], std::cos(5.0 / std::pow(10000.0, 2.0 / 6.0)), 1e-15);
}

TEST(GlobalDenoiser, MatchesLoopOracle) {
  Rng rng(1);
  const GlobalModel g = init_global_model(5, 6, 0.05, rng);
  const Matrix x_t = sample_gaussian(rng, 1, 6);
  const std::vector<std::size_t> hist{3, 1, 4, 1};
  const auto noise = noise_row(x_t, 33, g.lambda);
  std::vector<std::vector<double>> z;
  for (std::size_t c : hist) {
    std::vector<double> row(6);
    for (std::size_t j = 0; j < 6; ++j) row[j] = g.category_emb(c, j) + noise[j];
    z.push_back(row);
  }
  const Matrix got = global_forward(g, x_t, hist, 33);
  const Matrix want = attention_oracle(z, g, nullptr);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
}

TEST(GlobalDenoiser, RejectsBadInput) {
  Rng rng(1);
  const GlobalModel g = init_global_model(3, 4, 0.05, rng);
  const std::vector<std::size_t> empty, bad{7}, ok{0};
  EXPECT_THROW(global_forward(g, Matrix(1, 4), empty, 1), InvalidArgument);
  EXPECT_THROW(global_forward(g, Matrix(1, 4), bad, 1), InvalidArgument);
  EXPECT_THROW(global_forward(g, Matrix(1, 5), ok, 1), ShapeError);
}

TEST(RegionDenoiser, MatchesLoopOracleWithGapBias) {
  Rng rng(2);
  const GlobalModel g = init_global_model(3, 4, 0.05, rng);
  RegionModel r = init_region_model(g, {5, 8, 9}, {2, 0, 1}, 0.7);
  for (double& v : r.poi_emb.values()) v += 0.1 * rng.normal();
  r.unit_spatial = Matrix{{0.01, -0.02, 0.005, 0.0}};
  r.unit_temporal = Matrix{{0.003, 0.001, -0.002, 0.004}};
  const std::vector<Visit> hist{{8, 40.0, -74.0, 0}, {5, 40.1, -74.1, 3600}, {9, 40.05, -73.9, 36000}};
  const Matrix x_t = sample_gaussian(rng, 1, 4);
  const auto noise = noise_row(x_t, 12, g.lambda);
  std::vector<std::vector<double>> z;
  for (const auto& v : hist) {
    const std::size_t row = r.row_of(v.poi);
    std::vector<double> e(4);
    for (std::size_t j = 0; j < 4; ++j)
      e[j] = r.poi_emb(row, j) + 0.7 * g.category_emb(r.poi_category[row], j) + noise[j];
    z.push_back(e);
  }
  Matrix delta(3, 3);
  const double s = 0.01 - 0.02 + 0.005, t = 0.003 + 0.001 - 0.002 + 0.004;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      const double km = haversine({hist[a].lat, hist[a].lon}, {hist[b].lat, hist[b].lon});
      const double h = std::abs(static_cast<double>(hist[a].timestamp - hist[b].timestamp)) / 3600.0;
      delta(a, b) = km * s + h * t;
    }
  const Matrix got = region_forward(r, x_t, hist, 12);
  const Matrix want = attention_oracle(z, g, &delta);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], want[j], 1e-12);
  EXPECT_NEAR(spatiotemporal_matrix(hist, r.unit_spatial, r.unit_temporal, r.clip)(0, 2), delta(0, 2), 1e-12);
}

TEST(RegionDenoiser, GapsAreClipped) {
  const std::vector<Visit> hist{{1, 0.0, 0.0, 0}, {2, 10.0, 0.0, 3600 * 1000}};
  const GapClip clip{100.0, 168.0};
  EXPECT_DOUBLE_EQ(spatial_gaps(hist, clip)(0, 1), 100.0);
  EXPECT_DOUBLE_EQ(temporal_gaps(hist, clip)(1, 0), 168.0);
  EXPECT_DOUBLE_EQ(spatial_gaps(hist, clip)(0, 0), 0.0);
}

TEST(RegionDenoiser, FreshModelCopiesCategoryRows) {
  Rng rng(3);
  const GlobalModel g = init_global_model(2, 4, 0.05, rng);
  const RegionModel r = init_region_model(g, {1, 2, 3}, {1, 0, 1}, 0.7);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(r.poi_emb(2, j), g.category_emb(1, j));
  EXPECT_EQ(max_abs(r.unit_spatial), 0.0);
  EXPECT_THROW(r.row_of(4), InvalidArgument);
  EXPECT_THROW(init_region_model(g, {2, 1}, {0, 0}, 0.7), InvalidArgument);
  EXPECT_THROW(init_region_model(g, {1}, {5}, 0.7), InvalidArgument);
}

TEST(Patch, IdentityInitIsExactAboveShift) {
  const PatchModel p = init_patch_identity(5, 3.0);
  const Matrix x{{-2.9, 0.0, 1.5, 100.0, -0.25}};
  EXPECT_EQ(patch_forward(p, x), x);
}

TEST(Patch, ShapeMismatchThrows) {
  const PatchModel p = init_patch_identity(4, 1.0);
  EXPECT_THROW(patch_forward(p, Matrix(1, 5)), ShapeError);
}

TEST(Loss, MatchesClosedForms) {
  const Matrix x0_hat{{0.5, -1.0}};
  const Matrix pos{{1.0, 0.2}};
  const std::vector<Matrix> neg{Matrix{{0.3, 0.4}}, Matrix{{-1.0, 1.0}}};
  auto ls = [](double v) { return -std::log1p(std::exp(-v)); };
  const double sp = 0.5 - 0.2, s1 = 0.15 - 0.4, s2 = -0.5 - 1.0;
  EXPECT_NEAR(ce_loss(x0_hat, pos, neg, LossForm::kPrinted), -(ls(sp) - 0.5 * (ls(s1) + ls(s2))), 1e-14);
  EXPECT_NEAR(ce_loss(x0_hat, pos, neg, LossForm::kBce), -(ls(sp) + 0.5 * (ls(-s1) + ls(-s2))), 1e-14);
  EXPECT_THROW(ce_loss(x0_hat, pos, {}, LossForm::kBce), InvalidArgument);
}

TEST(Dropout, ZeroRateIsDeterministic) {
  Rng rng(4);
  const GlobalModel g = init_global_model(3, 4, 0.05, rng);
  const std::vector<std::size_t> hist{0, 1, 2};
  Tape t1, t2;
  Rng d(9);
  auto a = global_forward(t1, g, bind_global(t1, g, false), Matrix(1, 4), hist, 5, {0.0, &d});
  auto b = global_forward(t2, g, bind_global(t2, g, false), Matrix(1, 4), hist, 5, {0.5, &d});
  EXPECT_EQ(t1.value(a), global_forward(g, Matrix(1, 4), hist, 5));
  EXPECT_NE(t2.value(b), t1.value(a));
}
