#pragma once

// The three denoising networks:
//   GlobalModel  - category-level attention denoiser trained in the cloud.
//   RegionModel  - frozen GlobalModel plus region POI embeddings and
//                  spatio-temporal unit embeddings, trained on an edge server.
//   PatchModel   - per-user MLP applied to the region model's estimate.
//
// Every forward pass exists twice: a taped version used for training and
// gradient checks, and a plain version used for inference.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dcpr/geo.hpp"
#include "dcpr/numerics.hpp"

namespace dcpr {

using Var = Tape::Var;

inline constexpr double kDefaultLambda = 0.003;
inline constexpr double kDefaultGammaCat = 0.7;

struct GlobalModel {
  Matrix category_emb;  // |C| x d
  Matrix w_q;           // d x d
  Matrix w_k;
  Matrix w_v;
  double lambda = kDefaultLambda;

  std::size_t dim() const { return w_q.rows(); }
  std::size_t num_categories() const { return category_emb.rows(); }
};

GlobalModel init_global_model(std::size_t categories, std::size_t dim, double lambda, Rng& rng);

// One check-in as seen by the region and patch denoisers.
struct Visit {
  std::int64_t poi = 0;
  double lat = 0.0;
  double lon = 0.0;
  std::int64_t timestamp = 0;  // Unix seconds
};

// Gaps beyond these are clipped before entering the attention logits.
struct GapClip {
  double max_km = 100.0;
  double max_hours = 168.0;
};

struct RegionModel {
  GlobalModel base;
  Matrix poi_emb;        // |P_r| x d, row i belongs to poi_ids[i]
  Matrix unit_spatial;   // 1 x d, one kilometre
  Matrix unit_temporal;  // 1 x d, one hour
  double gamma_cat = kDefaultGammaCat;
  GapClip clip;
  std::vector<std::int64_t> poi_ids;       // ascending
  std::vector<std::size_t> poi_category;   // dense category index per row

  std::size_t dim() const { return base.dim(); }
  std::size_t num_pois() const { return poi_ids.size(); }
  std::optional<std::size_t> find_row(std::int64_t poi) const;
  // Throws InvalidArgument for POIs outside the region.
  std::size_t row_of(std::int64_t poi) const;
};

// POI embeddings start as copies of their category rows, unit embeddings at
// zero, so the fresh model reproduces the base model's attention.
RegionModel init_region_model(GlobalModel base, std::vector<std::int64_t> poi_ids,
                              std::vector<std::size_t> poi_category, double gamma_cat,
                              GapClip clip = {});

// Three hidden ReLU layers of width d and a linear output layer of width d.
struct PatchModel {
  std::array<Matrix, 4> weight;  // d x d
  std::array<Matrix, 4> bias;    // 1 x d

  std::size_t dim() const { return weight[0].rows(); }
};

// Exact identity map for inputs with every coordinate above -shift.
PatchModel init_patch_identity(std::size_t dim, double shift);
PatchModel init_patch_random(std::size_t dim, Rng& rng);

// Sinusoidal encoding: entry 2i = sin(t / 10000^(2i/d)), entry 2i+1 = cos(...).
Matrix step_embedding(int t, std::size_t dim);

// M x M absolute gaps (kilometres / hours) between history positions, clipped.
Matrix spatial_gaps(std::span<const Visit> history, const GapClip& clip);
Matrix temporal_gaps(std::span<const Visit> history, const GapClip& clip);
// Entry (a, b) = sum of the d-vector gap_s(a,b) * unit_spatial + gap_t(a,b) * unit_temporal.
Matrix spatiotemporal_matrix(std::span<const Visit> history, const Matrix& unit_spatial,
                             const Matrix& unit_temporal, const GapClip& clip);

enum class LossForm {
  kPrinted,  // -(log s(x0_hat.x0) - mean_n log s(x0_hat.e_n))
  kBce,      // -(log s(x0_hat.x0) + mean_n log s(-x0_hat.e_n))
};

// Attention-probability dropout, active only when rate > 0 and rng is set.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;
};

// ---------------------------------------------------------------------------
// Taped forward passes

struct GlobalVars {
  Var category_emb, w_q, w_k, w_v;
};
struct RegionVars {
  GlobalVars base;
  Var poi_emb, unit_spatial, unit_temporal;
};
struct PatchVars {
  std::array<Var, 4> weight, bias;
};

// Parameters bound as trainable leaves or as constants (frozen).
GlobalVars bind_global(Tape& tape, const GlobalModel& m, bool trainable);
RegionVars bind_region(Tape& tape, const RegionModel& m, bool train_base, bool train_injected);
PatchVars bind_patch(Tape& tape, const PatchModel& m, bool trainable);

Var global_forward(Tape& tape, const GlobalModel& m, const GlobalVars& vars, const Matrix& x_t,
                   std::span<const std::size_t> history, int t, Dropout dropout = {});
Var region_forward(Tape& tape, const RegionModel& m, const RegionVars& vars, const Matrix& x_t,
                   std::span<const Visit> history, int t, Dropout dropout = {});
Var patch_forward(Tape& tape, const PatchVars& vars, Var x);

// `targets` holds the positive embedding in row 0 and negatives below it.
Var ce_loss(Tape& tape, Var x0_hat, Var targets, LossForm form = LossForm::kPrinted);

// ---------------------------------------------------------------------------
// Plain forward passes

Matrix global_forward(const GlobalModel& m, const Matrix& x_t,
                      std::span<const std::size_t> history, int t);
Matrix region_forward(const RegionModel& m, const Matrix& x_t, std::span<const Visit> history,
                      int t);
Matrix patch_forward(const PatchModel& p, const Matrix& x);

double ce_loss(const Matrix& x0_hat, const Matrix& x0, std::span<const Matrix> negatives,
               LossForm form = LossForm::kPrinted);

}  // namespace dcpr
