#include "dcpr/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcpr/error.hpp"

namespace dcpr {

namespace {

Matrix scaled_gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m = sample_gaussian(rng, rows, cols);
  for (double& v : m.values()) v *= stddev;
  return m;
}

void check_row(const Matrix& x, std::size_t dim, const char* what) {
  if (x.rows() != 1 || x.cols() != dim) {
    throw ShapeError(std::string(what) + ": expected 1x" + std::to_string(dim) + " input, got " +
                     x.shape());
  }
}

// lambda * (x_t + e_t), the noise row added to every history position.
Matrix noise_row(const Matrix& x_t, int t, double lambda) {
  Matrix row = step_embedding(t, x_t.cols());
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = lambda * (x_t[j] + row[j]);
  return row;
}

Matrix dropout_mask(std::size_t rows, std::size_t cols, const Dropout& d) {
  Matrix mask(rows, cols);
  const double keep = 1.0 - d.rate;
  for (double& v : mask.values()) v = d.rng->uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

// softmax((Z W_Q (Z W_K)^T + delta) / sqrt(d)) (Z W_V), summed over positions.
Var attend(Tape& tape, Var z, const GlobalVars& g, const std::optional<Var>& delta,
           Dropout dropout) {
  const std::size_t d = tape.value(g.w_q).rows();
  Var q = tape.matmul(z, g.w_q);
  Var k = tape.matmul(z, g.w_k);
  Var v = tape.matmul(z, g.w_v);
  Var logits = tape.matmul_nt(q, k);
  if (delta) logits = tape.add(logits, *delta);
  logits = tape.scale(logits, 1.0 / std::sqrt(static_cast<double>(d)));
  Var probs = tape.row_softmax(logits);
  if (dropout.rate > 0.0 && dropout.rng != nullptr) {
    const Matrix& p = tape.value(probs);
    probs = tape.mul_const(probs, dropout_mask(p.rows(), p.cols(), dropout));
  }
  Var e = tape.matmul(probs, v);
  return tape.column_sum(e);
}

Var bind(Tape& tape, const Matrix& m, bool trainable) {
  return trainable ? tape.param(m) : tape.constant(m);
}

}  // namespace

GlobalModel init_global_model(std::size_t categories, std::size_t dim, double lambda, Rng& rng) {
  if (categories == 0 || dim == 0) throw InvalidArgument("init_global_model: empty shape");
  GlobalModel m;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  m.category_emb = scaled_gaussian(rng, categories, dim, s);
  m.w_q = scaled_gaussian(rng, dim, dim, s);
  m.w_k = scaled_gaussian(rng, dim, dim, s);
  m.w_v = scaled_gaussian(rng, dim, dim, s);
  m.lambda = lambda;
  return m;
}

std::optional<std::size_t> RegionModel::find_row(std::int64_t poi) const {
  auto it = std::lower_bound(poi_ids.begin(), poi_ids.end(), poi);
  if (it == poi_ids.end() || *it != poi) return std::nullopt;
  return static_cast<std::size_t>(it - poi_ids.begin());
}

std::size_t RegionModel::row_of(std::int64_t poi) const {
  if (auto row = find_row(poi)) return *row;
  throw InvalidArgument("POI " + std::to_string(poi) + " is outside this region");
}

RegionModel init_region_model(GlobalModel base, std::vector<std::int64_t> poi_ids,
                              std::vector<std::size_t> poi_category, double gamma_cat,
                              GapClip clip) {
  if (poi_ids.size() != poi_category.size()) {
    throw InvalidArgument("init_region_model: POI ids and categories differ in length");
  }
  if (!std::is_sorted(poi_ids.begin(), poi_ids.end()) ||
      std::adjacent_find(poi_ids.begin(), poi_ids.end()) != poi_ids.end()) {
    throw InvalidArgument("init_region_model: POI ids must be strictly ascending");
  }
  RegionModel m;
  const std::size_t d = base.dim();
  m.poi_emb = Matrix(poi_ids.size(), d);
  for (std::size_t i = 0; i < poi_ids.size(); ++i) {
    if (poi_category[i] >= base.num_categories()) {
      throw InvalidArgument("POI " + std::to_string(poi_ids[i]) + " has unknown category index " +
                            std::to_string(poi_category[i]));
    }
    auto src = base.category_emb.row(poi_category[i]);
    std::copy(src.begin(), src.end(), m.poi_emb.row(i).begin());
  }
  m.unit_spatial = Matrix(1, d);
  m.unit_temporal = Matrix(1, d);
  m.base = std::move(base);
  m.gamma_cat = gamma_cat;
  m.clip = clip;
  m.poi_ids = std::move(poi_ids);
  m.poi_category = std::move(poi_category);
  return m;
}

PatchModel init_patch_identity(std::size_t dim, double shift) {
  PatchModel p;
  for (std::size_t l = 0; l < 4; ++l) {
    p.weight[l] = Matrix::identity(dim);
    p.bias[l] = Matrix(1, dim);
  }
  p.bias[0].fill(shift);
  p.bias[3].fill(-shift);
  return p;
}

PatchModel init_patch_random(std::size_t dim, Rng& rng) {
  PatchModel p;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t l = 0; l < 4; ++l) {
    p.weight[l] = scaled_gaussian(rng, dim, dim, s);
    p.bias[l] = scaled_gaussian(rng, 1, dim, 0.1);
  }
  return p;
}

Matrix step_embedding(int t, std::size_t dim) {
  if (t < 0) throw InvalidArgument("step_embedding: negative step");
  Matrix e(1, dim);
  for (std::size_t j = 0; j < dim; j += 2) {
    const double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(dim));
    e[j] = std::sin(t * freq);
    if (j + 1 < dim) e[j + 1] = std::cos(t * freq);
  }
  return e;
}

Matrix spatial_gaps(std::span<const Visit> history, const GapClip& clip) {
  const std::size_t n = history.size();
  Matrix g(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double km = haversine({history[a].lat, history[a].lon}, {history[b].lat, history[b].lon});
      g(a, b) = g(b, a) = std::min(km, clip.max_km);
    }
  return g;
}

Matrix temporal_gaps(std::span<const Visit> history, const GapClip& clip) {
  const std::size_t n = history.size();
  Matrix g(n, n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double hours =
          std::abs(static_cast<double>(history[a].timestamp - history[b].timestamp)) / 3600.0;
      g(a, b) = g(b, a) = std::min(hours, clip.max_hours);
    }
  return g;
}

Matrix spatiotemporal_matrix(std::span<const Visit> history, const Matrix& unit_spatial,
                             const Matrix& unit_temporal, const GapClip& clip) {
  double s = 0.0;
  double t = 0.0;
  for (double v : unit_spatial.values()) s += v;
  for (double v : unit_temporal.values()) t += v;
  const Matrix gs = spatial_gaps(history, clip);
  const Matrix gt = temporal_gaps(history, clip);
  Matrix out(gs.rows(), gs.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gs[i] * s + gt[i] * t;
  return out;
}

// ---------------------------------------------------------------------------

GlobalVars bind_global(Tape& tape, const GlobalModel& m, bool trainable) {
  return {bind(tape, m.category_emb, trainable), bind(tape, m.w_q, trainable),
          bind(tape, m.w_k, trainable), bind(tape, m.w_v, trainable)};
}

RegionVars bind_region(Tape& tape, const RegionModel& m, bool train_base, bool train_injected) {
  RegionVars v;
  v.base = bind_global(tape, m.base, train_base);
  v.poi_emb = bind(tape, m.poi_emb, train_injected);
  v.unit_spatial = bind(tape, m.unit_spatial, train_injected);
  v.unit_temporal = bind(tape, m.unit_temporal, train_injected);
  return v;
}

PatchVars bind_patch(Tape& tape, const PatchModel& m, bool trainable) {
  PatchVars v;
  for (std::size_t l = 0; l < 4; ++l) {
    v.weight[l] = bind(tape, m.weight[l], trainable);
    v.bias[l] = bind(tape, m.bias[l], trainable);
  }
  return v;
}

Var global_forward(Tape& tape, const GlobalModel& m, const GlobalVars& vars, const Matrix& x_t,
                   std::span<const std::size_t> history, int t, Dropout dropout) {
  if (history.empty()) throw InvalidArgument("global_forward: empty history");
  check_row(x_t, m.dim(), "global_forward");
  for (std::size_t c : history) {
    if (c >= m.num_categories()) {
      throw InvalidArgument("global_forward: unknown category index " + std::to_string(c));
    }
  }
  Var z = tape.gather_rows(vars.category_emb, history);
  z = tape.add_row(z, tape.constant(noise_row(x_t, t, m.lambda)));
  return attend(tape, z, vars, std::nullopt, dropout);
}

Var region_forward(Tape& tape, const RegionModel& m, const RegionVars& vars, const Matrix& x_t,
                   std::span<const Visit> history, int t, Dropout dropout) {
  if (history.empty()) throw InvalidArgument("region_forward: empty history");
  check_row(x_t, m.dim(), "region_forward");
  std::vector<std::size_t> rows(history.size());
  std::vector<std::size_t> cats(history.size());
  for (std::size_t i = 0; i < history.size(); ++i) {
    rows[i] = m.row_of(history[i].poi);
    cats[i] = m.poi_category[rows[i]];
  }
  Var z = tape.gather_rows(vars.poi_emb, rows);
  Var zc = tape.scale(tape.gather_rows(vars.base.category_emb, cats), m.gamma_cat);
  z = tape.add(z, zc);
  z = tape.add_row(z, tape.constant(noise_row(x_t, t, m.base.lambda)));

  Var delta = tape.add(tape.scalar_times(tape.sum(vars.unit_spatial), spatial_gaps(history, m.clip)),
                       tape.scalar_times(tape.sum(vars.unit_temporal), temporal_gaps(history, m.clip)));
  return attend(tape, z, vars.base, delta, dropout);
}

Var patch_forward(Tape& tape, const PatchVars& vars, Var x) {
  const std::size_t d = tape.value(vars.weight[0]).rows();
  check_row(tape.value(x), d, "patch_forward");
  Var h = x;
  for (std::size_t l = 0; l < 4; ++l) {
    h = tape.add_row(tape.matmul(h, vars.weight[l]), vars.bias[l]);
    if (l < 3) h = tape.relu(h);
  }
  return h;
}

Var ce_loss(Tape& tape, Var x0_hat, Var targets, LossForm form) {
  const std::size_t n = tape.value(targets).rows();
  if (n < 2) throw InvalidArgument("ce_loss: at least one negative is required");
  const double k = static_cast<double>(n - 1);
  Var scores = tape.matmul_nt(x0_hat, targets);
  Matrix weights(1, n);
  weights[0] = -1.0;
  if (form == LossForm::kPrinted) {
    for (std::size_t i = 1; i < n; ++i) weights[i] = 1.0 / k;
    return tape.weighted_sum(tape.log_sigmoid(scores), weights);
  }
  Matrix signs(1, n, -1.0);
  signs[0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) weights[i] = -1.0 / k;
  return tape.weighted_sum(tape.log_sigmoid(tape.mul_const(scores, signs)), weights);
}

// ---------------------------------------------------------------------------

Matrix global_forward(const GlobalModel& m, const Matrix& x_t,
                      std::span<const std::size_t> history, int t) {
  Tape tape;
  GlobalVars vars = bind_global(tape, m, false);
  return tape.value(global_forward(tape, m, vars, x_t, history, t));
}

Matrix region_forward(const RegionModel& m, const Matrix& x_t, std::span<const Visit> history,
                      int t) {
  Tape tape;
  RegionVars vars = bind_region(tape, m, false, false);
  return tape.value(region_forward(tape, m, vars, x_t, history, t));
}

Matrix patch_forward(const PatchModel& p, const Matrix& x) {
  Tape tape;
  PatchVars vars = bind_patch(tape, p, false);
  return tape.value(patch_forward(tape, vars, tape.constant(x)));
}

double ce_loss(const Matrix& x0_hat, const Matrix& x0, std::span<const Matrix> negatives,
               LossForm form) {
  if (negatives.empty()) throw InvalidArgument("ce_loss: empty negative set");
  Matrix targets(negatives.size() + 1, x0.cols());
  check_row(x0_hat, x0.cols(), "ce_loss");
  check_row(x0, x0.cols(), "ce_loss");
  std::copy(x0.values().begin(), x0.values().end(), targets.row(0).begin());
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    check_row(negatives[i], x0.cols(), "ce_loss");
    std::copy(negatives[i].values().begin(), negatives[i].values().end(),
              targets.row(i + 1).begin());
  }
  Tape tape;
  return tape.value(ce_loss(tape, tape.constant(x0_hat), tape.constant(targets), form))[0];
}

}  // namespace dcpr
