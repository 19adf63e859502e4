#include "dcpr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcpr/checkpoint.hpp"
#include "dcpr/error.hpp"

namespace dcpr {

std::size_t validation_draws(std::size_t n_val) {
  if (n_val == 0) return 0;
  return std::min<std::size_t>(kMaxValidationDraws, (kMinValidationSamples + n_val - 1) / n_val);
}

int epochs_to_reach(const StageResult& r, double target) {
  for (const auto& e : r.curve)
    if (e.val_loss <= target) return e.epoch;
  return -1;
}

std::vector<CategoryExample> category_examples(std::span<const std::size_t> seq, int window) {
  std::vector<CategoryExample> out;
  for (std::size_t p = 1; p < seq.size(); ++p) {
    const std::size_t start = p > static_cast<std::size_t>(window) ? p - window : 0;
    out.push_back({{seq.begin() + start, seq.begin() + p}, seq[p]});
  }
  return out;
}

std::vector<Visit> history_window(std::span<const Visit> seq, int window) {
  const std::size_t start = seq.size() > static_cast<std::size_t>(window) ? seq.size() - window : 0;
  return {seq.begin() + start, seq.end()};
}

std::vector<PoiExample> poi_examples(std::span<const Visit> seq, int window) {
  std::vector<PoiExample> out;
  for (std::size_t p = 1; p < seq.size(); ++p) {
    out.push_back({history_window(seq.first(p), window), seq[p].poi});
  }
  return out;
}

std::vector<std::size_t> sample_negatives(Rng& rng, std::size_t vocab, std::size_t target,
                                          int count) {
  if (vocab < 2) throw InvalidArgument("negative sampling needs a vocabulary of at least 2 items");
  std::vector<std::size_t> out(static_cast<std::size_t>(count));
  for (auto& n : out) {
    n = rng.below(vocab - 1);
    if (n >= target) ++n;
  }
  return out;
}

std::uint64_t device_job_id(std::int64_t user, int region) {
  return mix64(static_cast<std::uint64_t>(user)) ^ static_cast<std::uint64_t>(region);
}

namespace {

struct AdamState {
  std::vector<Matrix> m, v;
  long long step = 0;
};

void apply_update(std::span<const ParamGroup> params, std::span<const Matrix> grads,
                  double scale, const TrainConfig& cfg, AdamState& adam) {
  if (cfg.optimizer == Optimizer::kSgd) {
    for (std::size_t g = 0; g < params.size(); ++g) {
      Matrix& p = *params[g].value;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.eta * scale * grads[g][i];
    }
  } else {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (adam.m.empty()) {
      for (const auto& pg : params) {
        adam.m.emplace_back(pg.value->rows(), pg.value->cols());
        adam.v.emplace_back(pg.value->rows(), pg.value->cols());
      }
    }
    ++adam.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
    for (std::size_t g = 0; g < params.size(); ++g) {
      Matrix& p = *params[g].value;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = scale * grads[g][i];
        adam.m[g][i] = b1 * adam.m[g][i] + (1.0 - b1) * gi;
        adam.v[g][i] = b2 * adam.v[g][i] + (1.0 - b2) * gi * gi;
        p[i] -= cfg.eta * (adam.m[g][i] / c1) / (std::sqrt(adam.v[g][i] / c2) + eps);
      }
    }
  }
  if (cfg.precision == Precision::kF32) {
    for (const auto& pg : params) round_to_float(*pg.value);
  }
}

double validation_loss(std::span<const ParamGroup> params, std::size_t n_val,
                       const ExampleLoss& loss, std::uint64_t seed) {
  if (n_val == 0) return 0.0;
  const std::size_t draws = validation_draws(n_val);
  double total = 0.0;
  for (std::size_t i = 0; i < n_val; ++i) {
    for (std::size_t k = 0; k < draws; ++k) {
      Tape tape;
      std::vector<Var> vars;
      for (const auto& pg : params) vars.push_back(tape.constant(*pg.value));
      Rng rng(derive_seed(seed, "validation", i * draws + k));
      total += tape.value(loss(tape, vars, i, true, rng))[0];
    }
  }
  return total / static_cast<double>(n_val * draws);
}

}  // namespace

StageResult fit(std::span<const ParamGroup> params, std::size_t n_train, std::size_t n_val,
                const ExampleLoss& loss, const TrainConfig& cfg, std::uint64_t seed) {
  StageResult result;
  result.train_examples = n_train;
  result.val_examples = n_val;
  Rng rng(seed);
  AdamState adam;

  std::vector<Matrix> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& pg : params) best.push_back(*pg.value);
  };

  double v0 = validation_loss(params, n_val, loss, seed);
  result.curve.push_back({0, 0.0, v0});
  result.best_val_loss = v0;
  snapshot();

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> grads;
  for (const auto& pg : params) grads.emplace_back(pg.value->rows(), pg.value->cols());

  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs && n_train > 0; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& g : grads) g.fill(0.0);
      for (std::size_t b = start; b < end; ++b) {
        Tape tape;
        std::vector<Var> vars;
        for (const auto& pg : params) vars.push_back(tape.param(*pg.value));
        Var l = loss(tape, vars, order[b], false, rng);
        const double lv = tape.value(l)[0];
        if (!std::isfinite(lv)) {
          result.epochs_run = epoch;
          throw StageError("non-finite training loss at epoch " + std::to_string(epoch));
        }
        epoch_loss += lv;
        tape.backward(l);
        for (std::size_t g = 0; g < vars.size(); ++g) {
          const Matrix& gv = tape.grad(vars[g]);
          for (std::size_t i = 0; i < gv.size(); ++i) grads[g][i] += gv[i];
        }
      }
      apply_update(params, grads, 1.0 / static_cast<double>(end - start), cfg, adam);
    }
    const double v = validation_loss(params, n_val, loss, seed);
    if (!std::isfinite(v)) throw StageError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.curve.push_back({epoch, epoch_loss / static_cast<double>(n_train), v});
    result.epochs_run = epoch;
    if (v < result.best_val_loss) {
      result.best_val_loss = v;
      result.best_epoch = epoch;
      since_best = 0;
      snapshot();
    } else if (n_val > 0 && ++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  for (std::size_t g = 0; g < params.size(); ++g) *params[g].value = best[g];
  return result;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Ex>
void split_last(const std::vector<std::vector<Ex>>& per_seq, std::vector<Ex>& train,
                std::vector<Ex>& val) {
  for (const auto& exs : per_seq) {
    if (exs.empty()) continue;
    train.insert(train.end(), exs.begin(), exs.end() - 1);
    val.push_back(exs.back());
  }
}

Dropout train_dropout(const TrainConfig& cfg, bool validation, Rng& rng) {
  return validation ? Dropout{} : Dropout{cfg.dropout, &rng};
}

}  // namespace

GlobalModel train_global(std::span<const std::vector<std::size_t>> sequences,
                         std::size_t num_categories, const TrainConfig& cfg, StageResult* result) {
  cfg.validate();
  std::vector<std::vector<CategoryExample>> per_seq;
  for (const auto& s : sequences) per_seq.push_back(category_examples(s, cfg.history_window));
  std::vector<CategoryExample> train, val;
  split_last(per_seq, train, val);
  if (train.empty() && val.empty()) throw StageError("train_global: no training examples");

  const std::uint64_t seed = derive_seed(cfg.seed, "global", 0);
  Rng init(derive_seed(seed, "init", 0));
  GlobalModel m = init_global_model(num_categories, static_cast<std::size_t>(cfg.dim), cfg.lambda, init);
  if (cfg.precision == Precision::kF32) round_to_float(m);

  const NoiseSchedule sched = build_schedule(cfg.max_step, cfg.w);
  const ParamGroup groups[] = {{"category_emb", &m.category_emb},
                               {"w_q", &m.w_q},
                               {"w_k", &m.w_k},
                               {"w_v", &m.w_v}};

  ExampleLoss loss = [&](Tape& tape, std::span<const Var> p, std::size_t i, bool is_val, Rng& rng) {
    const CategoryExample& ex = is_val ? val[i] : train[i];
    GlobalVars vars{p[0], p[1], p[2], p[3]};
    const int t = sample_step(rng, sched.max_step);
    const Matrix x0 = Matrix::row_vector(m.category_emb.row(ex.target));
    const Matrix x_t = forward_diffuse(x0, t, sched, rng).x_t;
    std::vector<std::size_t> rows{ex.target};
    for (auto n : sample_negatives(rng, num_categories, ex.target, cfg.negatives)) rows.push_back(n);
    Var x0_hat = global_forward(tape, m, vars, x_t, ex.history, t, train_dropout(cfg, is_val, rng));
    return ce_loss(tape, x0_hat, tape.gather_rows(vars.category_emb, rows), cfg.loss);
  };

  StageResult r = fit(groups, train.size(), val.size(), loss, cfg, seed);
  if (result) *result = std::move(r);
  return m;
}

RegionModel specialize_region(const GlobalModel* global, const RegionSplit& region,
                              std::size_t num_categories, const TrainConfig& cfg,
                              StageResult* result) {
  cfg.validate();
  if (region.edge.empty()) {
    throw StageError("specialize_region: region " + std::to_string(region.region) + " has no edge sequences");
  }
  const std::uint64_t seed = derive_seed(cfg.seed, "region", static_cast<std::uint64_t>(region.region));
  Rng init(derive_seed(seed, "init", 0));

  const bool scratch = global == nullptr;
  GlobalModel base = scratch ? init_global_model(num_categories, static_cast<std::size_t>(cfg.dim),
                                                 cfg.lambda, init)
                             : *global;
  RegionModel m = init_region_model(std::move(base), region.poi_ids, region.poi_category,
                                    cfg.gamma_cat, cfg.clip());
  if (scratch) {
    const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
    for (double& v : m.poi_emb.values()) v = s * init.normal();
  }
  if (cfg.precision == Precision::kF32) round_to_float(m);

  std::vector<std::vector<PoiExample>> per_seq;
  for (const auto& s : region.edge) {
    for (const auto& v : s) {
      if (!m.find_row(v.poi)) {
        throw StageError("specialize_region: POI " + std::to_string(v.poi) + " has no category in region " +
                         std::to_string(region.region));
      }
    }
    per_seq.push_back(poi_examples(s, cfg.history_window));
  }
  std::vector<PoiExample> train, val;
  split_last(per_seq, train, val);

  const NoiseSchedule sched = build_schedule(cfg.max_step, cfg.w);
  std::vector<ParamGroup> groups = {{"poi_emb", &m.poi_emb},
                                    {"unit_spatial", &m.unit_spatial},
                                    {"unit_temporal", &m.unit_temporal}};
  if (scratch) {
    groups.push_back({"base.category_emb", &m.base.category_emb});
    groups.push_back({"base.w_q", &m.base.w_q});
    groups.push_back({"base.w_k", &m.base.w_k});
    groups.push_back({"base.w_v", &m.base.w_v});
  }

  ExampleLoss loss = [&](Tape& tape, std::span<const Var> p, std::size_t i, bool is_val, Rng& rng) {
    const PoiExample& ex = is_val ? val[i] : train[i];
    RegionVars vars;
    vars.poi_emb = p[0];
    vars.unit_spatial = p[1];
    vars.unit_temporal = p[2];
    vars.base = scratch ? GlobalVars{p[3], p[4], p[5], p[6]} : bind_global(tape, m.base, false);
    const std::size_t target = m.row_of(ex.target);
    const int t = sample_step(rng, sched.max_step);
    const Matrix x0 = Matrix::row_vector(m.poi_emb.row(target));
    const Matrix x_t = forward_diffuse(x0, t, sched, rng).x_t;
    std::vector<std::size_t> rows{target};
    for (auto n : sample_negatives(rng, m.num_pois(), target, cfg.negatives)) rows.push_back(n);
    Var x0_hat = region_forward(tape, m, vars, x_t, ex.history, t, train_dropout(cfg, is_val, rng));
    return ce_loss(tape, x0_hat, tape.gather_rows(vars.poi_emb, rows), cfg.loss);
  };

  StageResult r = fit(groups, train.size(), val.size(), loss, cfg, seed);
  if (result) *result = std::move(r);
  return m;
}

double patch_shift(const RegionModel& region, std::span<const PoiExample> examples, int max_step) {
  double peak = 0.0;
  const Matrix zero(1, region.dim());
  for (const auto& ex : examples) {
    peak = std::max(peak, max_abs(region_forward(region, zero, ex.history, max_step)));
  }
  return std::max(1.0, 2.0 * peak);
}

PatchModel personalize_device(const RegionModel& region, const DeviceSequence& seq,
                              const TrainConfig& cfg, int region_id, StageResult* result) {
  cfg.validate();
  std::vector<PoiExample> train = poi_examples(seq.train(), cfg.history_window);
  if (train.empty()) {
    throw StageError("personalize_device: user " + std::to_string(seq.user) + " has no training targets");
  }
  std::vector<PoiExample> val{{history_window(seq.val_history(), cfg.history_window), seq.val_target().poi}};

  const std::uint64_t seed = derive_seed(cfg.seed, "device", device_job_id(seq.user, region_id));
  std::vector<PoiExample> all = train;
  all.push_back(val.front());
  PatchModel patch = init_patch_identity(region.dim(), patch_shift(region, all, cfg.max_step));
  if (cfg.precision == Precision::kF32) round_to_float(patch);

  const NoiseSchedule sched = build_schedule(cfg.max_step, cfg.w);
  std::vector<ParamGroup> groups;
  for (std::size_t l = 0; l < 4; ++l) {
    groups.push_back({"weight" + std::to_string(l), &patch.weight[l]});
    groups.push_back({"bias" + std::to_string(l), &patch.bias[l]});
  }

  ExampleLoss loss = [&](Tape& tape, std::span<const Var> p, std::size_t i, bool is_val, Rng& rng) {
    const PoiExample& ex = is_val ? val[i] : train[i];
    RegionVars rv = bind_region(tape, region, false, false);
    PatchVars pv;
    for (std::size_t l = 0; l < 4; ++l) {
      pv.weight[l] = p[2 * l];
      pv.bias[l] = p[2 * l + 1];
    }
    const std::size_t target = region.row_of(ex.target);
    const int t = sample_step(rng, sched.max_step);
    const Matrix x0 = Matrix::row_vector(region.poi_emb.row(target));
    const Matrix x_t = forward_diffuse(x0, t, sched, rng).x_t;
    std::vector<std::size_t> rows{target};
    for (auto n : sample_negatives(rng, region.num_pois(), target, cfg.negatives)) rows.push_back(n);
    Var x0_hat = region_forward(tape, region, rv, x_t, ex.history, t, train_dropout(cfg, is_val, rng));
    x0_hat = patch_forward(tape, pv, x0_hat);
    return ce_loss(tape, x0_hat, tape.gather_rows(rv.poi_emb, rows), cfg.loss);
  };

  StageResult r = fit(groups, train.size(), val.size(), loss, cfg, seed);
  if (result) *result = std::move(r);
  return patch;
}

}  // namespace dcpr
