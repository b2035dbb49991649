#include "vrnmt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace vrnmt {

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw UsageError("learning_rate must be >= 0");
  if (rho <= 0.0 || rho >= 1.0) throw UsageError("rho must be in (0,1)");
  if (eps <= 0.0) throw UsageError("eps must be > 0");
  if (clip_norm <= 0.0) throw UsageError("clip_norm must be > 0");
  if (dropout < 0.0 || dropout >= 1.0)
    throw UsageError("dropout must be in [0,1)");
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (L == 0) throw UsageError("L must be positive");
  if (max_len == 0) throw UsageError("max_len must be positive");
  if (kl_weight < 0.0) throw UsageError("kl_weight must be >= 0");
}

namespace {
std::vector<int> strip_row(const std::vector<int>& row,
                           const std::vector<double>& mask) {
  std::vector<int> out;
  for (std::size_t i = 0; i < row.size(); ++i)
    if (mask[i] == 1.0) out.push_back(row[i]);
  return out;
}
}  // namespace

std::vector<int> Batch::src_sentence(std::size_t i) const {
  return strip_row(src[i], src_mask[i]);
}

std::vector<int> Batch::tgt_sentence(std::size_t i) const {
  return strip_row(tgt[i], tgt_mask[i]);
}

std::vector<Batch> make_batches(const IdPairs& pairs, const TrainConfig& cfg,
                                std::uint64_t seed) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (pairs[i].first.size() <= cfg.max_len &&
        pairs[i].second.size() <= cfg.max_len)
      keep.push_back(i);
  if (keep.empty())
    throw DataError("make_batches: no sentence pairs within max_len " +
                    std::to_string(cfg.max_len));

  Rng rng(seed);
  rng.shuffle(keep);

  // Sort within coarse chunks so batches hold similar target lengths while
  // chunk membership still varies with the shuffle.
  const std::size_t chunk = cfg.batch_size * 20;
  for (std::size_t beg = 0; beg < keep.size(); beg += chunk) {
    const std::size_t end = std::min(beg + chunk, keep.size());
    std::stable_sort(keep.begin() + beg, keep.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return pairs[a].second.size() < pairs[b].second.size();
                     });
  }

  std::vector<Batch> batches;
  for (std::size_t beg = 0; beg < keep.size(); beg += cfg.batch_size) {
    const std::size_t end = std::min(beg + cfg.batch_size, keep.size());
    Batch b;
    std::size_t max_src = 0, max_tgt = 0;
    for (std::size_t k = beg; k < end; ++k) {
      max_src = std::max(max_src, pairs[keep[k]].first.size());
      max_tgt = std::max(max_tgt, pairs[keep[k]].second.size());
    }
    for (std::size_t k = beg; k < end; ++k) {
      const auto& [s, t] = pairs[keep[k]];
      std::vector<int> srow(max_src, kPadId), trow(max_tgt, kPadId);
      std::vector<double> smask(max_src, 0.0), tmask(max_tgt, 0.0);
      std::copy(s.begin(), s.end(), srow.begin());
      std::fill(smask.begin(), smask.begin() + s.size(), 1.0);
      std::copy(t.begin(), t.end(), trow.begin());
      std::fill(tmask.begin(), tmask.begin() + t.size(), 1.0);
      b.src.push_back(std::move(srow));
      b.src_mask.push_back(std::move(smask));
      b.tgt.push_back(std::move(trow));
      b.tgt_mask.push_back(std::move(tmask));
    }
    batches.push_back(std::move(b));
  }
  rng.shuffle(batches);
  return batches;
}

void OptState::match(const NamedParams& params) {
  if (accum.size() == params.size()) return;
  accum.clear();
  delta.clear();
  for (const auto& [name, t] : params) {
    accum.emplace_back(t->data.size(), 0.0);
    delta.emplace_back(t->data.size(), 0.0);
  }
}

double clip_gradients(const NamedParams& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    for (double g : t->grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, t] : params)
      for (double& g : t->grad) g *= scale;
  }
  return norm;
}

void rmsprop_update(const NamedParams& params, OptState& state,
                    const TrainConfig& cfg) {
  state.match(params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = params[p];
    if (t->grad.size() != t->data.size())
      throw Error("rmsprop_update: missing gradient for " + name);
    auto& n = state.accum[p];
    auto& d = state.delta[p];
    for (std::size_t i = 0; i < t->data.size(); ++i) {
      const double g = t->grad[i];
      if (!std::isfinite(g))
        throw NumericError("rmsprop_update: non-finite gradient in " + name);
      n[i] = cfg.rho * n[i] + (1.0 - cfg.rho) * g * g;
      d[i] = cfg.momentum * d[i] -
             cfg.learning_rate * g / std::sqrt(n[i] + cfg.eps);
      t->data[i] += d[i];
    }
  }
}

std::pair<double, double> evaluate_corpus_nll(ModelParams& model,
                                              const IdPairs& pairs,
                                              std::size_t max_len) {
  ObjectiveConfig oc;
  oc.max_len = max_len;
  oc.posterior_path = false;
  double nll = 0.0, kl = 0.0;
  std::size_t tokens = 0;
  for (const auto& [x, y] : pairs) {
    if (max_len > 0 && (x.size() > max_len || y.size() > max_len)) continue;
    Graph g;
    ObjectiveResult r = sentence_objective(g, x, y, model, oc);
    nll += r.nll_value;
    kl += r.kl_value;
    tokens += r.steps;
  }
  if (tokens == 0) return {0.0, 0.0};
  return {nll / static_cast<double>(tokens),
          kl / static_cast<double>(tokens)};
}

TrainResult train(ModelParams& model, const IdPairs& train_pairs,
                  const IdPairs& valid_pairs, const TrainConfig& cfg,
                  std::ostream& log,
                  const std::function<void(ModelParams&)>& save_best) {
  cfg.validate();
  model.set_requires_grad(true);
  NamedParams params = model.named();
  OptState opt;
  RngPool pool(cfg.seed);
  Rng dropout_rng = pool.stream(RngUse::dropout);
  Rng eps_rng = pool.stream(RngUse::epsilon);

  TrainResult result;
  result.best_valid_nll = std::numeric_limits<double>::infinity();
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<Batch> batches =
        make_batches(train_pairs, cfg, mix_seed(cfg.seed, RngUse::shuffle,
                                                epoch));
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;

    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& batch = batches[bi];
      double beta = cfg.kl_weight;
      if (cfg.kl_anneal > 0)
        beta *= std::min(1.0, static_cast<double>(step) /
                                  static_cast<double>(cfg.kl_anneal));

      std::size_t batch_tokens = 0;
      for (std::size_t si = 0; si < batch.size(); ++si)
        batch_tokens += batch.tgt_sentence(si).size() + 1;

      model.zero_grads();
      ObjectiveConfig oc;
      oc.L = cfg.L;
      oc.max_len = cfg.max_len;
      oc.dropout = cfg.dropout;
      oc.dropout_rng = cfg.dropout > 0.0 ? &dropout_rng : nullptr;
      oc.eps_rng = &eps_rng;

      double batch_loss = 0.0;
      for (std::size_t si = 0; si < batch.size(); ++si) {
        const std::vector<int> x = batch.src_sentence(si);
        const std::vector<int> y = batch.tgt_sentence(si);
        Graph g;
        ObjectiveResult r;
        try {
          r = sentence_objective(g, x, y, model, oc);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(bi) + ": " + e.what());
        }
        const double w = 1.0 / static_cast<double>(batch_tokens);
        Var loss = r.kl.valid() && beta != 0.0
                       ? g.scale(g.add(r.nll, g.scale(r.kl, beta)), w)
                       : g.scale(r.nll, w);
        g.backward(loss);
        batch_loss += r.nll_value + beta * r.kl_value;
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(bi) + ": non-finite batch loss " +
                           std::to_string(batch_loss));
      clip_gradients(params, cfg.clip_norm);
      rmsprop_update(params, opt, cfg);
      ++step;
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }

    auto [valid_nll, valid_kl] =
        evaluate_corpus_nll(model, valid_pairs, cfg.max_len);
    const auto t1 = std::chrono::steady_clock::now();

    EpochStats st;
    st.epoch = epoch;
    st.train_neg_elbo = epoch_loss / static_cast<double>(epoch_tokens);
    st.valid_nll = valid_nll;
    st.valid_kl = valid_kl;
    st.seconds = std::chrono::duration<double>(t1 - t0).count();
    result.epochs.push_back(st);

    char line[256];
    std::snprintf(line, sizeof line, "%zu\t%.17g\t%.17g\t%.17g\t%.3f\n",
                  st.epoch, st.train_neg_elbo, st.valid_nll, st.valid_kl,
                  st.seconds);
    log << line << std::flush;

    const bool improved = valid_pairs.empty()
                              ? true
                              : st.valid_nll < result.best_valid_nll;
    if (improved) {
      result.best_valid_nll = st.valid_nll;
      result.best_epoch = epoch;
      if (save_best) save_best(model);
    }
  }
  return result;
}

}  // namespace vrnmt
