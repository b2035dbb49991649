#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "vrnmt/model.hpp"
#include "vrnmt/rng.hpp"

namespace vrnmt {

using IdPairs = std::vector<std::pair<std::vector<int>, std::vector<int>>>;

struct TrainConfig {
  ModelConfig model;
  double learning_rate = 5e-4;
  double rho = 0.95;
  double eps = 1e-4;
  double momentum = 0.0;
  double clip_norm = 1.0;
  double dropout = 0.3;
  std::size_t batch_size = 80;
  std::size_t L = 1;
  std::size_t max_len = 50;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  // KL term weight beta; kl_anneal > 0 ramps beta linearly from 0 to
  // kl_weight over that many optimizer steps.
  double kl_weight = 1.0;
  std::size_t kl_anneal = 0;
  bool orthogonal_init = false;

  void validate() const;
};

struct Batch {
  std::vector<std::vector<int>> src, tgt;           // rows padded with PAD
  std::vector<std::vector<double>> src_mask, tgt_mask;  // 1 real, 0 pad
  std::size_t size() const { return src.size(); }
  // Real (unpadded) token sequences for one row.
  std::vector<int> src_sentence(std::size_t i) const;
  std::vector<int> tgt_sentence(std::size_t i) const;
};

// Drops over-length pairs, shuffles, groups by similar target length,
// pads, and shuffles the batch order; pure in (corpus, config, seed).
std::vector<Batch> make_batches(const IdPairs& pairs, const TrainConfig& cfg,
                                std::uint64_t seed);

struct OptState {
  std::vector<std::vector<double>> accum;  // squared-gradient average
  std::vector<std::vector<double>> delta;  // momentum buffer
  void match(const NamedParams& params);
};

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm.  Returns the pre-clip norm.
double clip_gradients(const NamedParams& params, double max_norm);

void rmsprop_update(const NamedParams& params, OptState& state,
                    const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  double train_neg_elbo = 0.0;  // per-token, at the beta in effect
  double valid_nll = 0.0;       // per-token, inference path
  double valid_kl = 0.0;        // per-token posterior KL telemetry
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  double best_valid_nll = 0.0;
  std::size_t best_epoch = 0;
};

// Runs the full loop; `log` receives one line per epoch
// (epoch<TAB>train_neg_elbo<TAB>valid_nll<TAB>valid_kl<TAB>seconds).
// `save_best` is invoked whenever validation nll improves.
TrainResult train(ModelParams& model, const IdPairs& train_pairs,
                  const IdPairs& valid_pairs, const TrainConfig& cfg,
                  std::ostream& log,
                  const std::function<void(ModelParams&)>& save_best);

// Teacher-forced per-token scores over a corpus on the inference path
// (no dropout, deterministic z); first = nll, second = posterior kl.
std::pair<double, double> evaluate_corpus_nll(ModelParams& model,
                                              const IdPairs& pairs,
                                              std::size_t max_len);

}  // namespace vrnmt
