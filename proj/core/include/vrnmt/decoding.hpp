#pragma once

#include <span>
#include <utility>
#include <vector>

#include "vrnmt/model.hpp"
#include "vrnmt/rng.hpp"

namespace vrnmt {

struct Hypothesis {
  std::vector<int> ids;  // content tokens, terminal excluded
  double score = 0.0;    // accumulated log-probability, terminal included
  std::vector<std::vector<double>> alphas;  // one per emitted token
  bool finished = false;
};

// Width-limited expansion over the inference path: a pass keeps the best
// live prefixes, retires each completed hypothesis to a pool, stops once
// the pool is full or the length cap is hit, and finalizes survivors with
// their terminal log-probability.  The search runs that pass at every
// width up to beam_size and ranks the deduplicated union, so the best
// returned score never decreases as beam_size grows and width 1 stays
// identical to repeated argmax.  Results sort by score, ties by the
// smaller first-divergent token id.  max_out_len 0 means 2*T_x + 10.
std::vector<Hypothesis> beam_search(ModelParams& model,
                                    std::span<const int> src,
                                    std::size_t beam_size,
                                    std::size_t max_out_len = 0,
                                    Rng* prior_noise = nullptr);

std::vector<int> greedy_decode(ModelParams& model, std::span<const int> src,
                               std::size_t max_out_len = 0);

// Teacher-forces the reference and records the attention argmax per target
// word as (source_index, target_index), 0-based; the terminal step is
// skipped.  Argmax ties resolve to the smaller source index.
std::vector<std::pair<int, int>> force_decode_alignments(
    ModelParams& model, std::span<const int> src, std::span<const int> ref);

}  // namespace vrnmt
