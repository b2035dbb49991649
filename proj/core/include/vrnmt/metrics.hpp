#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "vrnmt/error.hpp"

namespace vrnmt {

using TokenSeq = std::vector<std::string>;
using LinkSet = std::set<std::pair<int, int>>;  // (source, target), 0-based

inline constexpr int kBleuMaxOrder = 4;

struct BleuOptions {
  int max_n = kBleuMaxOrder;
  bool lowercase = true;  // case-insensitive scoring
  bool smooth = false;    // add-one smoothing on orders above 1
};

// Per-sentence sufficient statistics; corpus BLEU is a pure function of
// their sum, which is what the bootstrap resampling exploits.
struct BleuStats {
  std::array<long long, kBleuMaxOrder> match{};
  std::array<long long, kBleuMaxOrder> total{};
  long long cand_len = 0;
  long long ref_len = 0;  // closest reference length
  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_sentence_stats(const TokenSeq& candidate,
                              const std::vector<TokenSeq>& references,
                              const BleuOptions& opt = {});

// Returns 0..100.  Orders with no candidate n-grams are skipped; an order
// with zero matches over a nonzero total yields 0 unless smoothing is on.
double bleu_from_stats(const BleuStats& stats, const BleuOptions& opt = {});

double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<std::vector<TokenSeq>>& references,
            const BleuOptions& opt = {});

// N-gram repetition rate: mean over sentences (with at least one n-gram) of
// (total n-grams - distinct n-grams) / total n-grams.
double n_grr(const std::vector<TokenSeq>& sentences, int n);

// 1 - (|A∩S| + |A∩P|) / (|A| + |S|); requires sure ⊆ possible.
double aer(const LinkSet& predicted, const LinkSet& sure,
           const LinkSet& possible);

struct BucketScore {
  std::size_t lo = 0, hi = 0;  // source-length interval [lo, hi]
  double score = 0.0;
  std::size_t count = 0;
};

std::vector<BucketScore> bucketed_bleu(
    const std::vector<TokenSeq>& candidates,
    const std::vector<std::vector<TokenSeq>>& references,
    const std::vector<std::size_t>& source_lengths, std::size_t bucket_width,
    const BleuOptions& opt = {});

// Paired bootstrap over same-index resamples: fraction where system B's
// corpus BLEU fails to beat system A's (ties count against B).
double paired_bootstrap(const std::vector<TokenSeq>& system_a,
                        const std::vector<TokenSeq>& system_b,
                        const std::vector<std::vector<TokenSeq>>& references,
                        std::size_t resamples, std::uint64_t seed,
                        const BleuOptions& opt = {});

}  // namespace vrnmt
