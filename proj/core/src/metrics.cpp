#include "vrnmt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "vrnmt/rng.hpp"

namespace vrnmt {

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < kBleuMaxOrder; ++n) {
    match[n] += o.match[n];
    total[n] += o.total[n];
  }
  cand_len += o.cand_len;
  ref_len += o.ref_len;
  return *this;
}

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

TokenSeq normalize(const TokenSeq& s, bool lowercase) {
  if (!lowercase) return s;
  TokenSeq out;
  out.reserve(s.size());
  for (const auto& t : s) out.push_back(lower(t));
  return out;
}

using NgramCounts = std::map<std::vector<std::string>, long long>;

NgramCounts count_ngrams(const TokenSeq& s, int n) {
  NgramCounts counts;
  if (static_cast<int>(s.size()) >= n)
    for (std::size_t i = 0; i + n <= s.size(); ++i)
      ++counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)];
  return counts;
}

}  // namespace

BleuStats bleu_sentence_stats(const TokenSeq& candidate,
                              const std::vector<TokenSeq>& references,
                              const BleuOptions& opt) {
  if (references.empty())
    throw DataError("bleu: candidate without references");
  if (opt.max_n < 1 || opt.max_n > kBleuMaxOrder)
    throw UsageError("bleu: order out of range");
  const TokenSeq cand = normalize(candidate, opt.lowercase);
  std::vector<TokenSeq> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(normalize(r, opt.lowercase));

  BleuStats st;
  st.cand_len = static_cast<long long>(cand.size());
  // Closest reference length; ties resolve to the shorter.
  long long best = static_cast<long long>(refs[0].size());
  for (const auto& r : refs) {
    const long long len = static_cast<long long>(r.size());
    const long long d_new = std::llabs(len - st.cand_len);
    const long long d_old = std::llabs(best - st.cand_len);
    if (d_new < d_old || (d_new == d_old && len < best)) best = len;
  }
  st.ref_len = best;

  for (int n = 1; n <= opt.max_n; ++n) {
    NgramCounts cc = count_ngrams(cand, n);
    NgramCounts clip;
    for (const auto& r : refs) {
      NgramCounts rc = count_ngrams(r, n);
      for (const auto& [gram, cnt] : rc) {
        auto it = clip.find(gram);
        if (it == clip.end())
          clip.emplace(gram, cnt);
        else
          it->second = std::max(it->second, cnt);
      }
    }
    for (const auto& [gram, cnt] : cc) {
      st.total[n - 1] += cnt;
      auto it = clip.find(gram);
      if (it != clip.end()) st.match[n - 1] += std::min(cnt, it->second);
    }
  }
  return st;
}

double bleu_from_stats(const BleuStats& stats, const BleuOptions& opt) {
  double log_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= opt.max_n; ++n) {
    long long m = stats.match[n - 1];
    long long t = stats.total[n - 1];
    if (t == 0) continue;  // no n-grams of this order exist at all
    if (opt.smooth && n > 1) {
      ++m;
      ++t;
    }
    if (m == 0) return 0.0;
    log_sum += std::log(static_cast<double>(m) / static_cast<double>(t));
    ++orders;
  }
  if (orders == 0 || stats.cand_len == 0) return 0.0;
  const double precision = std::exp(log_sum / static_cast<double>(orders));
  const double ratio = static_cast<double>(stats.ref_len) /
                       static_cast<double>(stats.cand_len);
  const double bp = std::exp(std::min(0.0, 1.0 - ratio));
  return 100.0 * precision * bp;
}

double bleu(const std::vector<TokenSeq>& candidates,
            const std::vector<std::vector<TokenSeq>>& references,
            const BleuOptions& opt) {
  if (candidates.empty()) throw DataError("bleu: empty corpus");
  if (candidates.size() != references.size())
    throw DataError("bleu: candidate/reference count mismatch");
  BleuStats agg;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    agg += bleu_sentence_stats(candidates[i], references[i], opt);
  return bleu_from_stats(agg, opt);
}

double n_grr(const std::vector<TokenSeq>& sentences, int n) {
  if (n < 1) throw UsageError("n_grr: order must be >= 1");
  double sum = 0.0;
  std::size_t included = 0;
  for (const auto& s : sentences) {
    const long long total =
        static_cast<int>(s.size()) >= n
            ? static_cast<long long>(s.size()) - n + 1
            : 0;
    if (total == 0) continue;
    NgramCounts counts = count_ngrams(s, n);
    const long long unique = static_cast<long long>(counts.size());
    sum += static_cast<double>(total - unique) / static_cast<double>(total);
    ++included;
  }
  if (included == 0)
    throw DataError("n_grr: every sentence is shorter than n");
  return sum / static_cast<double>(included);
}

double aer(const LinkSet& predicted, const LinkSet& sure,
           const LinkSet& possible) {
  for (const auto& link : sure)
    if (possible.find(link) == possible.end())
      throw DataError("aer: sure link missing from the possible set");
  std::size_t a_s = 0, a_p = 0;
  for (const auto& link : predicted) {
    if (sure.count(link)) ++a_s;
    if (possible.count(link)) ++a_p;
  }
  const std::size_t denom = predicted.size() + sure.size();
  if (denom == 0) return 0.0;
  return 1.0 - static_cast<double>(a_s + a_p) / static_cast<double>(denom);
}

std::vector<BucketScore> bucketed_bleu(
    const std::vector<TokenSeq>& candidates,
    const std::vector<std::vector<TokenSeq>>& references,
    const std::vector<std::size_t>& source_lengths, std::size_t bucket_width,
    const BleuOptions& opt) {
  if (bucket_width == 0) throw UsageError("bucketed_bleu: width must be >= 1");
  if (candidates.size() != references.size() ||
      candidates.size() != source_lengths.size())
    throw DataError("bucketed_bleu: input count mismatch");

  std::map<std::size_t, BleuStats> stats;
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (source_lengths[i] == 0)
      throw DataError("bucketed_bleu: zero source length");
    const std::size_t bucket = (source_lengths[i] - 1) / bucket_width;
    stats[bucket] += bleu_sentence_stats(candidates[i], references[i], opt);
    ++counts[bucket];
  }
  std::vector<BucketScore> out;
  for (const auto& [bucket, st] : stats) {
    BucketScore b;
    b.lo = bucket * bucket_width + 1;
    b.hi = (bucket + 1) * bucket_width;
    b.score = bleu_from_stats(st, opt);
    b.count = counts[bucket];
    out.push_back(b);
  }
  return out;
}

double paired_bootstrap(const std::vector<TokenSeq>& system_a,
                        const std::vector<TokenSeq>& system_b,
                        const std::vector<std::vector<TokenSeq>>& references,
                        std::size_t resamples, std::uint64_t seed,
                        const BleuOptions& opt) {
  const std::size_t n = references.size();
  if (system_a.size() != n || system_b.size() != n)
    throw DataError("paired_bootstrap: sentence count mismatch");
  if (n == 0) throw DataError("paired_bootstrap: empty corpus");
  if (resamples < 100)
    throw UsageError("paired_bootstrap: need at least 100 resamples");

  std::vector<BleuStats> sa(n), sb(n);
  for (std::size_t i = 0; i < n; ++i) {
    sa[i] = bleu_sentence_stats(system_a[i], references[i], opt);
    sb[i] = bleu_sentence_stats(system_b[i], references[i], opt);
  }

  Rng rng(seed);
  std::size_t not_better = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    BleuStats agg_a, agg_b;
    for (std::size_t i = 0; i < n; ++i) {
      const int k = rng.uniform_int(0, static_cast<int>(n) - 1);
      agg_a += sa[k];
      agg_b += sb[k];
    }
    if (bleu_from_stats(agg_b, opt) <= bleu_from_stats(agg_a, opt))
      ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

}  // namespace vrnmt
