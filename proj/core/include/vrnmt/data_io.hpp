#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vrnmt/metrics.hpp"
#include "vrnmt/model.hpp"
#include "vrnmt/training.hpp"

namespace vrnmt {

inline constexpr std::array<const char*, kReservedTokens> kReservedNames = {
    "<pad>", "<unk>", "<s>", "</s>"};

struct Vocabulary {
  std::vector<std::string> tokens;  // reserved entries first, then content

  static Vocabulary with_reserved();
  // Frequency-ranked tokens, ties by first occurrence, capped at max_size.
  static Vocabulary build(const std::vector<TokenSeq>& sentences,
                          std::size_t max_size);
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return tokens.size(); }
  int id(const std::string& token) const;  // UNK when absent
  const std::string& token(int id) const;
  std::vector<int> encode(const TokenSeq& sentence) const;
  TokenSeq decode(const std::vector<int>& ids) const;

 private:
  std::unordered_map<std::string, int> index_;
  void rebuild_index();
};

struct ParallelCorpus {
  std::vector<TokenSeq> src, tgt;
  std::size_t size() const { return src.size(); }
};

// Loads two aligned token files; pairs with either side over max_len are
// dropped when max_len > 0.
ParallelCorpus load_corpus(const std::string& src_path,
                           const std::string& tgt_path,
                           std::size_t max_len = 0);
void save_corpus(const ParallelCorpus& corpus, const std::string& src_path,
                 const std::string& tgt_path);

std::vector<TokenSeq> load_tokens(const std::string& path);
void save_tokens(const std::vector<TokenSeq>& sentences,
                 const std::string& path);

IdPairs encode_corpus(const ParallelCorpus& corpus, const Vocabulary& src,
                      const Vocabulary& tgt);

enum class ToyTask { copy, reverse, lexmap, lexmap_swap };
ToyTask parse_toy_task(const std::string& s);

struct ToyCorpus {
  ParallelCorpus corpus;
  // Gold word links per pair, (source_index, target_index), 0-based.
  std::vector<std::vector<std::pair<int, int>>> alignments;
};

// Pure in (task, arguments, seed).  vocab_size counts the reserved slots, so
// content types number vocab_size - 4.  lexmap_swap decides each adjacent
// swap from a hash of (seed, left token): the marginal swap rate stays
// swap_prob while the swaps remain a deterministic, learnable function of
// the source.
ToyCorpus generate_toy_corpus(ToyTask task, std::size_t pairs,
                              std::size_t vocab_size, std::size_t len_lo,
                              std::size_t len_hi, double swap_prob,
                              std::uint64_t seed);

// Alignments: one line per pair, space-separated i-j links; i?j marks a
// possible-only link when reading gold files.
void save_alignments(const std::vector<std::vector<std::pair<int, int>>>& all,
                     const std::string& path);
struct GoldAlignments {
  std::vector<LinkSet> sure, possible;  // possible includes sure
};
GoldAlignments load_gold_alignments(const std::string& path);
std::vector<LinkSet> load_predicted_alignments(const std::string& path);

// Checkpoint: magic "VRNMT1", a length-prefixed key=value configuration
// block, then per-tensor records (name, rank, dims, raw doubles), all
// little-endian.
void save_checkpoint(ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

struct WarmStartReport {
  std::vector<std::string> loaded;
  std::vector<std::string> fresh;  // target tensors the file did not cover
};
// Copies name- and shape-matched tensors into an already-created model;
// matched names with different shapes are errors.
WarmStartReport warm_start(ModelParams& target, const std::string& path);

}  // namespace vrnmt
