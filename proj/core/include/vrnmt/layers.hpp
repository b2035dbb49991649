#pragma once

#include <span>
#include <string>
#include <vector>

#include "vrnmt/rng.hpp"
#include "vrnmt/tensor.hpp"

namespace vrnmt {

// Weight initialization.  Biases start at zero; weights uniform in
// [-range, range]; square recurrent matrices may instead be orthogonalized.
void init_uniform(Tensor& t, Rng& rng, double range = 0.08);
void init_orthogonal(Tensor& t, Rng& rng);

// Inverted dropout: scales kept entries by 1/keep so eval needs no rescale.
// Inactive (identity) when rate is 0 or no rng is attached.
struct DropoutCtx {
  double rate = 0.0;
  Rng* rng = nullptr;
  bool active() const { return rate > 0.0 && rng != nullptr; }
};
Var apply_dropout(Graph& g, Var v, const DropoutCtx& drop);

Var embed(Graph& g, Tensor& table, int id);

// Standard GRU cell: r/u gates from (x, s), candidate from (x, r*s),
// next state a per-coordinate convex combination of s and the candidate.
struct GruParams {
  Tensor Wr, Ur, br;
  Tensor Wu, Uu, bu;
  Tensor Wh, Uh, bh;
  static GruParams create(std::size_t hidden, std::size_t input);
  void init(Rng& rng, bool orthogonal);
  void collect(const std::string& prefix, NamedParams& out);
};
Var gru_step(Graph& g, Var s_prev, Var x, GruParams& P);

// Decoder GRU: gates and candidate see the previous target embedding, the
// previous state, the attention context, and (when present) the latent z.
struct DecoderGruParams {
  Tensor Wr, Ur, Cr, br;
  Tensor Wu, Uu, Cu, bu;
  Tensor Wh, Uh, Ch, bh;
  Tensor Vr, Vu, Vh;  // latent blocks, only when has_latent
  bool has_latent = false;
  static DecoderGruParams create(std::size_t hidden, std::size_t emb,
                                 std::size_t ctx, std::size_t latent);
  void init(Rng& rng, bool orthogonal);
  void collect(const std::string& prefix, NamedParams& out);
};
// z may be an invalid Var, in which case the latent blocks are not applied.
// The z contribution is added after the bias so a zero z reproduces the
// latent-free computation exactly.
Var variational_gru_step(Graph& g, Var y_emb, Var s, Var c, Var z,
                         DecoderGruParams& P);

struct AttentionParams {
  Tensor Wa, Ua, va;
  static AttentionParams create(std::size_t d_a, std::size_t d_h,
                                std::size_t ann);
  void init(Rng& rng);
  void collect(const std::string& prefix, NamedParams& out);
};

struct Annotations {
  Var H;       // one row per source position, forward and backward halves
  Var u_proj;  // key projection of H, filled by attention_precompute
  std::vector<double> mask;  // 1 at real tokens, 0 at padding
  std::size_t length = 0;
};

struct AttentionResult {
  Var c;      // context vector
  Var alpha;  // attention weights over source positions
};

Annotations encode(Graph& g, std::span<const int> src_ids, Tensor& src_emb,
                   GruParams& fwd, GruParams& bwd, const DropoutCtx& drop);

// Projects the annotation matrix through Ua once per sentence so each
// decode step only pays for the query side.
void attention_precompute(Graph& g, AttentionParams& P, Annotations& ann);

Var attend_scores(Graph& g, Var s_prev, const Annotations& ann,
                  AttentionParams& P);
AttentionResult attend(Graph& g, Var s_prev, const Annotations& ann,
                       AttentionParams& P);

Var init_decoder_state(Graph& g, const Annotations& ann, Tensor& W_init,
                       Tensor& b_init);

}  // namespace vrnmt
