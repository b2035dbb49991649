#pragma once

#include <span>
#include <string>
#include <vector>

#include "vrnmt/layers.hpp"
#include "vrnmt/variational.hpp"

namespace vrnmt {

// Reserved vocabulary ids, fixed across every vocabulary file.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kBosId = 2;
inline constexpr int kEosId = 3;
inline constexpr std::size_t kReservedTokens = 4;

enum class Variant { baseline, vrnmt, vrnmt_td };

std::string variant_name(Variant v);
// Accepts both "vrnmt-td" (command line) and "vrnmt_td" (checkpoint tag).
Variant parse_variant(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::baseline;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t d_e = 32;
  std::size_t d_h = 64;
  std::size_t d_z = 16;
  std::size_t d_a = 64;
  std::size_t d_r = 64;

  bool has_latent() const { return variant != Variant::baseline; }
  bool has_prior_net() const { return variant == Variant::vrnmt; }
  std::size_t annotation_size() const { return 2 * d_h; }
  // Conditioning width of the posterior network.
  std::size_t posterior_input() const {
    return variant == Variant::vrnmt_td ? d_e
                                        : d_e + d_h + annotation_size() + d_e;
  }
  std::size_t prior_input() const { return d_e + d_h + annotation_size(); }
};

// Readout: tanh hidden layer over [y_prev; s; c] (+ a separate latent block
// Vd*z) followed by a linear vocabulary projection.  Keeping the latent block
// out of Wd leaves Wd shape-identical across variants for warm starts.
struct ReadoutParams {
  Tensor Wd, bd;
  Tensor Vd;  // only when has_latent
  Tensor Wout, bout;
  bool has_latent = false;
  static ReadoutParams create(std::size_t d_r, std::size_t input,
                              std::size_t vocab, std::size_t latent);
  void init(Rng& rng);
  void collect(const std::string& prefix, NamedParams& out);
};

struct ModelParams {
  ModelConfig cfg;
  Tensor src_emb, tgt_emb;
  GruParams enc_fwd, enc_bwd;
  Tensor W_init, b_init;
  AttentionParams att;
  DecoderGruParams dec;
  InferenceParams post;   // absent in baseline
  InferenceParams prior;  // only in vrnmt
  ReadoutParams out;

  static ModelParams create(const ModelConfig& cfg);
  void init(Rng& rng, bool orthogonal = false);
  // Exact named-tensor inventory for this variant, declaration order.
  NamedParams named();
  void set_requires_grad(bool on);
  void zero_grads();
};

struct StepOutput {
  Var log_probs;  // normalized log distribution over the target vocabulary
  Var s_next;
  AttentionResult att;
  GaussianVars post;   // train path, non-baseline
  GaussianVars prior;  // non-baseline (fixed standard normal in vrnmt_td)
  Var z;               // invalid in baseline
  std::vector<double> epsilon;  // noise used for z; empty when deterministic
  Var kl;              // train path, non-baseline
};

Var output_distribution(Graph& g, Var y_emb, Var s, Var c, Var z,
                        ModelParams& P, const DropoutCtx& drop);

StepOutput decode_step_train(Graph& g, const Annotations& ann, int y_prev,
                             int y_gold, Var s, ModelParams& P,
                             std::span<const double> eps,
                             const DropoutCtx& drop);

// Deterministic unless prior_eps is nonempty, which samples the prior
// (standard normal in vrnmt_td).  Baseline ignores the noise.
StepOutput decode_step_infer(Graph& g, const Annotations& ann, int y_prev,
                             Var s, ModelParams& P,
                             std::span<const double> prior_eps = {});

struct ObjectiveConfig {
  std::size_t L = 1;
  std::size_t max_len = 0;  // 0 disables the length check
  double dropout = 0.0;
  Rng* dropout_rng = nullptr;
  // Noise per (step, sample): drawn from eps_rng when set, else looked up in
  // eps_table at index step*L + sample, else zero (deterministic).
  Rng* eps_rng = nullptr;
  const std::vector<std::vector<double>>* eps_table = nullptr;
  // False scores the inference path (z = prior mean; zero in vrnmt_td)
  // while still reporting posterior KL; used for validation.
  bool posterior_path = true;
};

struct ObjectiveResult {
  Var nll;  // scalar
  Var kl;   // scalar; invalid for baseline
  double nll_value = 0.0;
  double kl_value = 0.0;
  double elbo_value = 0.0;
  std::size_t steps = 0;  // prediction steps, terminal included
};

// Teacher-forced objective over x -> y (content ids; framing adds BOS/EOS).
ObjectiveResult sentence_objective(Graph& g, std::span<const int> x,
                                   std::span<const int> y, ModelParams& P,
                                   const ObjectiveConfig& oc);

}  // namespace vrnmt
