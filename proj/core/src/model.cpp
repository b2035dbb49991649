#include "vrnmt/model.hpp"

#include <algorithm>

namespace vrnmt {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::vrnmt: return "vrnmt";
    case Variant::vrnmt_td: return "vrnmt_td";
  }
  throw Error("variant_name: unknown variant");
}

Variant parse_variant(const std::string& s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "vrnmt") return Variant::vrnmt;
  if (s == "vrnmt-td" || s == "vrnmt_td") return Variant::vrnmt_td;
  throw UsageError("unknown variant '" + s +
                   "' (expected baseline, vrnmt, or vrnmt-td)");
}

ReadoutParams ReadoutParams::create(std::size_t d_r, std::size_t input,
                                    std::size_t vocab, std::size_t latent) {
  ReadoutParams p;
  p.Wd = Tensor(mat_shape(d_r, input));
  p.bd = Tensor(vec_shape(d_r));
  p.Wout = Tensor(mat_shape(vocab, d_r));
  p.bout = Tensor(vec_shape(vocab));
  if (latent > 0) {
    p.has_latent = true;
    p.Vd = Tensor(mat_shape(d_r, latent));
  }
  return p;
}

void ReadoutParams::init(Rng& rng) {
  init_uniform(Wd, rng);
  init_uniform(Wout, rng);
  if (has_latent) init_uniform(Vd, rng);
}

void ReadoutParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".Wd", &Wd);
  out.emplace_back(prefix + ".bd", &bd);
  if (has_latent) out.emplace_back(prefix + ".Vd", &Vd);
  out.emplace_back(prefix + ".Wout", &Wout);
  out.emplace_back(prefix + ".bout", &bout);
}

ModelParams ModelParams::create(const ModelConfig& cfg) {
  if (cfg.src_vocab < kReservedTokens || cfg.tgt_vocab < kReservedTokens)
    throw DataError("model: vocabulary smaller than the reserved tokens");
  ModelParams m;
  m.cfg = cfg;
  m.src_emb = Tensor(mat_shape(cfg.src_vocab, cfg.d_e));
  m.tgt_emb = Tensor(mat_shape(cfg.tgt_vocab, cfg.d_e));
  m.enc_fwd = GruParams::create(cfg.d_h, cfg.d_e);
  m.enc_bwd = GruParams::create(cfg.d_h, cfg.d_e);
  m.W_init = Tensor(mat_shape(cfg.d_h, cfg.d_h));
  m.b_init = Tensor(vec_shape(cfg.d_h));
  m.att = AttentionParams::create(cfg.d_a, cfg.d_h, cfg.annotation_size());
  m.dec = DecoderGruParams::create(cfg.d_h, cfg.d_e, cfg.annotation_size(),
                                   cfg.has_latent() ? cfg.d_z : 0);
  if (cfg.has_latent())
    m.post = InferenceParams::create(cfg.d_z, cfg.d_z, cfg.posterior_input());
  if (cfg.has_prior_net())
    m.prior = InferenceParams::create(cfg.d_z, cfg.d_z, cfg.prior_input());
  m.out = ReadoutParams::create(
      cfg.d_r, cfg.d_e + cfg.d_h + cfg.annotation_size(), cfg.tgt_vocab,
      cfg.has_latent() ? cfg.d_z : 0);
  return m;
}

void ModelParams::init(Rng& rng, bool orthogonal) {
  init_uniform(src_emb, rng);
  init_uniform(tgt_emb, rng);
  enc_fwd.init(rng, orthogonal);
  enc_bwd.init(rng, orthogonal);
  init_uniform(W_init, rng);
  att.init(rng);
  dec.init(rng, orthogonal);
  if (cfg.has_latent()) post.init(rng);
  if (cfg.has_prior_net()) prior.init(rng);
  out.init(rng);
}

NamedParams ModelParams::named() {
  NamedParams n;
  n.emplace_back("src_emb", &src_emb);
  n.emplace_back("tgt_emb", &tgt_emb);
  enc_fwd.collect("enc_fwd", n);
  enc_bwd.collect("enc_bwd", n);
  n.emplace_back("init.W", &W_init);
  n.emplace_back("init.b", &b_init);
  att.collect("att", n);
  dec.collect("dec", n);
  if (cfg.has_latent()) post.collect("post", n);
  if (cfg.has_prior_net()) prior.collect("prior", n);
  out.collect("out", n);
  return n;
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& [name, t] : named()) {
    t->requires_grad = on;
    if (on) t->ensure_grad();
  }
}

void ModelParams::zero_grads() {
  for (auto& [name, t] : named()) {
    t->ensure_grad();
    t->zero_grad();
  }
}

Var output_distribution(Graph& g, Var y_emb, Var s, Var c, Var z,
                        ModelParams& P, const DropoutCtx& drop) {
  Var cat = g.concat({y_emb, s, c});
  Var pre = g.add(g.matvec(g.leaf(P.out.Wd), cat), g.leaf(P.out.bd));
  if (z.valid() && P.out.has_latent)
    pre = g.add(pre, g.matvec(g.leaf(P.out.Vd), z));
  Var hidden = apply_dropout(g, g.tanh_op(pre), drop);
  Var logits = g.add(g.matvec(g.leaf(P.out.Wout), hidden), g.leaf(P.out.bout));
  return g.log_softmax_row(logits);
}

namespace {

struct StepContext {
  Var y_prev_emb;
  Var y_gold_emb;  // invalid on the inference path
  AttentionResult att;
  GaussianVars post;
  GaussianVars prior;
};

StepContext build_step_context(Graph& g, const Annotations& ann, int y_prev,
                               int y_gold, Var s, ModelParams& P,
                               const DropoutCtx& drop) {
  StepContext ctx;
  ctx.y_prev_emb = apply_dropout(g, embed(g, P.tgt_emb, y_prev), drop);
  ctx.att = attend(g, s, ann, P.att);
  if (y_gold >= 0 && P.cfg.has_latent()) {
    ctx.y_gold_emb = apply_dropout(g, embed(g, P.tgt_emb, y_gold), drop);
    if (P.cfg.variant == Variant::vrnmt_td) {
      const Var in[] = {ctx.y_gold_emb};
      ctx.post = inference_network(g, in, P.post);
    } else {
      const Var in[] = {ctx.y_prev_emb, s, ctx.att.c, ctx.y_gold_emb};
      ctx.post = inference_network(g, in, P.post);
    }
  }
  if (P.cfg.has_prior_net()) {
    const Var in[] = {ctx.y_prev_emb, s, ctx.att.c};
    ctx.prior = inference_network(g, in, P.prior);
  } else if (P.cfg.has_latent()) {
    ctx.prior = standard_normal(g, P.cfg.d_z);
  }
  return ctx;
}

}  // namespace

StepOutput decode_step_train(Graph& g, const Annotations& ann, int y_prev,
                             int y_gold, Var s, ModelParams& P,
                             std::span<const double> eps,
                             const DropoutCtx& drop) {
  StepContext ctx = build_step_context(g, ann, y_prev, y_gold, s, P, drop);
  StepOutput out;
  out.att = ctx.att;
  out.post = ctx.post;
  out.prior = ctx.prior;
  if (P.cfg.has_latent()) {
    out.epsilon.assign(eps.begin(), eps.end());
    out.z = reparameterize(g, ctx.post, eps);
    out.kl = kl_divergence(g, ctx.post, ctx.prior);
  }
  out.log_probs =
      output_distribution(g, ctx.y_prev_emb, s, ctx.att.c, out.z, P, drop);
  out.s_next = variational_gru_step(g, ctx.y_prev_emb, s, ctx.att.c, out.z,
                                    P.dec);
  return out;
}

StepOutput decode_step_infer(Graph& g, const Annotations& ann, int y_prev,
                             Var s, ModelParams& P,
                             std::span<const double> prior_eps) {
  DropoutCtx no_drop;
  StepContext ctx = build_step_context(g, ann, y_prev, -1, s, P, no_drop);
  StepOutput out;
  out.att = ctx.att;
  out.prior = ctx.prior;
  if (P.cfg.has_latent()) {
    if (prior_eps.empty()) {
      // vrnmt: prior mean; vrnmt_td: the standard-normal mean, a zero vector
      out.z = ctx.prior.mu;
    } else {
      out.epsilon.assign(prior_eps.begin(), prior_eps.end());
      out.z = reparameterize(g, ctx.prior, prior_eps);
    }
  }
  out.log_probs =
      output_distribution(g, ctx.y_prev_emb, s, ctx.att.c, out.z, P, no_drop);
  out.s_next = variational_gru_step(g, ctx.y_prev_emb, s, ctx.att.c, out.z,
                                    P.dec);
  return out;
}

ObjectiveResult sentence_objective(Graph& g, std::span<const int> x,
                                   std::span<const int> y, ModelParams& P,
                                   const ObjectiveConfig& oc) {
  if (x.empty() || y.empty())
    throw DataError("sentence_objective: empty sentence");
  if (oc.max_len > 0 && (x.size() > oc.max_len || y.size() > oc.max_len))
    throw DataError("sentence_objective: sentence exceeds max length " +
                    std::to_string(oc.max_len));
  if (oc.L == 0) throw UsageError("sentence_objective: L must be positive");

  DropoutCtx drop{oc.dropout, oc.dropout_rng};
  Annotations ann = encode(g, x, P.src_emb, P.enc_fwd, P.enc_bwd, drop);
  attention_precompute(g, P.att, ann);
  Var s = init_decoder_state(g, ann, P.W_init, P.b_init);

  const std::size_t steps = y.size() + 1;
  const bool latent = P.cfg.has_latent();

  auto noise_for = [&](std::size_t step, std::size_t sample) {
    std::vector<double> eps(P.cfg.d_z, 0.0);
    if (!latent || !oc.posterior_path) return eps;
    if (oc.eps_rng != nullptr) {
      oc.eps_rng->fill_normal(eps);
    } else if (oc.eps_table != nullptr) {
      const std::size_t idx = step * oc.L + sample;
      if (idx >= oc.eps_table->size())
        throw Error("sentence_objective: noise table too short");
      eps = (*oc.eps_table)[idx];
      if (eps.size() != P.cfg.d_z)
        throw Error("sentence_objective: noise dimension mismatch");
    }
    return eps;
  };

  Var logp_total;
  Var kl_total;
  for (std::size_t t = 0; t < steps; ++t) {
    const int y_prev = t == 0 ? kBosId : y[t - 1];
    const int y_gold = t < y.size() ? y[t] : kEosId;

    StepContext ctx = build_step_context(g, ann, y_prev, y_gold, s, P, drop);
    Var step_lp;
    Var z_first;
    for (std::size_t l = 0; l < oc.L; ++l) {
      Var z;
      if (latent) {
        if (oc.posterior_path) {
          z = reparameterize(g, ctx.post, noise_for(t, l));
        } else if (P.cfg.variant == Variant::vrnmt_td) {
          z = g.constant(Tensor(vec_shape(P.cfg.d_z)));
        } else {
          z = ctx.prior.mu;
        }
      }
      if (l == 0) z_first = z;
      Var lp = g.pick(
          output_distribution(g, ctx.y_prev_emb, s, ctx.att.c, z, P, drop),
          static_cast<std::size_t>(y_gold));
      step_lp = l == 0 ? lp : g.add(step_lp, lp);
    }
    if (oc.L > 1) step_lp = g.scale(step_lp, 1.0 / static_cast<double>(oc.L));
    logp_total = t == 0 ? step_lp : g.add(logp_total, step_lp);

    if (latent) {
      Var kl = kl_divergence(g, ctx.post, ctx.prior);
      kl_total = t == 0 ? kl : g.add(kl_total, kl);
    }
    s = variational_gru_step(g, ctx.y_prev_emb, s, ctx.att.c, z_first, P.dec);
  }

  ObjectiveResult res;
  res.steps = steps;
  res.nll = g.scale(logp_total, -1.0);
  res.nll_value = g.scalar(res.nll);
  if (latent) {
    res.kl = kl_total;
    res.kl_value = g.scalar(kl_total);
  }
  res.elbo_value = -res.nll_value - res.kl_value;
  if (!std::isfinite(res.nll_value) || !std::isfinite(res.kl_value))
    throw NumericError("sentence_objective: non-finite objective");
  return res;
}

}  // namespace vrnmt
