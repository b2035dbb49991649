#include "vrnmt/layers.hpp"

#include <algorithm>
#include <cmath>

namespace vrnmt {

void init_uniform(Tensor& t, Rng& rng, double range) {
  for (double& v : t.data) v = rng.uniform(-range, range);
}

void init_orthogonal(Tensor& t, Rng& rng) {
  if (t.shape.rank != 2 || t.shape.rows != t.shape.cols)
    throw Error("init_orthogonal: square matrices only");
  const std::size_t n = t.shape.rows;
  // Gram-Schmidt on Gaussian rows; restart a row on numerical collapse.
  for (std::size_t i = 0; i < n; ++i) {
    for (;;) {
      for (std::size_t j = 0; j < n; ++j) t.at(i, j) = rng.normal();
      for (std::size_t k = 0; k < i; ++k) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += t.at(i, j) * t.at(k, j);
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) -= dot * t.at(k, j);
      }
      double norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) norm += t.at(i, j) * t.at(i, j);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) /= norm;
        break;
      }
    }
  }
}

Var apply_dropout(Graph& g, Var v, const DropoutCtx& drop) {
  if (!drop.active()) return v;
  const std::size_t n = g.value(v).numel();
  const double keep = 1.0 - drop.rate;
  std::vector<double> mask(n);
  for (double& m : mask)
    m = (drop.rng->uniform() < keep) ? 1.0 / keep : 0.0;
  return g.mul(v, g.constant(Tensor(g.value(v).shape, std::move(mask))));
}

Var embed(Graph& g, Tensor& table, int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= table.shape.rows)
    throw DataError("embed: token id " + std::to_string(id) +
                    " out of range for vocabulary of " +
                    std::to_string(table.shape.rows));
  return g.row(g.leaf(table), static_cast<std::size_t>(id));
}

GruParams GruParams::create(std::size_t hidden, std::size_t input) {
  GruParams p;
  p.Wr = Tensor(mat_shape(hidden, input));
  p.Ur = Tensor(mat_shape(hidden, hidden));
  p.br = Tensor(vec_shape(hidden));
  p.Wu = Tensor(mat_shape(hidden, input));
  p.Uu = Tensor(mat_shape(hidden, hidden));
  p.bu = Tensor(vec_shape(hidden));
  p.Wh = Tensor(mat_shape(hidden, input));
  p.Uh = Tensor(mat_shape(hidden, hidden));
  p.bh = Tensor(vec_shape(hidden));
  return p;
}

void GruParams::init(Rng& rng, bool orthogonal) {
  for (Tensor* w : {&Wr, &Wu, &Wh}) init_uniform(*w, rng);
  for (Tensor* u : {&Ur, &Uu, &Uh}) {
    if (orthogonal)
      init_orthogonal(*u, rng);
    else
      init_uniform(*u, rng);
  }
}

void GruParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".Wr", &Wr);
  out.emplace_back(prefix + ".Ur", &Ur);
  out.emplace_back(prefix + ".br", &br);
  out.emplace_back(prefix + ".Wu", &Wu);
  out.emplace_back(prefix + ".Uu", &Uu);
  out.emplace_back(prefix + ".bu", &bu);
  out.emplace_back(prefix + ".Wh", &Wh);
  out.emplace_back(prefix + ".Uh", &Uh);
  out.emplace_back(prefix + ".bh", &bh);
}

namespace {
Var ones_like(Graph& g, Var v) {
  return g.constant(Tensor(g.value(v).shape, 1.0));
}
}  // namespace

Var gru_step(Graph& g, Var s_prev, Var x, GruParams& P) {
  Var r = g.sigmoid(g.add(
      g.add(g.matvec(g.leaf(P.Wr), x), g.matvec(g.leaf(P.Ur), s_prev)),
      g.leaf(P.br)));
  Var u = g.sigmoid(g.add(
      g.add(g.matvec(g.leaf(P.Wu), x), g.matvec(g.leaf(P.Uu), s_prev)),
      g.leaf(P.bu)));
  Var cand = g.tanh_op(g.add(
      g.add(g.matvec(g.leaf(P.Wh), x),
            g.matvec(g.leaf(P.Uh), g.mul(r, s_prev))),
      g.leaf(P.bh)));
  return g.add(g.mul(g.sub(ones_like(g, u), u), s_prev), g.mul(u, cand));
}

DecoderGruParams DecoderGruParams::create(std::size_t hidden, std::size_t emb,
                                          std::size_t ctx,
                                          std::size_t latent) {
  DecoderGruParams p;
  p.Wr = Tensor(mat_shape(hidden, emb));
  p.Ur = Tensor(mat_shape(hidden, hidden));
  p.Cr = Tensor(mat_shape(hidden, ctx));
  p.br = Tensor(vec_shape(hidden));
  p.Wu = Tensor(mat_shape(hidden, emb));
  p.Uu = Tensor(mat_shape(hidden, hidden));
  p.Cu = Tensor(mat_shape(hidden, ctx));
  p.bu = Tensor(vec_shape(hidden));
  p.Wh = Tensor(mat_shape(hidden, emb));
  p.Uh = Tensor(mat_shape(hidden, hidden));
  p.Ch = Tensor(mat_shape(hidden, ctx));
  p.bh = Tensor(vec_shape(hidden));
  if (latent > 0) {
    p.has_latent = true;
    p.Vr = Tensor(mat_shape(hidden, latent));
    p.Vu = Tensor(mat_shape(hidden, latent));
    p.Vh = Tensor(mat_shape(hidden, latent));
  }
  return p;
}

void DecoderGruParams::init(Rng& rng, bool orthogonal) {
  for (Tensor* w : {&Wr, &Cr, &Wu, &Cu, &Wh, &Ch}) init_uniform(*w, rng);
  for (Tensor* u : {&Ur, &Uu, &Uh}) {
    if (orthogonal)
      init_orthogonal(*u, rng);
    else
      init_uniform(*u, rng);
  }
  if (has_latent)
    for (Tensor* v : {&Vr, &Vu, &Vh}) init_uniform(*v, rng);
}

void DecoderGruParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".Wr", &Wr);
  out.emplace_back(prefix + ".Ur", &Ur);
  out.emplace_back(prefix + ".Cr", &Cr);
  out.emplace_back(prefix + ".br", &br);
  out.emplace_back(prefix + ".Wu", &Wu);
  out.emplace_back(prefix + ".Uu", &Uu);
  out.emplace_back(prefix + ".Cu", &Cu);
  out.emplace_back(prefix + ".bu", &bu);
  out.emplace_back(prefix + ".Wh", &Wh);
  out.emplace_back(prefix + ".Uh", &Uh);
  out.emplace_back(prefix + ".Ch", &Ch);
  out.emplace_back(prefix + ".bh", &bh);
  if (has_latent) {
    out.emplace_back(prefix + ".Vr", &Vr);
    out.emplace_back(prefix + ".Vu", &Vu);
    out.emplace_back(prefix + ".Vh", &Vh);
  }
}

Var variational_gru_step(Graph& g, Var y_emb, Var s, Var c, Var z,
                         DecoderGruParams& P) {
  // z contributions append after the bias: with z = 0 the values match the
  // latent-free path bit-for-bit, which the variant-equivalence tests rely on.
  auto pre = [&](Tensor& W, Tensor& U, Tensor& C, Tensor& b, Var state_in,
                 Tensor& V) {
    Var t = g.add(
        g.add(g.add(g.matvec(g.leaf(W), y_emb), g.matvec(g.leaf(U), state_in)),
              g.matvec(g.leaf(C), c)),
        g.leaf(b));
    if (z.valid() && P.has_latent) t = g.add(t, g.matvec(g.leaf(V), z));
    return t;
  };
  Var r = g.sigmoid(pre(P.Wr, P.Ur, P.Cr, P.br, s, P.Vr));
  Var u = g.sigmoid(pre(P.Wu, P.Uu, P.Cu, P.bu, s, P.Vu));
  Var cand = g.tanh_op(pre(P.Wh, P.Uh, P.Ch, P.bh, g.mul(r, s), P.Vh));
  return g.add(g.mul(g.sub(ones_like(g, u), u), s), g.mul(u, cand));
}

AttentionParams AttentionParams::create(std::size_t d_a, std::size_t d_h,
                                        std::size_t ann) {
  AttentionParams p;
  p.Wa = Tensor(mat_shape(d_a, d_h));
  p.Ua = Tensor(mat_shape(d_a, ann));
  p.va = Tensor(vec_shape(d_a));
  return p;
}

void AttentionParams::init(Rng& rng) {
  init_uniform(Wa, rng);
  init_uniform(Ua, rng);
  init_uniform(va, rng);
}

void AttentionParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".Wa", &Wa);
  out.emplace_back(prefix + ".Ua", &Ua);
  out.emplace_back(prefix + ".va", &va);
}

Annotations encode(Graph& g, std::span<const int> src_ids, Tensor& src_emb,
                   GruParams& fwd, GruParams& bwd, const DropoutCtx& drop) {
  if (src_ids.empty()) throw DataError("encode: empty source sentence");
  const std::size_t T = src_ids.size();
  const std::size_t d_h = fwd.Ur.shape.rows;

  std::vector<Var> emb(T);
  for (std::size_t i = 0; i < T; ++i)
    emb[i] = apply_dropout(g, embed(g, src_emb, src_ids[i]), drop);

  std::vector<Var> hf(T), hb(T);
  Var h = g.constant(Tensor(vec_shape(d_h)));
  for (std::size_t i = 0; i < T; ++i) {
    h = gru_step(g, h, emb[i], fwd);
    hf[i] = h;
  }
  h = g.constant(Tensor(vec_shape(d_h)));
  for (std::size_t i = T; i-- > 0;) {
    h = gru_step(g, h, emb[i], bwd);
    hb[i] = h;
  }

  std::vector<Var> rows(T);
  for (std::size_t i = 0; i < T; ++i) rows[i] = g.concat({hf[i], hb[i]});

  Annotations ann;
  ann.H = g.stack_rows(rows);
  ann.mask.assign(T, 1.0);
  ann.length = T;
  return ann;
}

void attention_precompute(Graph& g, AttentionParams& P, Annotations& ann) {
  ann.u_proj = g.matmul_nt(ann.H, g.leaf(P.Ua));
}

Var attend_scores(Graph& g, Var s_prev, const Annotations& ann,
                  AttentionParams& P) {
  if (!ann.u_proj.valid())
    throw Error("attend: attention_precompute not run for these annotations");
  Var q = g.matvec(g.leaf(P.Wa), s_prev);
  Var keys = g.tanh_op(g.add_bias(ann.u_proj, q));
  return g.matvec(keys, g.leaf(P.va));
}

AttentionResult attend(Graph& g, Var s_prev, const Annotations& ann,
                       AttentionParams& P) {
  Var scores = attend_scores(g, s_prev, ann, P);
  const bool masked =
      std::any_of(ann.mask.begin(), ann.mask.end(),
                  [](double m) { return m == 0.0; });
  if (masked) {
    std::vector<double> bias(ann.length);
    for (std::size_t i = 0; i < ann.length; ++i)
      bias[i] = ann.mask[i] == 0.0 ? -1e9 : 0.0;
    scores = g.add(scores, g.constant(Tensor::vec(std::move(bias))));
  }
  // The -1e9 offset drives masked exponentials to exact zero, so the softmax
  // denominator only counts real positions; the mask product keeps the
  // exact-zero guarantee explicit.
  Var alpha = g.softmax_row(scores);
  if (masked)
    alpha = g.mul(alpha, g.constant(Tensor::vec(
                             std::vector<double>(ann.mask))));
  AttentionResult res;
  res.alpha = alpha;
  res.c = g.vecmat(alpha, ann.H);
  return res;
}

Var init_decoder_state(Graph& g, const Annotations& ann, Tensor& W_init,
                       Tensor& b_init) {
  if (ann.length == 0) throw DataError("init_decoder_state: empty source");
  const std::size_t d_h = W_init.shape.cols;
  Var first = g.row(ann.H, 0);
  Var back = g.slice(first, d_h, d_h);
  return g.tanh_op(
      g.add(g.matvec(g.leaf(W_init), back), g.leaf(b_init)));
}

}  // namespace vrnmt
