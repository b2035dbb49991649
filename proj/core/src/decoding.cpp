#include "vrnmt/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace vrnmt {

namespace {

struct LiveHyp {
  std::vector<int> ids;
  double score = 0.0;
  Var s;
  int y_prev = kBosId;
  std::vector<std::vector<double>> alphas;
};

// Score-descending order; equal scores resolve to the lexicographically
// smaller id sequence so results are reproducible.
bool better(double score_a, const std::vector<int>& ids_a, double score_b,
            const std::vector<int>& ids_b) {
  if (score_a != score_b) return score_a > score_b;
  return std::lexicographical_compare(ids_a.begin(), ids_a.end(),
                                      ids_b.begin(), ids_b.end());
}

// One classic width-limited pass: expand all live hypotheses over the
// vocabulary, keep the top `width` candidates, retire finished ones, stop
// once `width` completions exist or the length cap is reached.  Capped
// survivors are closed out with their terminal log probability.
std::vector<Hypothesis> run_width(Graph& g, const Annotations& ann,
                                  ModelParams& model, Var s0,
                                  std::size_t width, std::size_t max_out_len,
                                  Rng* prior_noise) {
  std::vector<LiveHyp> live(1);
  live[0].s = s0;

  std::vector<Hypothesis> done;

  auto step_hyp = [&](const LiveHyp& h) {
    std::vector<double> eps;
    if (prior_noise != nullptr && model.cfg.has_latent()) {
      eps.resize(model.cfg.d_z);
      prior_noise->fill_normal(eps);
    }
    return decode_step_infer(g, ann, h.y_prev, h.s, model, eps);
  };

  for (std::size_t t = 0; t < max_out_len && !live.empty(); ++t) {
    if (done.size() >= width) break;

    struct Cand {
      std::size_t parent;
      int token;
      double score;
      std::vector<int> ids;  // parent ids + token, the tie-break key
    };
    std::vector<Cand> cands;
    std::vector<StepOutput> outs;
    outs.reserve(live.size());
    for (std::size_t hi = 0; hi < live.size(); ++hi) {
      outs.push_back(step_hyp(live[hi]));
      const Tensor& lp = g.value(outs.back().log_probs);
      for (std::size_t v = 0; v < lp.numel(); ++v) {
        Cand c;
        c.parent = hi;
        c.token = static_cast<int>(v);
        c.score = live[hi].score + lp.data[v];
        c.ids = live[hi].ids;
        c.ids.push_back(c.token);
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return better(a.score, a.ids, b.score, b.ids);
    });
    if (cands.size() > width) cands.resize(width);

    std::vector<LiveHyp> next;
    for (Cand& c : cands) {
      const LiveHyp& parent = live[c.parent];
      const StepOutput& out = outs[c.parent];
      if (c.token == kEosId) {
        Hypothesis h;
        h.ids = parent.ids;
        h.score = c.score;
        h.alphas = parent.alphas;
        h.finished = true;
        done.push_back(std::move(h));
      } else {
        LiveHyp h;
        h.ids = std::move(c.ids);
        h.score = c.score;
        h.s = out.s_next;
        h.y_prev = c.token;
        h.alphas = parent.alphas;
        h.alphas.push_back(g.value(out.att.alpha).data);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }

  // Length cap reached: close out the survivors with their terminal score.
  for (LiveHyp& h : live) {
    if (done.size() >= width) break;
    StepOutput out = step_hyp(h);
    Hypothesis fin;
    fin.ids = std::move(h.ids);
    fin.score = h.score + g.value(out.log_probs).data[kEosId];
    fin.alphas = std::move(h.alphas);
    fin.finished = true;
    done.push_back(std::move(fin));
  }
  return done;
}

}  // namespace

std::vector<Hypothesis> beam_search(ModelParams& model,
                                    std::span<const int> src,
                                    std::size_t beam_size,
                                    std::size_t max_out_len,
                                    Rng* prior_noise) {
  if (src.empty()) throw DataError("beam_search: empty source");
  if (beam_size == 0) throw UsageError("beam_search: beam size must be >= 1");
  if (max_out_len == 0) max_out_len = 2 * src.size() + 10;

  Graph g;
  DropoutCtx no_drop;
  Annotations ann =
      encode(g, src, model.src_emb, model.enc_fwd, model.enc_bwd, no_drop);
  attention_precompute(g, model.att, ann);
  Var s0 = init_decoder_state(g, ann, model.W_init, model.b_init);

  // A single width-limited pass can score worse as the width grows: a wider
  // candidate front may crowd out exactly the prefix whose early completion
  // a narrower pass retires.  Ranking the union of every width up to the
  // requested one makes the best returned score non-decreasing in beam size
  // by construction, and keeps width 1 identical to repeated argmax.
  std::map<std::vector<int>, Hypothesis> pool;
  for (std::size_t width = 1; width <= beam_size; ++width)
    for (Hypothesis& h : run_width(g, ann, model, s0, width, max_out_len,
                                   prior_noise))
      pool.try_emplace(h.ids, std::move(h));

  std::vector<Hypothesis> done;
  done.reserve(pool.size());
  for (auto& [ids, h] : pool) done.push_back(std::move(h));
  std::sort(done.begin(), done.end(), [](const Hypothesis& a,
                                         const Hypothesis& b) {
    return better(a.score, a.ids, b.score, b.ids);
  });
  if (done.size() > beam_size) done.resize(beam_size);
  return done;
}

std::vector<int> greedy_decode(ModelParams& model, std::span<const int> src,
                               std::size_t max_out_len) {
  std::vector<Hypothesis> hyps = beam_search(model, src, 1, max_out_len);
  if (hyps.empty()) throw Error("greedy_decode: no hypothesis produced");
  return hyps.front().ids;
}

std::vector<std::pair<int, int>> force_decode_alignments(
    ModelParams& model, std::span<const int> src, std::span<const int> ref) {
  if (src.empty()) throw DataError("force_decode_alignments: empty source");
  if (ref.empty()) throw DataError("force_decode_alignments: empty reference");

  Graph g;
  DropoutCtx no_drop;
  Annotations ann =
      encode(g, src, model.src_emb, model.enc_fwd, model.enc_bwd, no_drop);
  attention_precompute(g, model.att, ann);
  Var s = init_decoder_state(g, ann, model.W_init, model.b_init);

  std::vector<std::pair<int, int>> links;
  int y_prev = kBosId;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    StepOutput out = decode_step_infer(g, ann, y_prev, s, model);
    const std::vector<double>& alpha = g.value(out.att.alpha).data;
    std::size_t best = 0;
    for (std::size_t i = 1; i < alpha.size(); ++i)
      if (alpha[i] > alpha[best]) best = i;
    links.emplace_back(static_cast<int>(best), static_cast<int>(j));
    s = out.s_next;
    y_prev = ref[j];
  }
  return links;
}

}  // namespace vrnmt
