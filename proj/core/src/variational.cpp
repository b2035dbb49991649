#include "vrnmt/variational.hpp"

#include <algorithm>
#include <cmath>

namespace vrnmt {

InferenceParams InferenceParams::create(std::size_t d_z, std::size_t hidden,
                                        std::size_t input) {
  InferenceParams p;
  p.Wz = Tensor(mat_shape(hidden, input));
  p.bz = Tensor(vec_shape(hidden));
  p.Wmu = Tensor(mat_shape(d_z, hidden));
  p.bmu = Tensor(vec_shape(d_z));
  p.Wsig = Tensor(mat_shape(d_z, hidden));
  p.bsig = Tensor(vec_shape(d_z));
  return p;
}

void InferenceParams::init(Rng& rng) {
  init_uniform(Wz, rng);
  init_uniform(Wmu, rng);
  init_uniform(Wsig, rng);
}

void InferenceParams::collect(const std::string& prefix, NamedParams& out) {
  out.emplace_back(prefix + ".Wz", &Wz);
  out.emplace_back(prefix + ".bz", &bz);
  out.emplace_back(prefix + ".Wmu", &Wmu);
  out.emplace_back(prefix + ".bmu", &bmu);
  out.emplace_back(prefix + ".Wsig", &Wsig);
  out.emplace_back(prefix + ".bsig", &bsig);
}

GaussianVars inference_network(Graph& g, std::span<const Var> inputs,
                               InferenceParams& P) {
  Var x = inputs.size() == 1 ? inputs[0] : g.concat(inputs);
  Var h = g.tanh_op(g.add(g.matvec(g.leaf(P.Wz), x), g.leaf(P.bz)));
  GaussianVars out;
  out.mu = g.add(g.matvec(g.leaf(P.Wmu), h), g.leaf(P.bmu));
  out.log_var = g.clamp(
      g.add(g.matvec(g.leaf(P.Wsig), h), g.leaf(P.bsig)), kLogVarMin,
      kLogVarMax);
  return out;
}

Var reparameterize(Graph& g, const GaussianVars& q,
                   std::span<const double> eps) {
  const std::size_t d = g.value(q.mu).numel();
  if (eps.size() != d) throw Error("reparameterize: noise dimension mismatch");
  bool all_zero = std::all_of(eps.begin(), eps.end(),
                              [](double e) { return e == 0.0; });
  if (all_zero) return q.mu;
  Var sigma = g.exp_op(g.scale(q.log_var, 0.5));
  return g.add(q.mu, g.mul(sigma, g.constant_vec(eps)));
}

GaussianVars standard_normal(Graph& g, std::size_t d) {
  GaussianVars out;
  out.mu = g.constant(Tensor(vec_shape(d)));
  out.log_var = g.constant(Tensor(vec_shape(d)));
  return out;
}

Var kl_divergence(Graph& g, const GaussianVars& q, const GaussianVars& p) {
  Var lv_diff = g.sub(q.log_var, p.log_var);
  Var ratio = g.exp_op(lv_diff);  // var_q / var_p
  Var md = g.sub(q.mu, p.mu);
  Var mahal = g.mul(g.mul(md, md), g.exp_op(g.scale(p.log_var, -1.0)));
  Var inner = g.sub(g.add_const(g.add(ratio, mahal), -1.0), lv_diff);
  return g.scale(g.sum(inner), 0.5);
}

double kl_closed_form(std::span<const double> mu_q,
                      std::span<const double> lv_q,
                      std::span<const double> mu_p,
                      std::span<const double> lv_p) {
  const std::size_t d = mu_q.size();
  if (lv_q.size() != d || mu_p.size() != d || lv_p.size() != d)
    throw Error("kl_closed_form: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double lvd = lv_q[k] - lv_p[k];
    const double md = mu_q[k] - mu_p[k];
    const double term =
        std::exp(lvd) + md * md * std::exp(-lv_p[k]) - 1.0 - lvd;
    acc += std::max(0.0, term);
  }
  return 0.5 * acc;
}

}  // namespace vrnmt
