#pragma once

#include <span>
#include <string>
#include <vector>

#include "vrnmt/layers.hpp"
#include "vrnmt/tensor.hpp"

namespace vrnmt {

// Log-variance bounds; values are clamped into this range after the linear
// head so exp() stays far from overflow and underflow.
inline constexpr double kLogVarMin = -8.0;
inline constexpr double kLogVarMax = 8.0;

struct GaussianVars {
  Var mu;
  Var log_var;
  bool valid() const { return mu.valid() && log_var.valid(); }
};

struct GaussianValues {
  std::vector<double> mu;
  std::vector<double> log_var;
};

// Two-head inference network: a tanh hidden layer over the concatenated
// conditioning vectors, then linear maps to mu and log-variance.
struct InferenceParams {
  Tensor Wz, bz;
  Tensor Wmu, bmu;
  Tensor Wsig, bsig;
  static InferenceParams create(std::size_t d_z, std::size_t hidden,
                                std::size_t input);
  void init(Rng& rng);
  void collect(const std::string& prefix, NamedParams& out);
};

GaussianVars inference_network(Graph& g, std::span<const Var> inputs,
                               InferenceParams& P);

// z = mu + exp(log_var / 2) * eps.  eps enters as a constant, so gradients
// reach mu and log_var only.
Var reparameterize(Graph& g, const GaussianVars& q,
                   std::span<const double> eps);

// Fixed standard normal of dimension d, used where no prior network exists.
GaussianVars standard_normal(Graph& g, std::size_t d);

// KL(q || p) for diagonal Gaussians, differentiable.  The variance ratio is
// computed as exp(lv_q - lv_p) so identical parameters give exactly zero.
Var kl_divergence(Graph& g, const GaussianVars& q, const GaussianVars& p);

// Plain closed form on raw values; per-coordinate terms are floored at zero
// to absorb last-ulp rounding when q and p nearly coincide.
double kl_closed_form(std::span<const double> mu_q,
                      std::span<const double> lv_q,
                      std::span<const double> mu_p,
                      std::span<const double> lv_p);

}  // namespace vrnmt
