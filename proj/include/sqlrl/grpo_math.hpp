#pragma once

// Numeric pieces of the group-relative policy objective: advantage
// normalization over a reward group, the masked clipped surrogate, and the k3
// KL penalty. Pure functions over supplied log-prob arrays; no model inside.
// All reductions run left-to-right for bit reproducibility.

#include <cstddef>
#include <vector>

namespace sqlrl::grpo {

inline constexpr double kDefaultEpsilonStd = 1e-8;
inline constexpr double kDefaultClipEpsilon = 0.2;

// How the probability ratio enters the surrogate. TokenLevel clips each
// token's ratio separately; SequenceLevel clips one length-normalized ratio
// per rollout (geometric mean over unmasked tokens).
enum class RatioMode {
  TokenLevel,
  SequenceLevel,
};

struct SurrogateInputs {
  // [rollout][token]; the four arrays must agree on every length.
  std::vector<std::vector<double>> logp_theta;
  std::vector<std::vector<double>> logp_old;
  std::vector<std::vector<double>> logp_ref;
  std::vector<std::vector<bool>> loss_mask;
  double clip_epsilon = kDefaultClipEpsilon;
  double kl_beta = 0.0;
  RatioMode ratio_mode = RatioMode::TokenLevel;
};

struct SurrogateValue {
  double objective = 0.0;  // surrogate − kl_beta · kl
  double surrogate = 0.0;  // group mean of per-rollout clipped terms
  double kl = 0.0;         // group mean of per-rollout k3 averages
};

// (r − mean) / max(population std, epsilon_std). Groups whose std falls below
// epsilon_std are degenerate and normalize to all zeros.
std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double epsilon_std = kDefaultEpsilonStd);

// Unbiased nonnegative estimator, averaged over unmasked tokens:
// k3 = exp(delta) − delta − 1 with delta = logp_ref − logp_theta.
double kl_penalty(const std::vector<double>& logp_theta,
                  const std::vector<double>& logp_ref,
                  const std::vector<bool>& mask);

// Full objective with per-term visibility. Masked tokens are skipped
// entirely: their values never enter any sum or finiteness check.
SurrogateValue masked_surrogate_terms(const SurrogateInputs& inputs,
                                      const std::vector<double>& advantages);

// Scalar convenience wrapper returning only .objective.
double masked_surrogate(const SurrogateInputs& inputs,
                        const std::vector<double>& advantages);

}  // namespace sqlrl::grpo
