#include "sqlrl/grpo_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sqlrl/errors.hpp"

namespace sqlrl::grpo {

namespace {

void require_finite(double v, const char* what, std::size_t i, std::size_t t) {
  if (!std::isfinite(v)) {
    throw NonFiniteInputError(std::string(what) + " is not finite at rollout " +
                              std::to_string(i) + ", token " + std::to_string(t));
  }
}

double clip(double r, double eps) {
  return std::min(std::max(r, 1.0 - eps), 1.0 + eps);
}

double clipped_term(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, clip(ratio, eps) * advantage);
}

double k3(double delta) { return std::exp(delta) - delta - 1.0; }

}  // namespace

std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double epsilon_std) {
  if (rewards.empty()) {
    throw EmptyGroupError("advantage normalization over zero rewards");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    if (!std::isfinite(rewards[i])) {
      throw NonFiniteInputError("reward is not finite at index " +
                                std::to_string(i));
    }
    sum += rewards[i];
  }
  const double mean = sum / static_cast<double>(rewards.size());
  double sq = 0.0;
  for (double r : rewards) {
    sq += (r - mean) * (r - mean);
  }
  const double stddev = std::sqrt(sq / static_cast<double>(rewards.size()));
  std::vector<double> advantages(rewards.size(), 0.0);
  if (stddev < epsilon_std) {
    return advantages;  // degenerate group: every reward ties
  }
  const double denom = std::max(stddev, epsilon_std);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    advantages[i] = (rewards[i] - mean) / denom;
  }
  return advantages;
}

double kl_penalty(const std::vector<double>& logp_theta,
                  const std::vector<double>& logp_ref,
                  const std::vector<bool>& mask) {
  if (logp_theta.size() != logp_ref.size() || logp_theta.size() != mask.size()) {
    throw ShapeMismatchError("kl_penalty arrays disagree on length");
  }
  double sum = 0.0;
  std::size_t unmasked = 0;
  for (std::size_t t = 0; t < logp_theta.size(); ++t) {
    if (!mask[t]) continue;
    require_finite(logp_theta[t], "logp_theta", 0, t);
    require_finite(logp_ref[t], "logp_ref", 0, t);
    sum += k3(logp_ref[t] - logp_theta[t]);
    ++unmasked;
  }
  return unmasked == 0 ? 0.0 : sum / static_cast<double>(unmasked);
}

SurrogateValue masked_surrogate_terms(const SurrogateInputs& inputs,
                                      const std::vector<double>& advantages) {
  const std::size_t G = inputs.logp_theta.size();
  if (G == 0) {
    throw EmptyGroupError("surrogate over zero rollouts");
  }
  if (inputs.logp_old.size() != G || inputs.logp_ref.size() != G ||
      inputs.loss_mask.size() != G || advantages.size() != G) {
    throw ShapeMismatchError("surrogate inputs disagree on group size");
  }
  double surrogate_sum = 0.0;
  double kl_sum = 0.0;
  for (std::size_t i = 0; i < G; ++i) {
    const auto& theta = inputs.logp_theta[i];
    const auto& old = inputs.logp_old[i];
    const auto& ref = inputs.logp_ref[i];
    const auto& mask = inputs.loss_mask[i];
    if (old.size() != theta.size() || ref.size() != theta.size() ||
        mask.size() != theta.size()) {
      throw ShapeMismatchError("per-token arrays disagree at rollout " +
                               std::to_string(i));
    }
    if (!std::isfinite(advantages[i])) {
      throw NonFiniteInputError("advantage is not finite at rollout " +
                                std::to_string(i));
    }
    double term_sum = 0.0;
    double delta_sum = 0.0;  // for the sequence-level ratio
    double rollout_kl = 0.0;
    std::size_t unmasked = 0;
    for (std::size_t t = 0; t < theta.size(); ++t) {
      if (!mask[t]) continue;
      require_finite(theta[t], "logp_theta", i, t);
      require_finite(old[t], "logp_old", i, t);
      require_finite(ref[t], "logp_ref", i, t);
      if (inputs.ratio_mode == RatioMode::TokenLevel) {
        term_sum += clipped_term(std::exp(theta[t] - old[t]), advantages[i],
                                 inputs.clip_epsilon);
      } else {
        delta_sum += theta[t] - old[t];
      }
      rollout_kl += k3(ref[t] - theta[t]);
      ++unmasked;
    }
    // A fully masked rollout carries no learnable tokens; it contributes zero
    // to both terms but still counts toward the group mean.
    if (unmasked > 0) {
      const double n = static_cast<double>(unmasked);
      if (inputs.ratio_mode == RatioMode::TokenLevel) {
        surrogate_sum += term_sum / n;
      } else {
        surrogate_sum += clipped_term(std::exp(delta_sum / n), advantages[i],
                                      inputs.clip_epsilon);
      }
      kl_sum += rollout_kl / n;
    }
  }
  SurrogateValue out;
  out.surrogate = surrogate_sum / static_cast<double>(G);
  out.kl = kl_sum / static_cast<double>(G);
  out.objective = out.surrogate - inputs.kl_beta * out.kl;
  return out;
}

double masked_surrogate(const SurrogateInputs& inputs,
                        const std::vector<double>& advantages) {
  return masked_surrogate_terms(inputs, advantages).objective;
}

}  // namespace sqlrl::grpo
