#include "fasb/model/decoding.hpp"

#include <cmath>

#include "fasb/common/error.hpp"

namespace fasb {

TokenId greedy_token(const Eigen::VectorXf& logits) {
  require(logits.size() > 0, "invalid_logits", "empty logits");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenDecoder::TokenDecoder(DecodingPolicy policy) : policy_(policy), rng_(policy.seed) {
  require(policy_.kind == DecodingPolicy::Kind::greedy || policy_.temperature > 0.0, "invalid_policy",
          "sampling temperature must be > 0");
}

TokenId TokenDecoder::next(const Eigen::VectorXf& logits) {
  require(logits.allFinite(), "invalid_logits", "logits must be finite");
  if (policy_.kind == DecodingPolicy::Kind::greedy) return greedy_token(logits);

  std::vector<double> probs(static_cast<std::size_t>(logits.size()));
  const double max = static_cast<double>(logits.maxCoeff());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp((static_cast<double>(logits(static_cast<Eigen::Index>(i))) - max) / policy_.temperature);
    total += probs[i];
  }
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng_);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(probs.size() - 1);
}

}  // namespace fasb
