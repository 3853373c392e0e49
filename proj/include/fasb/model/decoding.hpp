#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "fasb/model/types.hpp"

namespace fasb {

struct DecodingPolicy {
  enum class Kind { greedy, sample };
  Kind kind = Kind::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

// Stateful token chooser. Greedy picks the argmax with ties going to the
// lowest id; sampling draws from softmax(logits / temperature) on a
// deterministic stream seeded from the policy.
class TokenDecoder {
 public:
  explicit TokenDecoder(DecodingPolicy policy);

  TokenId next(const Eigen::VectorXf& logits);

 private:
  DecodingPolicy policy_;
  std::mt19937_64 rng_;
};

TokenId greedy_token(const Eigen::VectorXf& logits);

}  // namespace fasb
