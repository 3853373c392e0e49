#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "fasb/anchoring/bundle.hpp"
#include "fasb/model/local_backend.hpp"
#include "fasb/model/transformer.hpp"
#include "fasb/synthetic/dataset.hpp"
#include "fasb/synthetic/planted.hpp"

namespace fasb::testing {

ModelConfig small_config(PositionalEncoding pe = PositionalEncoding::learned);

// Gaussian weights with standard deviation `scale`; layer norm gains near 1.
std::shared_ptr<const Transformer> random_model(const ModelConfig& config, std::uint64_t seed, float scale = 0.3F);

std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab_size);
Eigen::VectorXf random_vector(std::mt19937_64& rng, std::size_t n);

// Straightforward double-precision evaluation of the whole sequence, written
// independently of the library kernels.
struct ReferencePass {
  std::vector<Eigen::VectorXd> logits;                 // per position
  std::vector<std::vector<Eigen::VectorXd>> heads_out;  // [position][layer], concatenated heads
};
ReferencePass reference_forward(const Transformer& model, const std::vector<TokenId>& tokens,
                                const SteeringSpec& steering_last = {});

// Planted model with extracted activations and both anchored bundles, built
// once per process.
struct PlantedFixture {
  synthetic::PlantedModel planted;
  std::shared_ptr<LocalBackend> backend;
  synthetic::BehaviorDataset dataset;
  anchoring::ActivationSet activations;
  anchoring::AnchorResult probe;      // k = 1
  anchoring::AnchorResult prototype;  // k = 1
  std::vector<std::vector<TokenId>> drift_prompts;
};
const PlantedFixture& planted_fixture();

inline constexpr std::uint64_t kPlantedSeed = 7;
inline constexpr std::uint64_t kDatasetSeed = 11;
inline constexpr std::uint64_t kDriftSeed = 5;

}  // namespace fasb::testing
