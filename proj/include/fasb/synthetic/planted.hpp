#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "fasb/model/tokenizer.hpp"
#include "fasb/model/transformer.hpp"

namespace fasb::synthetic {

// Special token ids shared by every planted vocabulary.
inline constexpr TokenId kUnkToken = 0;
inline constexpr TokenId kModePosToken = 1;
inline constexpr TokenId kModeNegToken = 2;
inline constexpr TokenId kFirstDriftToken = 3;
inline constexpr std::size_t kDriftVariants = 4;

struct VocabPartition {
  std::vector<TokenId> desired;   // A
  std::vector<TokenId> deviant;   // B
  std::vector<TokenId> neutral;
  std::vector<TokenId> drift;     // drift trigger tokens, one per variant

  bool is_desired(TokenId t) const;
  bool is_deviant(TokenId t) const;
};

// Tiny transformer with a behaviour direction planted at one head.
//
// The designated head (layer 0) attends to position 0, where the mode token
// writes +/- mode_direction into the subspace its value projection reads; its
// output is routed by W_O into a readout direction that raises desired-token
// logits when the projection on mode_direction is positive and deviant-token
// logits when negative. Drift tokens carry a key whose attention score grows
// with query position, so the head's output swings toward -mode_direction
// partway through generation. Every other head and MLP reads and writes only a
// subspace orthogonal to the mode, drift and readout directions, so their
// activations carry no information about the label.
struct PlantedModel {
  std::shared_ptr<const Transformer> model;
  Vocabulary vocab;
  Eigen::VectorXf mode_direction;  // unit, length d_head
  HeadId designated_head;
  VocabPartition partition;
  // Absolute query position at which each drift variant takes over attention.
  std::vector<std::size_t> drift_flip_positions;
};

ModelConfig default_config();

// Throws fasb::Error("config_too_small") if the construction does not fit.
PlantedModel build_planted_model(const ModelConfig& config, std::uint64_t seed);

// Desired-token fraction of `tokens` (0 for an empty sequence).
double desired_fraction(const VocabPartition& partition, std::span<const TokenId> tokens);

// ground_truth.json sidecar: designated head, mode direction and partition.
nlohmann::json ground_truth_json(const PlantedModel& planted);

struct GroundTruth {
  HeadId designated_head;
  Eigen::VectorXf mode_direction;
  VocabPartition partition;
};
GroundTruth ground_truth_from_json(const nlohmann::json& j);

}  // namespace fasb::synthetic
