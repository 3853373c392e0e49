#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fasb/synthetic/planted.hpp"

namespace fasb::synthetic {

enum class Split { train, validation, test };

struct BehaviorRecord {
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;
  int label = 0;  // 1 = desired (A-dominant), 0 = deviant
};

struct BehaviorDataset {
  std::vector<BehaviorRecord> train;
  std::vector<BehaviorRecord> validation;
  std::vector<BehaviorRecord> test;
};

// Rolls the planted model greedily under alternating MODE_POS / MODE_NEG
// prompts and labels each answer by its dominant token class. Splits are
// stratified 60/20/20. Requires n_samples >= 20.
BehaviorDataset generate_behavior_dataset(const PlantedModel& planted, std::size_t n_samples,
                                          std::uint64_t seed);

// Prompts of the form <pos> w.. <driftK> w.. whose unsteered continuation
// swings from desired to deviant tokens partway through generation.
std::vector<std::vector<TokenId>> make_drift_prompts(const PlantedModel& planted, std::size_t n,
                                                     std::uint64_t seed);

// Greedy unsteered continuation of `prompt` for `n_tokens` steps.
std::vector<TokenId> greedy_rollout(const PlantedModel& planted, std::span<const TokenId> prompt,
                                    std::size_t n_tokens);

}  // namespace fasb::synthetic
