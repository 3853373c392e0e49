#include "fasb/synthetic/dataset.hpp"

#include <random>

#include "fasb/common/error.hpp"
#include "fasb/model/decoding.hpp"
#include "fasb/model/local_backend.hpp"

namespace fasb::synthetic {

namespace {

std::vector<TokenId> neutral_run(const VocabPartition& partition, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, partition.neutral.size() - 1);
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(partition.neutral[pick(rng)]);
  return out;
}

}  // namespace

std::vector<TokenId> greedy_rollout(const PlantedModel& planted, std::span<const TokenId> prompt,
                                    std::size_t n_tokens) {
  LocalBackend backend(planted.model);
  auto session = backend.prime(prompt, {});
  const SteeringSpec none;
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < n_tokens; ++i) {
    const TokenId next = greedy_token(session->last().logits);
    out.push_back(next);
    if (i + 1 < n_tokens) session->step(next, none);
  }
  return out;
}

BehaviorDataset generate_behavior_dataset(const PlantedModel& planted, std::size_t n_samples,
                                          std::uint64_t seed) {
  require(n_samples >= 20, "invalid_argument", "n_samples must be >= 20");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> prompt_len(2, 6);
  std::uniform_int_distribution<std::size_t> answer_len(6, 12);

  std::vector<BehaviorRecord> by_label[2];
  for (std::size_t i = 0; i < n_samples; ++i) {
    const bool positive = i % 2 == 0;
    BehaviorRecord record;
    record.prompt.push_back(positive ? kModePosToken : kModeNegToken);
    const auto tail = neutral_run(planted.partition, prompt_len(rng), rng);
    record.prompt.insert(record.prompt.end(), tail.begin(), tail.end());
    record.answer = greedy_rollout(planted, record.prompt, answer_len(rng));
    std::size_t desired = 0;
    std::size_t deviant = 0;
    for (TokenId t : record.answer) {
      desired += planted.partition.is_desired(t) ? 1 : 0;
      deviant += planted.partition.is_deviant(t) ? 1 : 0;
    }
    record.label = desired > deviant ? 1 : 0;
    by_label[record.label].push_back(std::move(record));
  }

  // Stratified 60/20/20 split in generation order.
  BehaviorDataset dataset;
  for (auto& group : by_label) {
    const std::size_t n = group.size();
    const std::size_t n_train = n * 60 / 100;
    const std::size_t n_val = n * 20 / 100;
    for (std::size_t i = 0; i < n; ++i) {
      auto& target = i < n_train ? dataset.train : (i < n_train + n_val ? dataset.validation : dataset.test);
      target.push_back(std::move(group[i]));
    }
  }
  return dataset;
}

std::vector<std::vector<TokenId>> make_drift_prompts(const PlantedModel& planted, std::size_t n,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> head_len(2, 5);
  std::uniform_int_distribution<std::size_t> tail_len(0, 2);
  std::uniform_int_distribution<std::size_t> variant(0, planted.partition.drift.size() - 1);
  std::vector<std::vector<TokenId>> prompts;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<TokenId> prompt{kModePosToken};
    auto head = neutral_run(planted.partition, head_len(rng), rng);
    prompt.insert(prompt.end(), head.begin(), head.end());
    prompt.push_back(planted.partition.drift[variant(rng)]);
    auto tail = neutral_run(planted.partition, tail_len(rng), rng);
    prompt.insert(prompt.end(), tail.begin(), tail.end());
    prompts.push_back(std::move(prompt));
  }
  return prompts;
}

}  // namespace fasb::synthetic
