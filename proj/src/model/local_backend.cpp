#include "fasb/model/local_backend.hpp"

#include <algorithm>

namespace fasb {

LocalSession::LocalSession(std::shared_ptr<const Transformer> model, std::span<const TokenId> prompt,
                           std::span<const HeadId> taps)
    : model_(std::move(model)), taps_(taps.begin(), taps.end()), cache_(model_->config()) {
  validate_prompt(model_->config(), prompt);
  std::sort(taps_.begin(), taps_.end());
  taps_.erase(std::unique(taps_.begin(), taps_.end()), taps_.end());
  for (const auto& tap : taps_) model_->validate_head(tap);

  const SteeringSpec none;
  StepOutput output;
  for (TokenId token : prompt) output = model_->forward(cache_, token, none, taps_);
  init(prompt, std::move(output));
}

StepOutput LocalSession::forward(TokenId token, const SteeringSpec& steering) {
  return model_->forward(cache_, token, steering, taps_);
}

void LocalSession::truncate_positions(std::size_t n) { cache_.truncate(n); }

std::unique_ptr<GenerationSession> LocalBackend::prime(std::span<const TokenId> prompt,
                                                       std::span<const HeadId> taps) {
  return std::make_unique<LocalSession>(model_, prompt, taps);
}

}  // namespace fasb
