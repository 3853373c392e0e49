#include "fasb/model/session.hpp"

#include "fasb/common/error.hpp"

namespace fasb {

void validate_prompt(const ModelConfig& config, std::span<const TokenId> prompt) {
  require(!prompt.empty(), "empty_prompt", "prompt must contain at least one token");
  require(prompt.size() <= config.max_seq_len - 1, "prompt_too_long",
          "prompt of " + std::to_string(prompt.size()) + " tokens leaves no room to generate (max_seq_len " +
              std::to_string(config.max_seq_len) + ")");
  for (TokenId t : prompt) {
    require(t >= 0 && static_cast<std::size_t>(t) < config.vocab_size, "invalid_token",
            "token id " + std::to_string(t) + " out of vocabulary range");
  }
}

void GenerationSession::init(std::span<const TokenId> prompt, StepOutput prompt_output) {
  prompt_len_ = prompt.size();
  tokens_.assign(prompt.begin(), prompt.end());
  outputs_.clear();
  outputs_.push_back(std::move(prompt_output));
}

const StepOutput& GenerationSession::step(TokenId token, const SteeringSpec& steering) {
  outputs_.push_back(forward(token, steering));
  tokens_.push_back(token);
  return outputs_.back();
}

void GenerationSession::rollback(std::size_t keep_generated) {
  require(keep_generated <= generated(), "invalid_rollback",
          "cannot keep " + std::to_string(keep_generated) + " of " + std::to_string(generated()) +
              " generated tokens");
  if (keep_generated == generated()) return;
  truncate_positions(prompt_len_ + keep_generated);
  tokens_.resize(prompt_len_ + keep_generated);
  outputs_.resize(keep_generated + 1);
}

const StepOutput& GenerationSession::restep_last(const SteeringSpec& steering) {
  const TokenId token = tokens_.back();
  truncate_positions(tokens_.size() - 1);
  outputs_.back() = forward(token, steering);
  return outputs_.back();
}

}  // namespace fasb
