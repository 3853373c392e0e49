#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "fasb/model/config.hpp"
#include "fasb/model/types.hpp"

namespace fasb {

// A prompt plus generated tokens, the backend's cached attention state, and
// the StepOutput recorded after every committed generated token. Single-owner:
// not safe for concurrent use, but may be moved between threads between calls.
//
// Backends implement `forward` (append one position) and `truncate_positions`
// (drop cached positions); the bookkeeping lives here.
class GenerationSession {
 public:
  virtual ~GenerationSession() = default;
  GenerationSession(const GenerationSession&) = delete;
  GenerationSession& operator=(const GenerationSession&) = delete;

  std::size_t prompt_len() const { return prompt_len_; }
  std::size_t generated() const { return tokens_.size() - prompt_len_; }
  std::size_t committed_len() const { return tokens_.size(); }
  std::span<const TokenId> tokens() const { return tokens_; }
  std::span<const TokenId> generated_tokens() const {
    return std::span<const TokenId>(tokens_).subspan(prompt_len_);
  }

  // Output of the most recent forward pass: logits for the next token.
  const StepOutput& last() const { return outputs_.back(); }

  // Appends `token` and runs it with `steering` applied.
  const StepOutput& step(TokenId token, const SteeringSpec& steering);

  // Keeps the first `keep_generated` generated tokens; last() becomes the
  // output recorded when the last kept token (or the prompt) was processed.
  void rollback(std::size_t keep_generated);

  // Re-runs the most recent position under `steering`, so that the next
  // token's logits reflect the intervention. Token sequence is unchanged.
  const StepOutput& restep_last(const SteeringSpec& steering);

 protected:
  GenerationSession() = default;

  // Called by backends once the prompt is cached.
  void init(std::span<const TokenId> prompt, StepOutput prompt_output);

  virtual StepOutput forward(TokenId token, const SteeringSpec& steering) = 0;
  virtual void truncate_positions(std::size_t n) = 0;

 private:
  std::size_t prompt_len_ = 0;
  std::vector<TokenId> tokens_;
  std::vector<StepOutput> outputs_;  // outputs_[i] follows generated token i (0 = prompt)
};

// Abstract model backend shared by the local reference transformer and the
// remote bridge client.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const ModelConfig& config() const = 0;

  // Caches the prompt and returns a session whose last() is the output at the
  // final prompt token. Requires 1 <= |prompt| <= max_seq_len - 1.
  virtual std::unique_ptr<GenerationSession> prime(std::span<const TokenId> prompt,
                                                   std::span<const HeadId> taps) = 0;
};

void validate_prompt(const ModelConfig& config, std::span<const TokenId> prompt);

}  // namespace fasb
