#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fasb/anchoring/bundle.hpp"
#include "fasb/model/decoding.hpp"
#include "fasb/model/session.hpp"

namespace fasb::controller {

// fasb: track, backtrack s tokens on first detection, regenerate steered.
// btb / gcbb: backtrack to the beginning on first detection / after the full
// response. fixed_all: steer every token at strength alpha. no_adaptive:
// fasb with strength alpha. no_backtrack: fasb without rollback.
// question_gate: decide once from the last prompt token. none: plain decoding.
enum class Mode { fasb, btb, gcbb, fixed_all, no_adaptive, no_backtrack, question_gate, none };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);
const std::vector<Mode>& all_modes();

struct ControllerConfig {
  Mode mode = Mode::fasb;
  double alpha = 60.0;
  double beta = 0.45;
  std::size_t s = 10;
  std::size_t max_tokens = 50;
  std::set<TokenId> stop_tokens;
  DecodingPolicy decoding;

  void validate() const;
};

// Config with alpha/beta/s taken from the bundle's hyperparameters.
ControllerConfig config_from_bundle(const anchoring::SteeringBundle& bundle, Mode mode);

struct Trigger {
  std::size_t index = 0;         // generated-token index j* (0 = prompt, question_gate)
  double probability = 0.0;      // deviation probability at detection
  double strength = 0.0;         // r applied to every steered token
  std::size_t regen_start = 0;   // first generated index produced under steering
};

struct DeviationTrace {
  std::vector<double> probabilities;  // p_j for each tracked token, j = 1..
  std::optional<double> question_probability;
  std::optional<Trigger> trigger;
  // First generated index produced under steering and its strength, for every
  // mode that steers (fixed_all has no trigger but steers from token 1).
  std::optional<std::size_t> steered_from;
  double applied_strength = 0.0;
};

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::vector<double> token_logprobs;  // log p(token) under the logits that chose it
  DeviationTrace trace;
  std::size_t regenerated_tokens = 0;  // generated tokens discarded by rollback
  std::size_t decode_steps = 0;        // forward passes over generated tokens
  double wall_time_ms = 0.0;
};

// Mean over the bundle's heads of (1 - desired-class probability).
double deviation_probability(const anchoring::SteeringBundle& bundle,
                             const std::map<HeadId, Eigen::VectorXf>& tapped);

// I(p > beta) * p * alpha.
double intervention_strength(double p, double alpha, double beta);

class Controller {
 public:
  Controller(anchoring::SteeringBundle bundle, ControllerConfig config);

  const ControllerConfig& config() const { return config_; }
  const anchoring::SteeringBundle& bundle() const { return bundle_; }

  // Free-running generation with the configured decoding policy.
  GenerationResult generate(Backend& backend, std::span<const TokenId> prompt) const;

  // Teacher-forced run: `forced` replaces sampled tokens, tracking and
  // steering behave exactly as in generate. Stop tokens are ignored.
  GenerationResult force(Backend& backend, std::span<const TokenId> prompt, std::span<const TokenId> forced) const;

 private:
  class TokenSource;
  GenerationResult run(Backend& backend, std::span<const TokenId> prompt, TokenSource& source) const;

  anchoring::SteeringBundle bundle_;
  ControllerConfig config_;
};

}  // namespace fasb::controller
