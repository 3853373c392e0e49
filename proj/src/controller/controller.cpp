#include "fasb/controller/controller.hpp"

#include <chrono>
#include <cmath>

#include "fasb/common/error.hpp"
#include "fasb/model/math.hpp"

namespace fasb::controller {

namespace {

const std::map<Mode, std::string>& mode_names() {
  static const std::map<Mode, std::string> names{
      {Mode::fasb, "fasb"},           {Mode::btb, "btb"},
      {Mode::gcbb, "gcbb"},           {Mode::fixed_all, "fixed_all"},
      {Mode::no_adaptive, "no_adaptive"}, {Mode::no_backtrack, "no_backtrack"},
      {Mode::question_gate, "question_gate"}, {Mode::none, "none"}};
  return names;
}

bool triggers_while_tracking(Mode mode) {
  return mode == Mode::fasb || mode == Mode::btb || mode == Mode::no_adaptive || mode == Mode::no_backtrack;
}

}  // namespace

std::string to_string(Mode mode) { return mode_names().at(mode); }

Mode parse_mode(const std::string& name) {
  for (const auto& [mode, n] : mode_names())
    if (n == name) return mode;
  fail("invalid_argument", "unknown mode '" + name + "'");
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes{Mode::fasb,        Mode::btb,          Mode::gcbb,
                                       Mode::fixed_all,   Mode::no_adaptive,  Mode::no_backtrack,
                                       Mode::question_gate, Mode::none};
  return modes;
}

void ControllerConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, "invalid_config", "alpha must be finite and >= 0");
  require(std::isfinite(beta) && beta >= 0.0 && beta <= 1.0, "invalid_config", "beta must be in [0, 1]");
  require(s >= 1, "invalid_config", "s must be >= 1");
  require(max_tokens >= 1, "invalid_config", "max_tokens must be >= 1");
}

ControllerConfig config_from_bundle(const anchoring::SteeringBundle& bundle, Mode mode) {
  ControllerConfig config;
  config.mode = mode;
  config.alpha = bundle.hyper.alpha;
  config.beta = bundle.hyper.beta;
  config.s = bundle.hyper.s;
  return config;
}

double deviation_probability(const anchoring::SteeringBundle& bundle, const std::map<HeadId, Eigen::VectorXf>& tapped) {
  require(!bundle.heads.empty(), "invalid_bundle", "bundle has no heads");
  double total = 0.0;
  for (const auto& classifier : bundle.heads) {
    const HeadId& head = anchoring::head_of(classifier);
    const auto it = tapped.find(head);
    require(it != tapped.end(), "missing_activation", "no tapped activation for head " + to_string(head));
    total += 1.0 - anchoring::classify(classifier, it->second);
  }
  return total / static_cast<double>(bundle.heads.size());
}

double intervention_strength(double p, double alpha, double beta) { return p > beta ? p * alpha : 0.0; }

class Controller::TokenSource {
 public:
  virtual ~TokenSource() = default;
  virtual TokenId next(std::size_t index, const Eigen::VectorXf& logits) = 0;
  virtual std::size_t limit() const = 0;
  virtual bool stops(TokenId token) const = 0;
};

Controller::Controller(anchoring::SteeringBundle bundle, ControllerConfig config)
    : bundle_(std::move(bundle)), config_(std::move(config)) {
  config_.validate();
  require(!bundle_.heads.empty(), "invalid_bundle", "bundle has no heads");
}

GenerationResult Controller::run(Backend& backend, std::span<const TokenId> prompt, TokenSource& source) const {
  require(backend.config().fingerprint() == bundle_.model_fingerprint, "fingerprint_mismatch",
          "bundle was built for model " + fingerprint_hex(bundle_.model_fingerprint) + " but the backend is " +
              fingerprint_hex(backend.config().fingerprint()));
  const auto start = std::chrono::steady_clock::now();
  const Mode mode = config_.mode;
  const std::vector<HeadId> taps = bundle_.head_ids();

  GenerationResult result;
  DeviationTrace& trace = result.trace;
  auto session = backend.prime(prompt, taps);
  SteeringSpec steering;

  const auto begin_steering = [&](double strength, std::size_t first_index) {
    steering = bundle_.steering(static_cast<float>(strength));
    session->restep_last(steering);
    trace.steered_from = first_index;
    trace.applied_strength = strength;
  };
  const auto backtrack = [&](std::size_t keep) {
    result.regenerated_tokens += result.tokens.size() - keep;
    session->rollback(keep);
    result.tokens.resize(keep);
    result.token_logprobs.resize(keep);
  };

  bool tracking = mode != Mode::fixed_all && mode != Mode::question_gate;
  if (mode == Mode::fixed_all) {
    begin_steering(config_.alpha, 1);
  } else if (mode == Mode::question_gate) {
    const double p = deviation_probability(bundle_, session->last().head_activations);
    trace.question_probability = p;
    if (p > config_.beta) {
      const double r = intervention_strength(p, config_.alpha, config_.beta);
      trace.trigger = Trigger{0, p, r, 1};
      begin_steering(r, 1);
    }
  }

  const auto generate_until_done = [&]() {
    while (result.tokens.size() < source.limit()) {
      const Eigen::VectorXf& logits = session->last().logits;
      const TokenId token = source.next(result.tokens.size(), logits);
      require(token >= 0 && static_cast<std::size_t>(token) < static_cast<std::size_t>(logits.size()),
              "invalid_token", "token id " + std::to_string(token) + " out of vocabulary range");
      result.token_logprobs.push_back(math::log_softmax_at(logits, token));
      session->step(token, steering);
      result.tokens.push_back(token);
      ++result.decode_steps;
      const std::size_t j = result.tokens.size();

      if (tracking) {
        const double p = deviation_probability(bundle_, session->last().head_activations);
        trace.probabilities.push_back(p);
        if (triggers_while_tracking(mode) && p > config_.beta && j >= config_.s) {
          const double r = mode == Mode::no_adaptive ? config_.alpha
                                                     : intervention_strength(p, config_.alpha, config_.beta);
          std::size_t keep = j - config_.s;
          if (mode == Mode::btb) keep = 0;
          if (mode == Mode::no_backtrack) keep = j;
          trace.trigger = Trigger{j, p, r, keep + 1};
          tracking = false;
          backtrack(keep);
          begin_steering(r, keep + 1);
          continue;
        }
      }
      if (source.stops(token)) break;
    }
  };

  generate_until_done();

  if (mode == Mode::gcbb && !trace.probabilities.empty()) {
    const double p = trace.probabilities.back();
    if (p > config_.beta) {
      const double r = intervention_strength(p, config_.alpha, config_.beta);
      trace.trigger = Trigger{result.tokens.size(), p, r, 1};
      tracking = false;
      backtrack(0);
      begin_steering(r, 1);
      generate_until_done();
    }
  }

  result.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

GenerationResult Controller::generate(Backend& backend, std::span<const TokenId> prompt) const {
  class Decoding final : public TokenSource {
   public:
    explicit Decoding(const ControllerConfig& config) : config_(config), decoder_(config.decoding) {}
    TokenId next(std::size_t, const Eigen::VectorXf& logits) override { return decoder_.next(logits); }
    std::size_t limit() const override { return config_.max_tokens; }
    bool stops(TokenId token) const override { return config_.stop_tokens.count(token) > 0; }

   private:
    const ControllerConfig& config_;
    TokenDecoder decoder_;
  } source(config_);
  return run(backend, prompt, source);
}

GenerationResult Controller::force(Backend& backend, std::span<const TokenId> prompt,
                                   std::span<const TokenId> forced) const {
  require(!forced.empty(), "invalid_argument", "forced continuation is empty");
  class Forced final : public TokenSource {
   public:
    explicit Forced(std::span<const TokenId> tokens) : tokens_(tokens) {}
    TokenId next(std::size_t index, const Eigen::VectorXf&) override { return tokens_[index]; }
    std::size_t limit() const override { return tokens_.size(); }
    bool stops(TokenId) const override { return false; }

   private:
    std::span<const TokenId> tokens_;
  } source(forced);
  return run(backend, prompt, source);
}

}  // namespace fasb::controller
