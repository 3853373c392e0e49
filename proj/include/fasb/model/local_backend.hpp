#pragma once

#include <memory>
#include <vector>

#include "fasb/model/kv_cache.hpp"
#include "fasb/model/session.hpp"
#include "fasb/model/transformer.hpp"

namespace fasb {

class LocalSession final : public GenerationSession {
 public:
  LocalSession(std::shared_ptr<const Transformer> model, std::span<const TokenId> prompt,
               std::span<const HeadId> taps);

  const KvCache& cache() const { return cache_; }
  std::span<const HeadId> taps() const { return taps_; }

 protected:
  StepOutput forward(TokenId token, const SteeringSpec& steering) override;
  void truncate_positions(std::size_t n) override;

 private:
  std::shared_ptr<const Transformer> model_;
  std::vector<HeadId> taps_;
  KvCache cache_;
};

// Backend over the in-process reference transformer.
class LocalBackend final : public Backend {
 public:
  explicit LocalBackend(std::shared_ptr<const Transformer> model) : model_(std::move(model)) {}

  const ModelConfig& config() const override { return model_->config(); }
  const std::shared_ptr<const Transformer>& model() const { return model_; }

  std::unique_ptr<GenerationSession> prime(std::span<const TokenId> prompt,
                                           std::span<const HeadId> taps) override;

 private:
  std::shared_ptr<const Transformer> model_;
};

}  // namespace fasb
