#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fasb/anchoring/activations.hpp"
#include "fasb/anchoring/classifier.hpp"
#include "fasb/model/types.hpp"

namespace fasb::anchoring {

enum class Method { probe, prototype };

std::string to_string(Method method);
Method parse_method(const std::string& name);
std::string to_string(Normalization normalization);
Normalization parse_normalization(const std::string& name);

struct Hyperparams {
  double alpha = 60.0;
  double beta = 0.45;
  std::size_t s = 10;
  Normalization normalization = Normalization::unit;

  bool operator==(const Hyperparams&) const = default;
};

// Probe: alpha 60, beta 0.45; prototype: alpha 40, beta 0.5; both s = 10.
Hyperparams default_hyperparams(Method method);

// Selected heads with their classifiers plus generation hyperparameters.
struct SteeringBundle {
  Method method = Method::probe;
  Hyperparams hyper;
  std::vector<HeadClassifier> heads;  // descending validation accuracy
  std::uint64_t split_seed = 0;
  double lambda = 1e-3;
  double tau = 0.1;
  std::uint64_t model_fingerprint = 0;

  std::size_t k() const { return heads.size(); }
  std::vector<HeadId> head_ids() const;

  // Every non-degenerate head with its steering direction at `strength`.
  SteeringSpec steering(float strength) const;

  // The first k heads, which are exactly the top-k selection.
  SteeringBundle truncated(std::size_t k) const;

  // Directory with manifest.json and vectors.bin (per head, in order, float32:
  // probe theta, or prototype pos then neg).
  void save(const std::string& dir) const;
  static SteeringBundle load(const std::string& dir);
};

bool operator==(const SteeringBundle& a, const SteeringBundle& b);

struct AnchorOptions {
  Method method = Method::probe;
  std::size_t k = 24;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  double lambda = 1e-3;
  double tau = 0.1;
  Hyperparams hyper = default_hyperparams(Method::probe);
};

struct AnchorResult {
  SteeringBundle bundle;
  std::vector<HeadClassifier> all;  // every head, in (layer, head) order
};

// Fits one classifier per head on a seeded stratified split and keeps the top k.
AnchorResult anchor(const ActivationSet& activations, const AnchorOptions& options,
                    std::uint64_t model_fingerprint);

}  // namespace fasb::anchoring
