#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fasb/model/config.hpp"
#include "fasb/model/kv_cache.hpp"
#include "fasb/model/types.hpp"

namespace fasb {

// Linear weights use the [out_features, in_features] layout: y = W x + b.
struct LayerWeights {
  Eigen::VectorXf ln1_gain, ln1_bias;
  RowMatrixXf wq, wk, wv, wo;
  Eigen::VectorXf bq, bk, bv, bo;
  Eigen::VectorXf ln2_gain, ln2_bias;
  RowMatrixXf w1, w2;
  Eigen::VectorXf b1, b2;
};

struct TransformerWeights {
  RowMatrixXf token_embedding;     // [vocab, d_model]
  RowMatrixXf position_embedding;  // [max_seq_len, d_model]; empty for sinusoidal
  std::vector<LayerWeights> layers;
  Eigen::VectorXf lnf_gain, lnf_bias;
  RowMatrixXf unembedding;         // [vocab, d_model]
  Eigen::VectorXf unembedding_bias;

  // Zero-initialized tensors shaped for `config` (layer norm gains are 1).
  static TransformerWeights zeros(const ModelConfig& config);
};

// Per-layer intermediate values of one forward pass, for inspection.
struct LayerTrace {
  Eigen::VectorXf pre_output_projection;  // concatenated head outputs after steering
  Eigen::VectorXf attention_output;       // W_O applied, plus output bias
};

// Pre-layer-norm decoder-only transformer evaluated one token at a time.
// Immutable after construction; safe to share across threads.
class Transformer {
 public:
  Transformer(ModelConfig config, TransformerWeights weights);

  const ModelConfig& config() const { return config_; }
  const TransformerWeights& weights() const { return weights_; }

  // Runs position cache.committed_len() for `token`, appends its keys/values
  // and returns next-token logits plus the tapped head activations.
  StepOutput forward(KvCache& cache, TokenId token, const SteeringSpec& steering,
                     std::span<const HeadId> taps,
                     std::vector<LayerTrace>* trace = nullptr) const;

  void validate_steering(const SteeringSpec& steering) const;
  void validate_head(const HeadId& head) const;

  static constexpr float kLayerNormEps = 1e-5F;

 private:
  Eigen::VectorXf position_vector(std::size_t position) const;

  ModelConfig config_;
  TransformerWeights weights_;
};

// Model directory: config.json (ModelConfig fields plus a "tensors" manifest of
// name/shape/offset) and weights.bin (little-endian float32, manifest order).
void save_model(const Transformer& model, const std::string& dir);
std::shared_ptr<const Transformer> load_model(const std::string& dir);

}  // namespace fasb
