#include "fasb/model/transformer.hpp"

#include <cmath>

#include "fasb/common/error.hpp"
#include "fasb/model/math.hpp"

namespace fasb {

TransformerWeights TransformerWeights::zeros(const ModelConfig& config) {
  const auto d = static_cast<Eigen::Index>(config.d_model);
  const auto f = static_cast<Eigen::Index>(config.d_ff());
  const auto v = static_cast<Eigen::Index>(config.vocab_size);
  const auto n = static_cast<Eigen::Index>(config.max_seq_len);

  TransformerWeights w;
  w.token_embedding = RowMatrixXf::Zero(v, d);
  if (config.positional_encoding == PositionalEncoding::learned) {
    w.position_embedding = RowMatrixXf::Zero(n, d);
  }
  w.layers.resize(config.n_layers);
  for (auto& layer : w.layers) {
    layer.ln1_gain = Eigen::VectorXf::Ones(d);
    layer.ln1_bias = Eigen::VectorXf::Zero(d);
    layer.wq = RowMatrixXf::Zero(d, d);
    layer.wk = RowMatrixXf::Zero(d, d);
    layer.wv = RowMatrixXf::Zero(d, d);
    layer.wo = RowMatrixXf::Zero(d, d);
    layer.bq = layer.bk = layer.bv = layer.bo = Eigen::VectorXf::Zero(d);
    layer.ln2_gain = Eigen::VectorXf::Ones(d);
    layer.ln2_bias = Eigen::VectorXf::Zero(d);
    layer.w1 = RowMatrixXf::Zero(f, d);
    layer.b1 = Eigen::VectorXf::Zero(f);
    layer.w2 = RowMatrixXf::Zero(d, f);
    layer.b2 = Eigen::VectorXf::Zero(d);
  }
  w.lnf_gain = Eigen::VectorXf::Ones(d);
  w.lnf_bias = Eigen::VectorXf::Zero(d);
  w.unembedding = RowMatrixXf::Zero(v, d);
  w.unembedding_bias = Eigen::VectorXf::Zero(v);
  return w;
}

Transformer::Transformer(ModelConfig config, TransformerWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto v = static_cast<Eigen::Index>(config_.vocab_size);
  const auto shape_ok = [](const auto& m, Eigen::Index rows, Eigen::Index cols) {
    return m.rows() == rows && m.cols() == cols;
  };
  require(shape_ok(weights_.token_embedding, v, d), "invalid_weights", "token embedding shape mismatch");
  require(shape_ok(weights_.unembedding, v, d), "invalid_weights", "unembedding shape mismatch");
  require(weights_.layers.size() == config_.n_layers, "invalid_weights", "layer count mismatch");
  if (config_.positional_encoding == PositionalEncoding::learned) {
    require(shape_ok(weights_.position_embedding, static_cast<Eigen::Index>(config_.max_seq_len), d),
            "invalid_weights", "position embedding shape mismatch");
  }
  const auto f = static_cast<Eigen::Index>(config_.d_ff());
  for (const auto& layer : weights_.layers) {
    require(shape_ok(layer.wq, d, d) && shape_ok(layer.wk, d, d) && shape_ok(layer.wv, d, d) &&
                shape_ok(layer.wo, d, d) && shape_ok(layer.w1, f, d) && shape_ok(layer.w2, d, f),
            "invalid_weights", "layer weight shape mismatch");
  }
}

void Transformer::validate_head(const HeadId& head) const {
  require(head.layer < config_.n_layers && head.head < config_.n_heads, "invalid_head",
          "head " + to_string(head) + " out of range");
}

void Transformer::validate_steering(const SteeringSpec& steering) const {
  for (const auto& entry : steering.entries()) {
    validate_head(entry.head);
    require(static_cast<std::size_t>(entry.direction.size()) == config_.d_head, "invalid_steering",
            "steering direction length " + std::to_string(entry.direction.size()) +
                " != d_head " + std::to_string(config_.d_head));
  }
}

Eigen::VectorXf Transformer::position_vector(std::size_t position) const {
  if (config_.positional_encoding == PositionalEncoding::learned) {
    return weights_.position_embedding.row(static_cast<Eigen::Index>(position)).transpose();
  }
  Eigen::VectorXf pe(static_cast<Eigen::Index>(config_.d_model));
  for (std::size_t i = 0; i < config_.d_model; ++i) {
    const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(config_.d_model);
    const double angle = static_cast<double>(position) / std::pow(10000.0, exponent);
    pe(static_cast<Eigen::Index>(i)) = static_cast<float>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return pe;
}

StepOutput Transformer::forward(KvCache& cache, TokenId token, const SteeringSpec& steering,
                                std::span<const HeadId> taps, std::vector<LayerTrace>* trace) const {
  require(token >= 0 && static_cast<std::size_t>(token) < config_.vocab_size, "invalid_token",
          "token id " + std::to_string(token) + " out of vocabulary range");
  require(cache.committed_len() < config_.max_seq_len, "sequence_overflow",
          "sequence length would exceed max_seq_len " + std::to_string(config_.max_seq_len));
  validate_steering(steering);
  for (const auto& tap : taps) validate_head(tap);

  const std::size_t position = cache.committed_len();
  const auto d_head = static_cast<Eigen::Index>(config_.d_head);
  const float scale = 1.0F / std::sqrt(static_cast<float>(config_.d_head));

  StepOutput out;
  if (trace != nullptr) trace->assign(config_.n_layers, LayerTrace{});

  Eigen::VectorXf x = weights_.token_embedding.row(token).transpose();
  x += position_vector(position);

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const LayerWeights& w = weights_.layers[l];
    const Eigen::VectorXf a = math::layer_norm(x, w.ln1_gain, w.ln1_bias, kLayerNormEps);
    const Eigen::VectorXf q = math::matvec(w.wq, a) + w.bq;
    const Eigen::VectorXf k = math::matvec(w.wk, a) + w.bk;
    const Eigen::VectorXf v = math::matvec(w.wv, a) + w.bv;
    cache.write(l, k, v);

    // Attend over positions [0, position], including the row just written.
    const std::size_t span_len = position + 1;
    Eigen::VectorXf heads_out(static_cast<Eigen::Index>(config_.d_model));
    Eigen::VectorXf scores(static_cast<Eigen::Index>(span_len));
    const RowMatrixXf& keys = cache.key_rows(l);
    const RowMatrixXf& values = cache.value_rows(l);
    for (std::size_t h = 0; h < config_.n_heads; ++h) {
      const auto offset = static_cast<Eigen::Index>(h) * d_head;
      const auto q_h = q.segment(offset, d_head);
      for (std::size_t t = 0; t < span_len; ++t) {
        const auto key = keys.row(static_cast<Eigen::Index>(t)).segment(offset, d_head).transpose();
        scores(static_cast<Eigen::Index>(t)) = math::dot(q_h, key) * scale;
      }
      const Eigen::VectorXf attn = math::softmax(scores);
      for (Eigen::Index i = 0; i < d_head; ++i) {
        float acc = 0.0F;
        for (std::size_t t = 0; t < span_len; ++t) {
          acc += attn(static_cast<Eigen::Index>(t)) * values(static_cast<Eigen::Index>(t), offset + i);
        }
        heads_out(offset + i) = acc;
      }
    }

    for (const auto& entry : steering.entries()) {
      if (entry.head.layer != l) continue;
      const auto offset = static_cast<Eigen::Index>(entry.head.head) * d_head;
      heads_out.segment(offset, d_head) += entry.strength * entry.direction;
    }
    for (const auto& tap : taps) {
      if (tap.layer != l) continue;
      out.head_activations[tap] =
          heads_out.segment(static_cast<Eigen::Index>(tap.head) * d_head, d_head);
    }

    const Eigen::VectorXf mhsa = math::matvec(w.wo, heads_out) + w.bo;
    if (trace != nullptr) {
      (*trace)[l].pre_output_projection = heads_out;
      (*trace)[l].attention_output = mhsa;
    }
    x += mhsa;

    const Eigen::VectorXf m = math::layer_norm(x, w.ln2_gain, w.ln2_bias, kLayerNormEps);
    Eigen::VectorXf hidden = math::matvec(w.w1, m) + w.b1;
    for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = math::gelu(hidden(i));
    x += math::matvec(w.w2, hidden) + w.b2;
  }
  cache.commit();

  const Eigen::VectorXf final_norm =
      math::layer_norm(x, weights_.lnf_gain, weights_.lnf_bias, kLayerNormEps);
  out.logits = math::matvec(weights_.unembedding, final_norm) + weights_.unembedding_bias;
  return out;
}

}  // namespace fasb
