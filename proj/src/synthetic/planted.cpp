#include "fasb/synthetic/planted.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/QR>

#include "fasb/common/error.hpp"

namespace fasb::synthetic {

namespace {

// Construction constants, in units of the layer-norm output.
constexpr double kMarkerCoef = 3.0;      // e_m coefficient of the mode tokens
constexpr double kModeCoef = 3.0;        // mode_direction coefficient of mode/drift tokens
constexpr double kPositionNorm = 4.0;
constexpr double kAnchorScore = 12.0;    // attention logit on position 0
constexpr double kDriftSharpness = 15.0; // scale of the positional drift score
constexpr double kActivation = 4.0;      // |projection| of the designated head output
constexpr double kReadout = 1.0;         // W_O gain into the readout direction
constexpr double kUnembedGain = 2.0;
constexpr double kDeviantBias = 8.0;     // deviant tokens win below projection ~ +2
constexpr double kBlockedBias = -30.0;
constexpr double kTokenJitter = 0.6;     // token-specific unembedding scale
constexpr double kNoise = 0.08;          // distractor weight scale

using Matd = Eigen::MatrixXd;
using Vecd = Eigen::VectorXd;

bool contains(const std::vector<TokenId>& set, TokenId t) {
  return std::find(set.begin(), set.end(), t) != set.end();
}

class Builder {
 public:
  Builder(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed), rng_(seed) {}

  PlantedModel build();

 private:
  Vecd gaussian(Eigen::Index n) {
    Vecd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal_(rng_);
    return v;
  }
  Matd gaussian(Eigen::Index rows, Eigen::Index cols) {
    Matd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal_(rng_);
    return m;
  }
  // Random vector in the free subspace with the given norm.
  Vecd free_vector(double norm) {
    Vecd v = free_ * gaussian(free_.cols());
    return v * (norm / v.norm());
  }

  const ModelConfig& config_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  Matd free_;  // orthonormal columns spanning the distractor subspace
};

PlantedModel Builder::build() {
  const auto d = static_cast<Eigen::Index>(config_.d_model);
  const auto dh = static_cast<Eigen::Index>(config_.d_head);
  const auto n_pos = static_cast<Eigen::Index>(config_.max_seq_len);

  // Orthonormal basis of the zero-mean subspace, so layer norm's mean
  // subtraction is the identity on every constructed vector.
  Matd seed_basis(d, d);
  seed_basis.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(d)));
  seed_basis.rightCols(d - 1) = gaussian(d, d - 1);
  const Matd q = Eigen::HouseholderQR<Matd>(seed_basis).householderQ();
  const Matd basis = q.rightCols(d - 1);
  const Vecd marker = basis.col(0);
  const Vecd drift_key = basis.col(1);
  const Vecd pos_cos = basis.col(2);
  const Vecd pos_sin = basis.col(3);
  const Vecd readout = basis.col(4);
  const Vecd polarity = basis.col(5);
  const Matd mode_space = basis.middleCols(6, dh);
  free_ = basis.rightCols(d - 1 - 6 - dh);
  Matd read_space(d, free_.cols() + 2);  // what distractors may read
  read_space << free_, pos_cos, pos_sin;

  Vecd direction = gaussian(dh);
  direction.normalize();
  const Vecd mode_vec = mode_space * direction;

  // Vocabulary: specials, desired (A), deviant (B), neutral.
  const std::size_t n_special = 3 + kDriftVariants;
  const std::size_t n_side = std::clamp<std::size_t>((config_.vocab_size - n_special) / 4, 4, 12);
  std::vector<std::string> words = {"<unk>", "<pos>", "<neg>"};
  for (std::size_t i = 0; i < kDriftVariants; ++i) words.push_back("<drift" + std::to_string(i) + ">");
  VocabPartition partition;
  for (std::size_t i = 0; i < kDriftVariants; ++i) partition.drift.push_back(kFirstDriftToken + static_cast<TokenId>(i));
  for (std::size_t i = 0; i < n_side; ++i) {
    partition.desired.push_back(static_cast<TokenId>(words.size()));
    words.push_back("A" + std::to_string(i));
  }
  for (std::size_t i = 0; i < n_side; ++i) {
    partition.deviant.push_back(static_cast<TokenId>(words.size()));
    words.push_back("B" + std::to_string(i));
  }
  for (std::size_t i = 0; words.size() < config_.vocab_size; ++i) {
    partition.neutral.push_back(static_cast<TokenId>(words.size()));
    words.push_back("w" + std::to_string(i));
  }

  TransformerWeights w = TransformerWeights::zeros(config_);
  const double token_norm = std::sqrt(static_cast<double>(d));
  const double ln_scale =
      1.0 / std::sqrt((token_norm * token_norm + kPositionNorm * kPositionNorm) / static_cast<double>(d) +
                      Transformer::kLayerNormEps);

  // Positions trace a half circle so a fixed key sees a monotone score.
  const auto angle = [&](std::size_t p) {
    return std::numbers::pi * static_cast<double>(p) / static_cast<double>(config_.max_seq_len - 1);
  };
  for (Eigen::Index p = 0; p < n_pos; ++p) {
    const double phi = angle(static_cast<std::size_t>(p));
    const Vecd pe = kPositionNorm * (std::cos(phi) * pos_cos + std::sin(phi) * pos_sin);
    w.position_embedding.row(p) = pe.cast<float>().transpose();
  }

  // Token embeddings: special part plus a free-subspace fill to a fixed norm.
  const auto embed = [&](TokenId t, const Vecd& special, const Vecd& fill_dir) {
    const double fill = std::sqrt(token_norm * token_norm - special.squaredNorm());
    const Vecd e = special + fill_dir * (fill / fill_dir.norm());
    w.token_embedding.row(t) = e.cast<float>().transpose();
  };
  const Vecd mode_fill = free_vector(1.0);
  embed(kUnkToken, Vecd::Zero(d), free_vector(1.0));
  embed(kModePosToken, kModeCoef * mode_vec + kMarkerCoef * marker, mode_fill);
  embed(kModeNegToken, -kModeCoef * mode_vec + kMarkerCoef * marker, mode_fill);

  // Drift variant i overtakes position 0 at query position flip_i:
  //   score_i(p) - anchor = kDriftSharpness * (cos(phi(flip_i)) - cos(phi(p))).
  const double head_scale = std::sqrt(static_cast<double>(dh));
  PlantedModel planted{nullptr, Vocabulary({"<unk>"}), {}, HeadId{0, 0}, partition, {}};
  for (std::size_t i = 0; i < kDriftVariants; ++i) {
    const std::size_t flip = config_.max_seq_len * (5 + 1 * i) / 24;
    planted.drift_flip_positions.push_back(flip);
    const double marker_coef =
        (kAnchorScore + kDriftSharpness * std::cos(angle(flip))) * kMarkerCoef / kAnchorScore;
    const Vecd special = -kModeCoef * mode_vec + marker_coef * marker + 1.0 * drift_key;
    require(special.norm() < token_norm, "config_too_small", "drift token does not fit the embedding norm");
    embed(partition.drift[i], special, free_vector(1.0));
  }
  for (std::size_t i = 0; i < n_side; ++i) {
    const Vecd shared = free_vector(1.0);
    embed(partition.desired[i], 1.0 * polarity, shared);
    embed(partition.deviant[i], -1.0 * polarity, shared);
  }
  for (TokenId t : partition.neutral) embed(t, Vecd::Zero(d), free_vector(1.0));

  const std::size_t designated_head = seed_ % config_.n_heads;
  const Eigen::Index off = static_cast<Eigen::Index>(designated_head) * dh;
  const double noise = kNoise / std::sqrt(static_cast<double>(d));

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    LayerWeights& layer = w.layers[l];
    const Matd read_proj = read_space * read_space.transpose();
    const Matd free_proj = free_ * free_.transpose();
    layer.wq = (gaussian(d, d) * noise * read_proj).cast<float>();
    layer.wk = (gaussian(d, d) * noise * read_proj).cast<float>();
    layer.wv = (gaussian(d, d) * noise * read_proj).cast<float>();
    layer.wo = (free_proj * gaussian(d, d) * noise).cast<float>();
    const auto f = static_cast<Eigen::Index>(config_.d_ff());
    layer.w1 = (gaussian(f, d) * noise * read_proj).cast<float>();
    layer.w2 = (free_proj * gaussian(d, f) * (kNoise / std::sqrt(static_cast<double>(f)))).cast<float>();
    if (l != 0) continue;

    // Designated head: query = anchor bias on key axis 0 plus a positional
    // component on key axis 1; key axis 0 reads the marker, axis 1 the drift key.
    layer.wq.middleRows(off, dh).setZero();
    layer.wk.middleRows(off, dh).setZero();
    layer.wv.middleRows(off, dh).setZero();
    layer.wo.middleCols(off, dh).setZero();
    // Scores are q.k / sqrt(d_head); the gains below undo that scaling.
    layer.bq(off) = static_cast<float>(kAnchorScore * head_scale / kMarkerCoef);
    const double drift_gain = kDriftSharpness * head_scale;
    layer.wq.row(off + 1) = (-drift_gain / (ln_scale * kPositionNorm) * pos_cos).cast<float>().transpose();
    layer.wk.row(off) = (marker / ln_scale).cast<float>().transpose();
    layer.wk.row(off + 1) = (drift_key / ln_scale).cast<float>().transpose();
    const Matd value_map = mode_space.transpose() * (kActivation / (kModeCoef * ln_scale));
    layer.wv.middleRows(off, dh) = value_map.cast<float>();
    layer.wo.middleCols(off, dh) = (kReadout * readout * direction.transpose()).cast<float>();
  }

  const Matd jitter = gaussian(static_cast<Eigen::Index>(n_side), free_.cols()) *
                      (kTokenJitter / std::sqrt(static_cast<double>(free_.cols())));
  w.unembedding_bias.setConstant(static_cast<float>(kBlockedBias));
  for (std::size_t i = 0; i < n_side; ++i) {
    const Vecd token_part = free_ * jitter.row(static_cast<Eigen::Index>(i)).transpose();
    w.unembedding.row(partition.desired[i]) = (kUnembedGain * readout + token_part).cast<float>().transpose();
    w.unembedding.row(partition.deviant[i]) = (-kUnembedGain * readout + token_part).cast<float>().transpose();
    w.unembedding_bias(partition.desired[i]) = 0.0F;
    w.unembedding_bias(partition.deviant[i]) = static_cast<float>(kDeviantBias);
  }

  planted.model = std::make_shared<const Transformer>(config_, std::move(w));
  planted.vocab = Vocabulary(std::move(words));
  planted.mode_direction = direction.cast<float>();
  planted.mode_direction /= planted.mode_direction.norm();
  planted.designated_head = HeadId{0, designated_head};
  return planted;
}

}  // namespace

bool VocabPartition::is_desired(TokenId t) const { return contains(desired, t); }
bool VocabPartition::is_deviant(TokenId t) const { return contains(deviant, t); }

ModelConfig default_config() { return ModelConfig{}; }

PlantedModel build_planted_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  require(config.positional_encoding == PositionalEncoding::learned, "config_too_small",
          "planted model requires learned positional embeddings");
  require(config.n_heads >= 2 && config.d_head >= 8, "config_too_small",
          "planted model requires n_heads >= 2 and d_head >= 8");
  require(config.d_model >= config.d_head + 16, "config_too_small",
          "d_model too small for the planted subspaces");
  require(config.vocab_size >= 3 + kDriftVariants + 8 + 1, "config_too_small",
          "vocabulary too small for the planted partition");
  require(config.max_seq_len >= 32, "config_too_small", "max_seq_len must be >= 32");
  return Builder(config, seed).build();
}

double desired_fraction(const VocabPartition& partition, std::span<const TokenId> tokens) {
  if (tokens.empty()) return 0.0;
  const auto hits = std::count_if(tokens.begin(), tokens.end(), [&](TokenId t) { return partition.is_desired(t); });
  return static_cast<double>(hits) / static_cast<double>(tokens.size());
}

nlohmann::json ground_truth_json(const PlantedModel& planted) {
  std::vector<float> direction(planted.mode_direction.data(),
                               planted.mode_direction.data() + planted.mode_direction.size());
  return nlohmann::json{
      {"designated_head", {{"layer", planted.designated_head.layer}, {"head", planted.designated_head.head}}},
      {"mode_direction", direction},
      {"mode_pos_token", kModePosToken},
      {"mode_neg_token", kModeNegToken},
      {"desired_tokens", planted.partition.desired},
      {"deviant_tokens", planted.partition.deviant},
      {"neutral_tokens", planted.partition.neutral},
      {"drift_tokens", planted.partition.drift},
      {"drift_flip_positions", planted.drift_flip_positions}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth truth;
  try {
    truth.designated_head = HeadId{j.at("designated_head").at("layer").get<std::size_t>(),
                                   j.at("designated_head").at("head").get<std::size_t>()};
    const auto direction = j.at("mode_direction").get<std::vector<float>>();
    truth.mode_direction = Eigen::Map<const Eigen::VectorXf>(direction.data(), static_cast<Eigen::Index>(direction.size()));
    truth.partition.desired = j.at("desired_tokens").get<std::vector<TokenId>>();
    truth.partition.deviant = j.at("deviant_tokens").get<std::vector<TokenId>>();
    truth.partition.neutral = j.at("neutral_tokens").get<std::vector<TokenId>>();
    truth.partition.drift = j.at("drift_tokens").get<std::vector<TokenId>>();
  } catch (const nlohmann::json::exception& e) {
    fail("invalid_ground_truth", std::string("malformed ground truth: ") + e.what());
  }
  return truth;
}

}  // namespace fasb::synthetic
