#include "support.hpp"

#include <cmath>

namespace fasb::testing {

ModelConfig small_config(PositionalEncoding pe) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 4;
  c.d_model = 32;
  c.d_head = 8;
  c.vocab_size = 40;
  c.max_seq_len = 48;
  c.positional_encoding = pe;
  return c;
}

namespace {

void fill(RowMatrixXf& m, std::mt19937_64& rng, float scale) {
  std::normal_distribution<float> g(0.0F, scale);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = g(rng);
}

void fill(Eigen::VectorXf& v, std::mt19937_64& rng, float scale, float offset = 0.0F) {
  std::normal_distribution<float> g(0.0F, scale);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = offset + g(rng);
}

}  // namespace

std::shared_ptr<const Transformer> random_model(const ModelConfig& config, std::uint64_t seed, float scale) {
  std::mt19937_64 rng(seed);
  auto w = TransformerWeights::zeros(config);
  fill(w.token_embedding, rng, 1.0F);
  if (w.position_embedding.size() > 0) fill(w.position_embedding, rng, 0.5F);
  for (auto& l : w.layers) {
    fill(l.ln1_gain, rng, 0.1F, 1.0F);
    fill(l.ln1_bias, rng, 0.1F);
    fill(l.wq, rng, scale);
    fill(l.wk, rng, scale);
    fill(l.wv, rng, scale);
    fill(l.wo, rng, scale);
    fill(l.bq, rng, 0.1F);
    fill(l.bk, rng, 0.1F);
    fill(l.bv, rng, 0.1F);
    fill(l.bo, rng, 0.1F);
    fill(l.ln2_gain, rng, 0.1F, 1.0F);
    fill(l.ln2_bias, rng, 0.1F);
    fill(l.w1, rng, scale);
    fill(l.w2, rng, scale);
    fill(l.b1, rng, 0.1F);
    fill(l.b2, rng, 0.1F);
  }
  fill(w.lnf_gain, rng, 0.1F, 1.0F);
  fill(w.lnf_bias, rng, 0.1F);
  fill(w.unembedding, rng, scale);
  fill(w.unembedding_bias, rng, 0.1F);
  return std::make_shared<const Transformer>(config, std::move(w));
}

std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab_size) {
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab_size) - 1);
  std::vector<TokenId> out(n);
  for (auto& t : out) t = pick(rng);
  return out;
}

Eigen::VectorXf random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> g(0.0F, 1.0F);
  Eigen::VectorXf v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = g(rng);
  return v;
}

namespace {

using Vec = Eigen::VectorXd;

Vec ln(const Vec& x, const Eigen::VectorXf& gain, const Eigen::VectorXf& bias) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return ((x.array() - mean) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(gain.cast<double>()) +
         bias.cast<double>();
}

Vec affine(const RowMatrixXf& w, const Eigen::VectorXf& b, const Vec& x) {
  return w.cast<double>() * x + b.cast<double>();
}

double gelu(double x) {
  const double c = std::sqrt(2.0 / M_PI);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

Vec position(const ModelConfig& c, const TransformerWeights& w, std::size_t p) {
  if (c.positional_encoding == PositionalEncoding::learned) return w.position_embedding.row(p).transpose().cast<double>();
  Vec pe(static_cast<Eigen::Index>(c.d_model));
  for (std::size_t i = 0; i < c.d_model; ++i) {
    const double angle = static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i - i % 2) / c.d_model);
    pe(i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
  }
  return pe;
}

}  // namespace

ReferencePass reference_forward(const Transformer& model, const std::vector<TokenId>& tokens,
                                const SteeringSpec& steering_last) {
  const ModelConfig& c = model.config();
  const TransformerWeights& w = model.weights();
  const std::size_t n = tokens.size();
  const auto dh = static_cast<Eigen::Index>(c.d_head);

  std::vector<Vec> x(n);
  for (std::size_t p = 0; p < n; ++p) x[p] = w.token_embedding.row(tokens[p]).transpose().cast<double>() + position(c, w, p);

  ReferencePass out;
  out.heads_out.assign(n, {});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    std::vector<Vec> q(n), k(n), v(n);
    for (std::size_t p = 0; p < n; ++p) {
      const Vec a = ln(x[p], lw.ln1_gain, lw.ln1_bias);
      q[p] = affine(lw.wq, lw.bq, a);
      k[p] = affine(lw.wk, lw.bk, a);
      v[p] = affine(lw.wv, lw.bv, a);
    }
    for (std::size_t p = 0; p < n; ++p) {
      Vec heads = Vec::Zero(static_cast<Eigen::Index>(c.d_model));
      for (std::size_t h = 0; h < c.n_heads; ++h) {
        const Eigen::Index o = static_cast<Eigen::Index>(h) * dh;
        std::vector<double> s(p + 1);
        double top = -INFINITY;
        for (std::size_t t = 0; t <= p; ++t) {
          s[t] = q[p].segment(o, dh).dot(k[t].segment(o, dh)) / std::sqrt(static_cast<double>(c.d_head));
          top = std::max(top, s[t]);
        }
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - top));
        for (std::size_t t = 0; t <= p; ++t) heads.segment(o, dh) += (s[t] / z) * v[t].segment(o, dh);
      }
      if (p + 1 == n)
        for (const auto& e : steering_last.entries())
          if (e.head.layer == l)
            heads.segment(static_cast<Eigen::Index>(e.head.head) * dh, dh) +=
                static_cast<double>(e.strength) * e.direction.cast<double>();
      out.heads_out[p].push_back(heads);
      x[p] += affine(lw.wo, lw.bo, heads);
      Vec hidden = affine(lw.w1, lw.b1, ln(x[p], lw.ln2_gain, lw.ln2_bias));
      for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden(i) = gelu(hidden(i));
      x[p] += affine(lw.w2, lw.b2, hidden);
    }
  }
  for (std::size_t p = 0; p < n; ++p)
    out.logits.push_back(affine(w.unembedding, w.unembedding_bias, ln(x[p], w.lnf_gain, w.lnf_bias)));
  return out;
}

const PlantedFixture& planted_fixture() {
  static const PlantedFixture fixture = [] {
    PlantedFixture f{synthetic::build_planted_model(synthetic::default_config(), kPlantedSeed)};
    f.backend = std::make_shared<LocalBackend>(f.planted.model);
    f.dataset = synthetic::generate_behavior_dataset(f.planted, 200, kDatasetSeed);
    std::vector<anchoring::LabeledTokens> records;
    for (const auto* split : {&f.dataset.train, &f.dataset.validation})
      for (const auto& r : *split) {
        anchoring::LabeledTokens t{r.prompt, r.label};
        t.tokens.insert(t.tokens.end(), r.answer.begin(), r.answer.end());
        records.push_back(std::move(t));
      }
    f.activations = anchoring::extract_activations(*f.backend, records);
    const auto fingerprint = f.planted.model->config().fingerprint();
    anchoring::AnchorOptions probe;
    probe.method = anchoring::Method::probe;
    probe.k = 1;
    f.probe = anchoring::anchor(f.activations, probe, fingerprint);
    anchoring::AnchorOptions proto;
    proto.method = anchoring::Method::prototype;
    proto.k = 1;
    proto.hyper = anchoring::default_hyperparams(anchoring::Method::prototype);
    f.prototype = anchoring::anchor(f.activations, proto, fingerprint);
    f.drift_prompts = synthetic::make_drift_prompts(f.planted, 100, kDriftSeed);
    return f;
  }();
  return fixture;
}

}  // namespace fasb::testing
