#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "fasb/common/error.hpp"
#include "fasb/model/decoding.hpp"
#include "fasb/model/local_backend.hpp"
#include "fasb/model/math.hpp"
#include "fasb/model/tokenizer.hpp"
#include "support.hpp"

using namespace fasb;
using fasb::testing::random_model;
using fasb::testing::random_tokens;
using fasb::testing::random_vector;
using fasb::testing::small_config;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

bool bit_equal(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

bool bit_equal(const StepOutput& a, const StepOutput& b) {
  if (!bit_equal(a.logits, b.logits) || a.head_activations.size() != b.head_activations.size()) return false;
  for (const auto& [head, v] : a.head_activations) {
    const auto it = b.head_activations.find(head);
    if (it == b.head_activations.end() || !bit_equal(v, it->second)) return false;
  }
  return true;
}

std::vector<HeadId> all_heads(const ModelConfig& c) {
  std::vector<HeadId> heads;
  for (std::size_t l = 0; l < c.n_layers; ++l)
    for (std::size_t h = 0; h < c.n_heads; ++h) heads.push_back({l, h});
  return heads;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fasb_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  c.d_head = 7;
  CHECK(error_code([&] { c.validate(); }) == "invalid_config");
  c = small_config();
  c.max_seq_len = 1;
  CHECK(error_code([&] { c.validate(); }) == "invalid_config");
  c = small_config();
  c.n_layers = 0;
  CHECK(error_code([&] { c.validate(); }) == "invalid_config");
}

TEST_CASE("config fingerprint and json round trip") {
  const ModelConfig a = small_config();
  ModelConfig b = a;
  CHECK(a.fingerprint() == b.fingerprint());
  b.max_seq_len += 1;
  CHECK(a.fingerprint() != b.fingerprint());
  const nlohmann::json j = a;
  CHECK(j.get<ModelConfig>() == a);
}

TEST_CASE("head ids order lexicographically") {
  CHECK(HeadId{0, 3} < HeadId{1, 0});
  CHECK(HeadId{1, 0} < HeadId{1, 1});
  CHECK_FALSE(HeadId{1, 1} < HeadId{1, 1});
}

TEST_CASE("steering spec rejects duplicates and negative strength") {
  SteeringSpec spec;
  CHECK(spec.empty());
  spec.add({0, 1}, Eigen::VectorXf::Ones(8), 1.0F);
  CHECK(error_code([&] { spec.add({0, 1}, Eigen::VectorXf::Ones(8), 2.0F); }) == "duplicate_head");
  CHECK(error_code([&] { spec.add({0, 2}, Eigen::VectorXf::Ones(8), -1.0F); }) == "invalid_steering");
  const auto scaled = spec.with_strength(3.0F);
  CHECK(scaled.entries().front().strength == 3.0F);
}

TEST_CASE("math kernels") {
  Eigen::VectorXf v(3);
  v << 0.1F, 2.0F, 0.5F;
  const Eigen::VectorXf p = math::softmax(v);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(math::log_softmax_at(v, 1) == doctest::Approx(std::log(p(1))).epsilon(1e-6));
  CHECK(math::sigmoid(0.0) == 0.5);
  CHECK(math::gelu(0.0F) == 0.0F);
  CHECK(math::gelu(3.0F) == doctest::Approx(2.99636).epsilon(1e-4));

  Eigen::VectorXf x(4);
  x << 1.0F, 2.0F, 3.0F, 4.0F;
  const Eigen::VectorXf y = math::layer_norm(x, Eigen::VectorXf::Ones(4), Eigen::VectorXf::Zero(4), 1e-5F);
  CHECK(y.sum() == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(y.squaredNorm() / 4.0 == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("forward pass matches a double precision reference") {
  for (auto pe : {PositionalEncoding::learned, PositionalEncoding::sinusoidal}) {
    const auto model = random_model(small_config(pe), 3);
    std::mt19937_64 rng(17);
    const auto tokens = random_tokens(rng, 20, model->config().vocab_size);
    const auto ref = testing::reference_forward(*model, tokens);
    KvCache cache(model->config());
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      const auto out = model->forward(cache, tokens[p], {}, {});
      const double err = (out.logits.cast<double>() - ref.logits[p]).cwiseAbs().maxCoeff();
      CHECK(err < 1e-4 * (1.0 + ref.logits[p].cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("prime caches the prompt") {
  LocalBackend backend(random_model(small_config(), 1));
  const std::vector<TokenId> prompt{1, 2, 3, 4, 5};
  const auto session = backend.prime(prompt, std::vector<HeadId>{{0, 1}, {1, 2}});
  CHECK(session->committed_len() == 5);
  CHECK(session->generated() == 0);
  CHECK(session->last().logits.size() == 40);
  CHECK(session->last().head_activations.size() == 2);
  CHECK(session->last().head_activations.count({1, 2}) == 1);
}

TEST_CASE("prime rejects bad prompts") {
  LocalBackend backend(random_model(small_config(), 1));
  CHECK(error_code([&] { backend.prime({}, {}); }) == "empty_prompt");
  const std::vector<TokenId> full(backend.config().max_seq_len, 1);
  CHECK(error_code([&] { backend.prime(full, {}); }) == "prompt_too_long");
  const std::vector<TokenId> bad{1, 99};
  CHECK(error_code([&] { backend.prime(bad, {}); }) == "invalid_token");
  const std::vector<TokenId> ok{1};
  CHECK(error_code([&] { backend.prime(ok, std::vector<HeadId>{{5, 0}}); }) == "invalid_head");
}

TEST_CASE("step errors") {
  LocalBackend backend(random_model(small_config(), 1));
  std::vector<TokenId> prompt(backend.config().max_seq_len - 1, 2);
  auto session = backend.prime(prompt, {});
  session->step(3, {});
  CHECK(error_code([&] { session->step(3, {}); }) == "sequence_overflow");

  auto fresh = backend.prime(std::vector<TokenId>{1, 2}, {});
  SteeringSpec wrong;
  wrong.add({0, 0}, Eigen::VectorXf::Ones(5), 1.0F);
  CHECK(error_code([&] { fresh->step(3, wrong); }) == "invalid_steering");
}

TEST_CASE("empty and zero-strength steering are the identity") {
  const auto model = random_model(small_config(), 2);
  LocalBackend backend(model);
  std::mt19937_64 rng(5);
  const auto heads = all_heads(model->config());
  for (int trial = 0; trial < 10; ++trial) {
    const auto prompt = random_tokens(rng, 6, 40);
    auto a = backend.prime(prompt, heads);
    auto b = backend.prime(prompt, heads);
    auto c = backend.prime(prompt, heads);
    SteeringSpec zero;
    zero.add(heads[trial % heads.size()], random_vector(rng, 8), 0.0F);
    const TokenId t = static_cast<TokenId>(trial);
    CHECK(bit_equal(a->step(t, {}), b->step(t, SteeringSpec{})));
    CHECK(bit_equal(a->last(), c->step(t, zero)));
  }
}

TEST_CASE("steered minus unsteered attention output is the routed steering vector") {
  const auto model = random_model(small_config(), 4);
  const ModelConfig& cfg = model->config();
  std::mt19937_64 rng(23);
  const double u = std::numeric_limits<float>::epsilon() / 2.0;
  for (int trial = 0; trial < 50; ++trial) {
    const HeadId head{rng() % cfg.n_layers, rng() % cfg.n_heads};
    const Eigen::VectorXf dir = random_vector(rng, cfg.d_head);
    const float r = std::uniform_real_distribution<float>(0.0F, 20.0F)(rng);
    SteeringSpec spec;
    spec.add(head, dir, r);
    const auto tokens = random_tokens(rng, 7, cfg.vocab_size);

    std::vector<LayerTrace> plain, steered;
    {
      KvCache cache(cfg);
      for (std::size_t i = 0; i + 1 < tokens.size(); ++i) model->forward(cache, tokens[i], {}, {});
      KvCache copy = cache;
      model->forward(cache, tokens.back(), {}, {}, &plain);
      model->forward(copy, tokens.back(), spec, {}, &steered);
    }
    for (std::size_t l = 0; l < head.layer; ++l) {
      CHECK(bit_equal(plain[l].pre_output_projection, steered[l].pre_output_projection));
      CHECK(bit_equal(plain[l].attention_output, steered[l].attention_output));
    }
    const auto& wo = model->weights().layers[head.layer].wo;
    const auto& bo = model->weights().layers[head.layer].bo;
    const Eigen::Index off = static_cast<Eigen::Index>(head.head * cfg.d_head);
    const Eigen::Index dh = static_cast<Eigen::Index>(cfg.d_head);
    const Eigen::VectorXd expected =
        wo.middleCols(off, dh).cast<double>() * (static_cast<double>(r) * dir.cast<double>());
    const Eigen::VectorXd delta =
        steered[head.layer].attention_output.cast<double>() - plain[head.layer].attention_output.cast<double>();
    const Eigen::VectorXd h1 = steered[head.layer].pre_output_projection.cast<double>();
    const Eigen::VectorXd h0 = plain[head.layer].pre_output_projection.cast<double>();
    const double n = static_cast<double>(cfg.d_model);
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      // Float rounding of both W_O products, the bias add and the slice add.
      const double mag0 = wo.row(i).cast<double>().cwiseAbs().dot(h0.cwiseAbs()) + std::abs(bo(i));
      const double mag1 = wo.row(i).cast<double>().cwiseAbs().dot(h1.cwiseAbs()) + std::abs(bo(i));
      const double slice = wo.row(i).segment(off, dh).cast<double>().cwiseAbs().dot(
          (static_cast<double>(r) * dir.cast<double>()).cwiseAbs());
      const double bound = (n + 2.0) * u * (mag0 + mag1) + 2.0 * u * slice + 1e-30;
      CHECK(std::abs(delta(i) - expected(i)) <= bound);
    }
  }
}

TEST_CASE("steering is local to the steered head slice") {
  const auto model = random_model(small_config(), 6);
  const ModelConfig& cfg = model->config();
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const HeadId head{rng() % cfg.n_layers, rng() % cfg.n_heads};
    SteeringSpec spec;
    spec.add(head, random_vector(rng, cfg.d_head), 5.0F);
    const auto tokens = random_tokens(rng, 5, cfg.vocab_size);
    KvCache a(cfg), b(cfg);
    std::vector<LayerTrace> ta, tb;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      model->forward(a, tokens[i], {}, {});
      model->forward(b, tokens[i], {}, {});
    }
    model->forward(a, tokens.back(), {}, {}, &ta);
    model->forward(b, tokens.back(), spec, {}, &tb);
    const Eigen::Index dh = static_cast<Eigen::Index>(cfg.d_head);
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      const bool same = bit_equal(ta[head.layer].pre_output_projection.segment(h * dh, dh).eval(),
                                  tb[head.layer].pre_output_projection.segment(h * dh, dh).eval());
      CHECK(same == (h != head.head));
    }
  }
}

TEST_CASE("steering adds linearly at the steered slice") {
  const auto model = random_model(small_config(), 8);
  const ModelConfig& cfg = model->config();
  std::mt19937_64 rng(77);
  const HeadId head{1, 2};
  const Eigen::Index off = 2 * static_cast<Eigen::Index>(cfg.d_head);
  const Eigen::Index dh = static_cast<Eigen::Index>(cfg.d_head);
  const double u = std::numeric_limits<float>::epsilon() / 2.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXf dir = random_vector(rng, cfg.d_head);
    const float r1 = 1.5F + static_cast<float>(trial), r2 = 0.75F;
    const auto tokens = random_tokens(rng, 4, cfg.vocab_size);
    const auto slice = [&](float r) {
      SteeringSpec spec;
      spec.add(head, dir, r);
      KvCache cache(cfg);
      std::vector<LayerTrace> t;
      for (std::size_t i = 0; i + 1 < tokens.size(); ++i) model->forward(cache, tokens[i], {}, {});
      model->forward(cache, tokens.back(), spec, {}, &t);
      return Eigen::VectorXd(t[1].pre_output_projection.segment(off, dh).cast<double>());
    };
    const Eigen::VectorXd base = slice(0.0F);
    const Eigen::VectorXd d1 = slice(r1) - base, d2 = slice(r2) - base, d12 = slice(r1 + r2) - base;
    for (Eigen::Index i = 0; i < dh; ++i) {
      const double mag = std::abs(base(i)) + (r1 + r2) * std::abs(dir(i));
      CHECK(std::abs(d12(i) - (d1(i) + d2(i))) <= 8.0 * u * mag);
      CHECK(d12(i) == doctest::Approx((r1 + r2) * dir(i)).epsilon(1e-5).scale(mag));
    }
  }
}

TEST_CASE("tapped activations are the post-steering values fed to the output projection") {
  const auto model = random_model(small_config(), 9);
  LocalBackend backend(model);
  const auto heads = all_heads(model->config());
  SteeringSpec spec;
  spec.add({0, 1}, Eigen::VectorXf::Constant(8, 0.5F), 3.0F);
  auto session = backend.prime(std::vector<TokenId>{3, 4, 5}, heads);
  const auto& out = session->step(6, spec);

  KvCache cache(model->config());
  for (TokenId t : {3, 4, 5}) model->forward(cache, t, {}, {});
  std::vector<LayerTrace> trace;
  model->forward(cache, 6, spec, {}, &trace);
  for (const auto& h : heads)
    CHECK(bit_equal(out.head_activations.at(h), trace[h.layer].pre_output_projection.segment(h.head * 8, 8).eval()));
}

TEST_CASE("rollback bookkeeping") {
  LocalBackend backend(random_model(small_config(), 10));
  const std::vector<TokenId> prompt{1, 2, 3};
  auto session = backend.prime(prompt, {});
  for (TokenId t = 0; t < 17; ++t) session->step(t, {});
  CHECK(session->generated() == 17);
  session->rollback(17);
  CHECK(session->generated() == 17);
  session->rollback(7);
  CHECK(session->committed_len() == prompt.size() + 7);
  CHECK(session->generated() == 7);
  CHECK(error_code([&] { session->rollback(8); }) == "invalid_rollback");
  session->rollback(0);
  CHECK(session->committed_len() == prompt.size());
  CHECK(session->tokens().size() == prompt.size());
}

TEST_CASE("rollback then re-step is bit-identical to a fresh prime") {
  const auto model = random_model(small_config(), 12);
  LocalBackend backend(model);
  const auto heads = all_heads(model->config());
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t plen = 1 + rng() % 10;
    const std::size_t gen = 1 + rng() % 20;
    const std::size_t keep = rng() % (gen + 1);
    const auto prompt = random_tokens(rng, plen, 40);
    const auto first = random_tokens(rng, gen, 40);
    const auto second = random_tokens(rng, gen - keep, 40);

    auto session = backend.prime(prompt, heads);
    for (TokenId t : first) session->step(t, {});
    session->rollback(keep);
    std::vector<TokenId> full = prompt;
    full.insert(full.end(), first.begin(), first.begin() + static_cast<std::ptrdiff_t>(keep));
    auto fresh = backend.prime(full, heads);
    CHECK(bit_equal(session->last(), fresh->last()));
    for (TokenId t : second) CHECK(bit_equal(session->step(t, {}), fresh->step(t, {})));
  }
}

TEST_CASE("restep_last re-runs the last position under new steering") {
  const auto model = random_model(small_config(), 13);
  LocalBackend backend(model);
  const std::vector<HeadId> taps{{0, 0}};
  SteeringSpec spec;
  spec.add({0, 0}, Eigen::VectorXf::Ones(8), 2.0F);
  auto session = backend.prime(std::vector<TokenId>{4, 5}, taps);
  session->step(6, {});
  session->restep_last(spec);
  CHECK(session->committed_len() == 3);

  auto reference = backend.prime(std::vector<TokenId>{4, 5}, taps);
  reference->step(6, spec);
  CHECK(bit_equal(session->last(), reference->last()));
  CHECK(bit_equal(session->step(7, spec), reference->step(7, spec)));
}

TEST_CASE("kv cache truncate bounds") {
  const ModelConfig c = small_config();
  KvCache cache(c);
  CHECK(error_code([&] { cache.truncate(1); }) == "invalid_rollback");
  CHECK_NOTHROW(cache.truncate(0));
}

TEST_CASE("greedy decoding") {
  Eigen::VectorXf a(3);
  a << 0.1F, 2.0F, 0.5F;
  CHECK(greedy_token(a) == 1);
  Eigen::VectorXf b(2);
  b << 1.0F, 1.0F;
  CHECK(greedy_token(b) == 0);
  TokenDecoder greedy(DecodingPolicy{});
  CHECK(greedy.next(a) == 1);
}

TEST_CASE("seeded sampling is reproducible and follows the softmax") {
  Eigen::VectorXf logits(4);
  logits << 0.0F, 1.0F, 2.0F, -1.0F;
  DecodingPolicy p;
  p.kind = DecodingPolicy::Kind::sample;
  p.seed = 1234;
  p.temperature = 1.0;
  TokenDecoder a(p), b(p);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 20000; ++i) {
    const TokenId x = a.next(logits);
    CHECK(x == b.next(logits));
    ++counts[x];
  }
  const Eigen::VectorXf probs = math::softmax(logits);
  for (int i = 0; i < 4; ++i) CHECK(counts[i] / 20000.0 == doctest::Approx(probs(i)).epsilon(0.05).scale(1.0));
}

TEST_CASE("model directory round trip") {
  const auto model = random_model(small_config(PositionalEncoding::sinusoidal), 14);
  const auto dir = temp_dir("model");
  save_model(*model, dir.string());
  const auto loaded = load_model(dir.string());
  CHECK(loaded->config() == model->config());
  KvCache a(model->config()), b(model->config());
  for (TokenId t : {1, 2, 3}) CHECK(bit_equal(model->forward(a, t, {}, {}).logits, loaded->forward(b, t, {}, {}).logits));

  std::filesystem::resize_file(dir / "weights.bin", 100);
  CHECK(error_code([&] { load_model(dir.string()); }) == "invalid_weights");
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocabulary") {
  const Vocabulary vocab({"<unk>", "hello", "world"});
  CHECK(vocab.encode("hello  world zzz") == std::vector<TokenId>{1, 2, 0});
  const std::vector<TokenId> ids{2, 1};
  CHECK(vocab.decode(ids) == "world hello");
  const auto dir = temp_dir("vocab");
  vocab.save((dir / "vocab.txt").string());
  const auto loaded = Vocabulary::load((dir / "vocab.txt").string());
  CHECK(loaded.size() == 3);
  CHECK(loaded.id("world") == 2);
  CHECK(error_code([] { Vocabulary({"a", "b"}); }) == "invalid_vocab");
  std::filesystem::remove_all(dir);
}
