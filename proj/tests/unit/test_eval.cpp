#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "fasb/common/error.hpp"
#include "fasb/eval/eval.hpp"
#include "fasb/model/math.hpp"
#include "mc_oracle.hpp"
#include "support.hpp"

using namespace fasb;
using namespace fasb::eval;
using controller::Controller;
using controller::ControllerConfig;
using controller::Mode;

namespace {

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

ScoredItem scored(std::vector<double> scores, std::set<std::size_t> correct, std::optional<std::size_t> best) {
  return ScoredItem{std::move(scores), std::move(correct), best};
}

bool same(const McMetrics& a, const McMetrics& b) { return a.mc1 == b.mc1 && a.mc2 == b.mc2 && a.mc3 == b.mc3; }

// Logits that ignore context, so per-token likelihoods depend on the token only.
class ContextFreeBackend final : public Backend {
 public:
  ContextFreeBackend() : config_(testing::small_config()) {
    std::mt19937_64 rng(4);
    logits_ = testing::random_vector(rng, config_.vocab_size);
  }
  const ModelConfig& config() const override { return config_; }
  std::unique_ptr<GenerationSession> prime(std::span<const TokenId> prompt, std::span<const HeadId> taps) override {
    return std::make_unique<Session>(*this, prompt, taps);
  }

 private:
  class Session final : public GenerationSession {
   public:
    Session(const ContextFreeBackend& owner, std::span<const TokenId> prompt, std::span<const HeadId> taps)
        : owner_(owner), taps_(taps.begin(), taps.end()) {
      init(prompt, out());
    }

   protected:
    StepOutput forward(TokenId, const SteeringSpec&) override { return out(); }
    void truncate_positions(std::size_t) override {}

   private:
    StepOutput out() const {
      StepOutput o;
      o.logits = owner_.logits_;
      for (const auto& h : taps_) o.head_activations[h] = Eigen::VectorXf::Zero(owner_.config_.d_head);
      return o;
    }
    const ContextFreeBackend& owner_;
    std::vector<HeadId> taps_;
  };

  ModelConfig config_;
  Eigen::VectorXf logits_;
};

anchoring::SteeringBundle bundle_for(const ModelConfig& config) {
  anchoring::ProbeClassifier c;
  c.head = {0, 0};
  c.theta = Eigen::VectorXf::Ones(static_cast<Eigen::Index>(config.d_head));
  c.validation_accuracy = 1.0;
  anchoring::SteeringBundle b;
  b.heads.push_back(c);
  b.model_fingerprint = config.fingerprint();
  return b;
}

ControllerConfig none_config() {
  ControllerConfig c;
  c.mode = Mode::none;
  return c;
}

SyntheticTask small_synthetic_task(std::size_t n_prompts = 4) {
  const auto& f = testing::planted_fixture();
  SyntheticTask task;
  task.prompts.assign(f.drift_prompts.begin(), f.drift_prompts.begin() + static_cast<std::ptrdiff_t>(n_prompts));
  task.partition = f.planted.partition;
  task.max_tokens = 30;
  return task;
}

std::string csv(const EvalReport& report) {
  std::ostringstream out;
  report.write_csv(out);
  return out.str();
}

}  // namespace

TEST_CASE("mc metric examples") {
  const std::vector<ScoredItem> dominance{scored({0.9, 0.1}, {0}, 0)};
  CHECK(mc_metrics(dominance).mc1 == 1.0);
  const std::vector<ScoredItem> symmetric{scored({-1.0, -1.0}, {1}, 1)};
  CHECK(mc_metrics(symmetric).mc2 == 0.5);
  CHECK(mc_metrics(symmetric).mc1 == 0.0);
  const std::vector<ScoredItem> partial{scored({2.0, -1.0, 0.0}, {0, 1}, 0)};
  CHECK(mc_metrics(partial).mc3 == 0.5);
  const std::vector<ScoredItem> no_best{scored({0.9, 0.1}, {0}, std::nullopt)};
  CHECK(error_code([&] { mc_metrics(no_best); }) == "missing_best_index");
  CHECK(error_code([] { mc_metrics({}); }) == "invalid_argument");
}

TEST_CASE("mc metrics match a pairwise brute force") {
  std::mt19937_64 rng(8);
  for (int set = 0; set < 50; ++set) {
    const auto items = testing::random_scored_items(rng, 1 + rng() % 20);
    CHECK(same(mc_metrics(items), testing::brute_force_mc(items)));
  }
}

TEST_CASE("mc metric invariances") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto items = testing::random_scored_items(rng, 10);
    const auto base = mc_metrics(items);
    // Strictly increasing maps keep ranks.
    const double a = std::exp(u(rng)), b = u(rng);
    const std::vector<std::function<double(double)>> monotone{
        [&](double x) { return a * x + b; }, [](double x) { return std::exp(x); },
        [](double x) { return x * x * x; }, [](double x) { return std::atan(x); }};
    for (const auto& fn : monotone) {
      auto t = items;
      for (auto& item : t)
        for (auto& s : item.scores) s = fn(s);
      const auto m = mc_metrics(t);
      CHECK(m.mc1 == base.mc1);
      CHECK(m.mc3 == base.mc3);
    }
    // MC2 depends only on score differences within an item.
    auto shifted = items;
    for (auto& item : shifted) {
      const double shift = u(rng) * 10.0;
      for (auto& s : item.scores) s += shift;
    }
    CHECK(mc_metrics(shifted).mc2 == doctest::Approx(base.mc2).epsilon(1e-12));
  }
  // Scaling is monotone but changes MC2.
  const std::vector<ScoredItem> one{scored({0.0, -1.0}, {0}, 0)};
  const std::vector<ScoredItem> scaled{scored({0.0, -3.0}, {0}, 0)};
  CHECK(mc_metrics(one).mc2 != mc_metrics(scaled).mc2);
}

TEST_CASE("none-mode score equals teacher-forced log-likelihood") {
  const auto& f = testing::planted_fixture();
  LocalBackend& backend = *f.backend;
  const Controller controller(f.probe.bundle, none_config());
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto q = testing::random_tokens(rng, 1 + rng() % 10, backend.config().vocab_size);
    const auto c = testing::random_tokens(rng, 1 + rng() % 20, backend.config().vocab_size);
    auto session = backend.prime(q, {});
    double total = 0.0;
    for (TokenId t : c) {
      total += math::log_softmax_at(session->last().logits, t);
      session->step(t, {});
    }
    const double direct = total / static_cast<double>(c.size());
    CHECK(std::abs(score_choice(backend, controller, q, c).score - direct) <= 1e-6);

    // Independent double-precision evaluation agrees to float accuracy.
    std::vector<TokenId> all = q;
    all.insert(all.end(), c.begin(), c.end());
    const auto ref = testing::reference_forward(*f.planted.model, all);
    double ref_total = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Eigen::VectorXd& z = ref.logits[q.size() - 1 + i];
      const double m = z.maxCoeff();
      ref_total += z(c[i]) - m - std::log((z.array() - m).exp().sum());
    }
    CHECK(std::abs(score_choice(backend, controller, q, c).score - ref_total / static_cast<double>(c.size())) <= 1e-4);
  }
}

TEST_CASE("scores are length normalized") {
  ContextFreeBackend backend;
  const Controller controller(bundle_for(backend.config()), none_config());
  const std::vector<TokenId> q{1, 2};
  const std::vector<TokenId> c{5, 9, 11}, doubled{5, 9, 11, 5, 9, 11};
  CHECK(score_choice(backend, controller, q, doubled).score ==
        doctest::Approx(score_choice(backend, controller, q, c).score).epsilon(1e-12));
}

TEST_CASE("greedy continuation scores highest among single-token choices") {
  const auto& f = testing::planted_fixture();
  const Controller controller(f.probe.bundle, none_config());
  for (const auto& prompt : {f.drift_prompts[0], f.drift_prompts[1], std::vector<TokenId>{synthetic::kModeNegToken, 10}}) {
    const TokenId greedy = synthetic::greedy_rollout(f.planted, prompt, 1).front();
    const std::vector<TokenId> g{greedy};
    const double best = score_choice(*f.backend, controller, prompt, g).score;
    for (TokenId t = 0; t < static_cast<TokenId>(f.backend->config().vocab_size); ++t) {
      const std::vector<TokenId> other{t};
      CHECK(score_choice(*f.backend, controller, prompt, other).score <= best);
    }
  }
}

TEST_CASE("desired choice outscores deviant choice after a positive prompt") {
  const auto& f = testing::planted_fixture();
  const Controller controller(f.probe.bundle, none_config());
  const auto& part = f.planted.partition;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::vector<TokenId> q{synthetic::kModePosToken, part.neutral[i]};
    const std::vector<TokenId> a{part.desired[i % part.desired.size()], part.desired[(i + 1) % part.desired.size()]};
    const std::vector<TokenId> b{part.deviant[i % part.deviant.size()], part.deviant[(i + 1) % part.deviant.size()]};
    CHECK(score_choice(*f.backend, controller, q, a).score > score_choice(*f.backend, controller, q, b).score);
  }
}

TEST_CASE("score_choice preconditions") {
  const auto& f = testing::planted_fixture();
  const Controller controller(f.probe.bundle, none_config());
  const std::vector<TokenId> q(60, 5), c(40, 6), empty;
  CHECK(error_code([&] { score_choice(*f.backend, controller, q, c); }) == "sequence_overflow");
  CHECK(error_code([&] { score_choice(*f.backend, controller, std::vector<TokenId>{1}, empty); }) == "empty_choice");
}

TEST_CASE("text scoring goes through the vocabulary") {
  const auto& f = testing::planted_fixture();
  const auto& v = f.planted.vocab;
  const std::string q = v.decode(std::vector<TokenId>{synthetic::kModePosToken, f.planted.partition.neutral[0]});
  const std::string c = v.decode(std::vector<TokenId>{f.planted.partition.desired[0]});
  const Controller controller(f.probe.bundle, none_config());
  CHECK(score_choice(*f.backend, f.probe.bundle, none_config(), v, q, c) ==
        score_choice(*f.backend, controller, v.encode(q), v.encode(c)).score);
}

TEST_CASE("trigger histogram buckets") {
  const auto trace_at = [](std::optional<std::size_t> j) {
    controller::DeviationTrace t;
    if (j) t.trigger = controller::Trigger{*j, 0.9, 1.0, 1};
    return t;
  };
  const std::vector<controller::DeviationTrace> traces{trace_at(5),  trace_at(0),  trace_at(9),  trace_at(10),
                                                       trace_at(19), trace_at(20), trace_at(49), trace_at(std::nullopt)};
  const auto h = trigger_position_histogram(traces);
  CHECK(h.counts == std::array<std::size_t, 3>{3, 2, 2});
  CHECK(h.total() == 7);
  CHECK(*mean_trigger_position(traces) == doctest::Approx(112.0 / 7.0));
  const std::vector<controller::DeviationTrace> none{trace_at(std::nullopt), trace_at(std::nullopt)};
  CHECK(trigger_position_histogram(none).total() == 0);
  CHECK_FALSE(mean_trigger_position(none).has_value());
}

TEST_CASE("sweep grid sizes and ordering") {
  const auto& f = testing::planted_fixture();
  const Task task = small_synthetic_task(2);
  SweepGrid alphas;
  alphas.alpha = {40, 50, 60, 70, 80};
  const auto a = sweep(*f.backend, f.probe.bundle, alphas, task);
  REQUIRE(a.rows.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.rows[i].alpha == 40.0 + 10.0 * static_cast<double>(i));
    CHECK(a.rows[i].beta == f.probe.bundle.hyper.beta);
    CHECK(a.rows[i].mode == Mode::fasb);
  }

  SweepGrid betas;
  betas.beta = {0.3, 0.4, 0.5, 0.6};
  CHECK(sweep(*f.backend, f.probe.bundle, betas, task).rows.size() == 4);

  SweepGrid mixed;
  mixed.modes = {Mode::none, Mode::fasb};
  mixed.s = {5, 10};
  mixed.beta = {0.3, 0.6};
  const auto m = sweep(*f.backend, f.probe.bundle, mixed, task);
  REQUIRE(m.rows.size() == 8);
  CHECK(m.rows[0].mode == Mode::none);
  CHECK(m.rows[1].s == 10);
  CHECK(m.rows[2].beta == 0.6);
  CHECK(m.rows[4].mode == Mode::fasb);

  CHECK(error_code([&] { sweep(*f.backend, f.probe.bundle, SweepGrid{}, task); }) == "empty_grid");
}

TEST_CASE("sweep output is byte identical across runs") {
  const auto& f = testing::planted_fixture();
  SweepGrid grid;
  grid.modes = {Mode::none, Mode::fasb, Mode::gcbb};
  grid.beta = {0.3, 0.6};
  const Task task = small_synthetic_task(3);
  const auto first = csv(sweep(*f.backend, f.probe.bundle, grid, task));
  CHECK(first == csv(sweep(*f.backend, f.probe.bundle, grid, task)));
  CHECK(first.find("# ") == 0);
  CHECK(first.find("mode,alpha,beta,s,k,status,desired_rate,mc1,mc2,mc3") != std::string::npos);
}

TEST_CASE("failing points are marked and the sweep continues") {
  const auto& f = testing::planted_fixture();
  SweepGrid grid;
  grid.k = {1, 5, 1};
  const auto report = sweep(*f.backend, f.probe.bundle, grid, small_synthetic_task(2));
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].ok);
  CHECK_FALSE(report.rows[1].ok);
  CHECK(report.rows[1].error == "invalid_k");
  CHECK(report.rows[2].ok);
  const auto text = csv(report);
  CHECK(text.find("fasb,60.000000,0.450000,10,5,failed:invalid_k,,,,,,,,,,\n") != std::string::npos);
}

TEST_CASE("evaluate reports metrics in range") {
  const auto& f = testing::planted_fixture();
  auto config = controller::config_from_bundle(f.probe.bundle, Mode::fasb);
  config.max_tokens = 30;
  const auto point = evaluate(*f.backend, f.probe.bundle, 1, config, small_synthetic_task(6));
  REQUIRE(point.desired_rate.has_value());
  CHECK(*point.desired_rate >= 0.9);
  CHECK(point.trigger_rate == 1.0);
  CHECK(point.histogram.total() == 6);
  CHECK(point.overhead == doctest::Approx(10.0));

  const auto items = make_synthetic_mc(f.planted, 6, 3, 8);
  McTask mc;
  for (const auto& item : items) mc.items.push_back(tokenize(f.planted.vocab, item));
  config.mode = Mode::none;
  const auto none_point = evaluate(*f.backend, f.probe.bundle, 1, config, mc);
  REQUIRE(none_point.mc.has_value());
  for (double v : {none_point.mc->mc1, none_point.mc->mc2, none_point.mc->mc3}) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("mc items validate and round trip through json lines") {
  McItem good{"q", {"a", "b", "c"}, {0, 2}, 2};
  CHECK_NOTHROW(good.validate());
  McItem one_choice{"q", {"a"}, {0}, std::nullopt};
  CHECK(error_code([&] { one_choice.validate(); }) == "invalid_item");
  McItem all_correct{"q", {"a", "b"}, {0, 1}, std::nullopt};
  CHECK(error_code([&] { all_correct.validate(); }) == "invalid_item");
  McItem out_of_range{"q", {"a", "b"}, {4}, std::nullopt};
  CHECK(error_code([&] { out_of_range.validate(); }) == "invalid_item");
  McItem bad_best{"q", {"a", "b"}, {0}, 1};
  CHECK(error_code([&] { bad_best.validate(); }) == "invalid_item");

  const auto dir = std::filesystem::temp_directory_path() / ("fasb_test_mc_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto path = (dir / "mc.jsonl").string();
  const std::vector<McItem> items{good, McItem{"r", {"x", "y"}, {1}, std::nullopt}};
  save_mc_jsonl(path, items);
  const auto back = load_mc_jsonl(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].choices == good.choices);
  CHECK(back[0].correct == good.correct);
  CHECK(back[0].best_index == good.best_index);
  CHECK_FALSE(back[1].best_index.has_value());

  std::ofstream(path) << R"({"question":"q","choices":["a","b"],"correct":[0],"best_index":0})" << "\n"
                      << R"({"question":"q","choices":["a","b"],"correct":[0,1]})" << "\n";
  try {
    load_mc_jsonl(path);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.code()) == "invalid_item");
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic mc items") {
  const auto& f = testing::planted_fixture();
  const auto items = make_synthetic_mc(f.planted, 10, 4);
  REQUIRE(items.size() == 10);
  for (const auto& item : items) {
    CHECK_NOTHROW(item.validate());
    CHECK(item.choices.size() == 4);
    CHECK(item.correct.size() == 2);
    const auto t = tokenize(f.planted.vocab, item);
    for (std::size_t i = 0; i < 4; ++i) {
      const double frac = synthetic::desired_fraction(f.planted.partition, t.choices[i]);
      CHECK(frac == (item.correct.count(i) ? 1.0 : 0.0));
    }
  }
  const auto again = make_synthetic_mc(f.planted, 10, 4);
  CHECK(again[3].choices == items[3].choices);
}
