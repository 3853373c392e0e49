#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fasb/anchoring/bundle.hpp"
#include "fasb/controller/controller.hpp"
#include "fasb/model/tokenizer.hpp"
#include "fasb/synthetic/planted.hpp"

namespace fasb::eval {

struct McItem {
  std::string question;
  std::vector<std::string> choices;
  std::set<std::size_t> correct;
  std::optional<std::size_t> best_index;

  // At least two choices; `correct` non-empty, a proper subset of the choice
  // indices, and containing best_index when present.
  void validate() const;
};

// JSON-lines {"question", "choices", "correct", "best_index"}.
std::vector<McItem> load_mc_jsonl(const std::string& path);
void save_mc_jsonl(const std::string& path, std::span<const McItem> items);

struct TokenizedMcItem {
  std::vector<TokenId> question;
  std::vector<std::vector<TokenId>> choices;
  std::set<std::size_t> correct;
  std::optional<std::size_t> best_index;
};

TokenizedMcItem tokenize(const Vocabulary& vocab, const McItem& item);

struct ChoiceScore {
  double score = 0.0;  // mean per-token log-likelihood
  controller::DeviationTrace trace;
  std::size_t regenerated_tokens = 0;
};

// Mean log-likelihood of `choice` after `question`, with tracking and
// steering running over the forced choice tokens as configured.
ChoiceScore score_choice(Backend& backend, const controller::Controller& controller,
                         std::span<const TokenId> question, std::span<const TokenId> choice);

double score_choice(Backend& backend, const anchoring::SteeringBundle& bundle,
                    const controller::ControllerConfig& config, const Vocabulary& vocab,
                    const std::string& question, const std::string& choice);

struct ScoredItem {
  std::vector<double> scores;
  std::set<std::size_t> correct;
  std::optional<std::size_t> best_index;
};

struct McMetrics {
  double mc1 = 0.0;
  double mc2 = 0.0;
  double mc3 = 0.0;
};

// MC1: best_index strictly above every other choice.
// MC2: sum of exp(score) over correct choices over the sum over all choices.
// MC3: fraction of correct choices strictly above the best incorrect choice.
// Each is averaged over items.
McMetrics mc_metrics(std::span<const ScoredItem> items);

// Trigger positions bucketed as [0, 10), [10, 20), [20, inf).
struct TriggerHistogram {
  static constexpr std::array<std::size_t, 3> kLowerBounds{0, 10, 20};
  std::array<std::size_t, 3> counts{};

  std::size_t total() const { return counts[0] + counts[1] + counts[2]; }
};

TriggerHistogram trigger_position_histogram(std::span<const controller::DeviationTrace> traces);

// Mean trigger index over triggered traces; nullopt when nothing triggered.
std::optional<double> mean_trigger_position(std::span<const controller::DeviationTrace> traces);

struct SyntheticTask {
  std::vector<std::vector<TokenId>> prompts;
  synthetic::VocabPartition partition;
  std::size_t max_tokens = 50;
};

struct McTask {
  std::vector<TokenizedMcItem> items;
};

using Task = std::variant<SyntheticTask, McTask>;

struct PointResult {
  controller::Mode mode = controller::Mode::fasb;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t s = 0;
  std::size_t k = 0;
  bool ok = true;
  std::string error;
  std::optional<double> desired_rate;
  std::optional<McMetrics> mc;
  double trigger_rate = 0.0;
  std::optional<double> mean_trigger_position;
  double overhead = 0.0;  // regenerated tokens per generation
  TriggerHistogram histogram;
};

// One operating point: the bundle truncated to k heads driven by `config`.
PointResult evaluate(Backend& backend, const anchoring::SteeringBundle& bundle, std::size_t k,
                     const controller::ControllerConfig& config, const Task& task);

// An empty axis takes the bundle's value (k: all heads; mode: fasb). At least
// one axis must be given.
struct SweepGrid {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<std::size_t> s;
  std::vector<std::size_t> k;
  std::vector<controller::Mode> modes;

  bool empty() const { return alpha.empty() && beta.empty() && s.empty() && k.empty() && modes.empty(); }
};

struct EvalReport {
  std::vector<std::string> header;  // written as "# " comment lines
  std::vector<PointResult> rows;

  void write_csv(std::ostream& out) const;
};

// Points run in mode, k, alpha, beta, s order. A failing point is recorded
// with ok = false and the sweep continues.
EvalReport sweep(Backend& backend, const anchoring::SteeringBundle& bundle, const SweepGrid& grid,
                 const Task& task, const DecodingPolicy& decoding = {});

// Multiple-choice items over drift prompts: two desired-token choices
// (correct) and two deviant-token choices of `choice_len` tokens each, in
// shuffled order. best_index is the first correct choice.
std::vector<McItem> make_synthetic_mc(const synthetic::PlantedModel& planted, std::size_t n, std::uint64_t seed,
                                      std::size_t choice_len = 24);

std::vector<std::string> report_header(const anchoring::SteeringBundle& bundle, const Task& task,
                                       const DecodingPolicy& decoding);

}  // namespace fasb::eval
