#include "fasb/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "fasb/common/error.hpp"
#include "fasb/model/math.hpp"
#include "fasb/synthetic/dataset.hpp"

namespace fasb::eval {

using controller::Controller;
using controller::ControllerConfig;
using controller::DeviationTrace;
using controller::Mode;

void McItem::validate() const {
  require(choices.size() >= 2, "invalid_item", "an item needs at least two choices");
  require(!correct.empty(), "invalid_item", "an item needs at least one correct choice");
  require(correct.size() < choices.size(), "invalid_item", "at least one choice must be incorrect");
  require(*correct.rbegin() < choices.size(), "invalid_item", "correct index out of range");
  if (best_index) {
    require(correct.count(*best_index) > 0, "invalid_item", "best_index must be a correct choice");
  }
}

std::vector<McItem> load_mc_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "io_error", "cannot open " + path);
  std::vector<McItem> items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      McItem item;
      item.question = j.at("question").get<std::string>();
      item.choices = j.at("choices").get<std::vector<std::string>>();
      for (const auto& c : j.at("correct")) item.correct.insert(c.get<std::size_t>());
      if (j.contains("best_index") && !j.at("best_index").is_null()) item.best_index = j.at("best_index").get<std::size_t>();
      item.validate();
      items.push_back(std::move(item));
    } catch (const Error& e) {
      fail(e.code(), where + e.what());
    } catch (const nlohmann::json::exception& e) {
      fail("invalid_item", where + e.what());
    }
  }
  return items;
}

void save_mc_jsonl(const std::string& path, std::span<const McItem> items) {
  std::ofstream out(path);
  require(out.good(), "io_error", "cannot write " + path);
  for (const auto& item : items) {
    nlohmann::json j{{"question", item.question},
                     {"choices", item.choices},
                     {"correct", std::vector<std::size_t>(item.correct.begin(), item.correct.end())}};
    if (item.best_index) j["best_index"] = *item.best_index;
    out << j.dump() << '\n';
  }
}

TokenizedMcItem tokenize(const Vocabulary& vocab, const McItem& item) {
  item.validate();
  TokenizedMcItem t{vocab.encode(item.question), {}, item.correct, item.best_index};
  for (const auto& choice : item.choices) t.choices.push_back(vocab.encode(choice));
  return t;
}

ChoiceScore score_choice(Backend& backend, const Controller& controller, std::span<const TokenId> question,
                         std::span<const TokenId> choice) {
  require(!choice.empty(), "empty_choice", "choice has no tokens");
  require(question.size() + choice.size() <= backend.config().max_seq_len, "sequence_overflow",
          "question plus choice exceed max_seq_len");
  auto run = controller.force(backend, question, choice);
  double total = 0.0;
  for (double lp : run.token_logprobs) total += lp;
  return ChoiceScore{total / static_cast<double>(run.token_logprobs.size()), std::move(run.trace),
                     run.regenerated_tokens};
}

double score_choice(Backend& backend, const anchoring::SteeringBundle& bundle, const ControllerConfig& config,
                    const Vocabulary& vocab, const std::string& question, const std::string& choice) {
  const Controller controller(bundle, config);
  const auto q = vocab.encode(question);
  const auto c = vocab.encode(choice);
  return score_choice(backend, controller, q, c).score;
}

McMetrics mc_metrics(std::span<const ScoredItem> items) {
  require(!items.empty(), "invalid_argument", "no scored items");
  double mc1 = 0.0, mc2 = 0.0, mc3 = 0.0;
  for (const auto& item : items) {
    const auto& s = item.scores;
    require(s.size() >= 2 && !item.correct.empty() && item.correct.size() < s.size() &&
                *item.correct.rbegin() < s.size(),
            "invalid_item", "scored item does not match its choices");
    require(item.best_index.has_value(), "missing_best_index", "MC1 needs best_index on every item");

    const std::size_t best = *item.best_index;
    bool strictly_best = true;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != best && s[i] >= s[best]) strictly_best = false;
    mc1 += strictly_best ? 1.0 : 0.0;

    const double top = *std::max_element(s.begin(), s.end());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double e = std::exp(s[i] - top);
      den += e;
      if (item.correct.count(i)) num += e;
    }
    mc2 += num / den;

    double max_incorrect = -INFINITY;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (!item.correct.count(i)) max_incorrect = std::max(max_incorrect, s[i]);
    std::size_t above = 0;
    for (std::size_t i : item.correct)
      if (s[i] > max_incorrect) ++above;
    mc3 += static_cast<double>(above) / static_cast<double>(item.correct.size());
  }
  const double n = static_cast<double>(items.size());
  return McMetrics{mc1 / n, mc2 / n, mc3 / n};
}

TriggerHistogram trigger_position_histogram(std::span<const DeviationTrace> traces) {
  TriggerHistogram h;
  for (const auto& trace : traces) {
    if (!trace.trigger) continue;
    const std::size_t j = trace.trigger->index;
    std::size_t bucket = 0;
    while (bucket + 1 < h.counts.size() && j >= TriggerHistogram::kLowerBounds[bucket + 1]) ++bucket;
    ++h.counts[bucket];
  }
  return h;
}

std::optional<double> mean_trigger_position(std::span<const DeviationTrace> traces) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& trace : traces) {
    if (!trace.trigger) continue;
    sum += static_cast<double>(trace.trigger->index);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

namespace {

struct Collected {
  std::vector<DeviationTrace> traces;
  std::size_t regenerated = 0;
};

void finish(PointResult& point, const Collected& c) {
  const double n = static_cast<double>(c.traces.size());
  point.histogram = trigger_position_histogram(c.traces);
  point.trigger_rate = static_cast<double>(point.histogram.total()) / n;
  point.mean_trigger_position = mean_trigger_position(c.traces);
  point.overhead = static_cast<double>(c.regenerated) / n;
}

void run_synthetic(Backend& backend, const Controller& controller, const SyntheticTask& task, PointResult& point) {
  require(!task.prompts.empty(), "invalid_task", "synthetic task has no prompts");
  Collected c;
  double rate = 0.0;
  for (const auto& prompt : task.prompts) {
    auto run = controller.generate(backend, prompt);
    rate += synthetic::desired_fraction(task.partition, run.tokens);
    c.regenerated += run.regenerated_tokens;
    c.traces.push_back(std::move(run.trace));
  }
  point.desired_rate = rate / static_cast<double>(task.prompts.size());
  finish(point, c);
}

void run_mc(Backend& backend, const Controller& controller, const McTask& task, PointResult& point) {
  require(!task.items.empty(), "invalid_task", "multiple-choice task has no items");
  Collected c;
  std::vector<ScoredItem> scored;
  for (const auto& item : task.items) {
    ScoredItem s{{}, item.correct, item.best_index};
    for (const auto& choice : item.choices) {
      auto score = score_choice(backend, controller, item.question, choice);
      s.scores.push_back(score.score);
      c.regenerated += score.regenerated_tokens;
      c.traces.push_back(std::move(score.trace));
    }
    scored.push_back(std::move(s));
  }
  point.mc = mc_metrics(scored);
  finish(point, c);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename T>
std::vector<T> axis_or(const std::vector<T>& axis, T fallback) {
  return axis.empty() ? std::vector<T>{fallback} : axis;
}

}  // namespace

PointResult evaluate(Backend& backend, const anchoring::SteeringBundle& bundle, std::size_t k,
                     const ControllerConfig& config, const Task& task) {
  PointResult point;
  point.mode = config.mode;
  point.alpha = config.alpha;
  point.beta = config.beta;
  point.s = config.s;
  point.k = k;
  const Controller controller(bundle.truncated(k), config);
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, SyntheticTask>) {
          require(t.max_tokens == config.max_tokens, "invalid_task", "max_tokens differs between task and config");
          run_synthetic(backend, controller, t, point);
        } else {
          run_mc(backend, controller, t, point);
        }
      },
      task);
  return point;
}

std::vector<McItem> make_synthetic_mc(const synthetic::PlantedModel& planted, std::size_t n, std::uint64_t seed,
                                      std::size_t choice_len) {
  require(choice_len >= 1, "invalid_argument", "choice_len must be >= 1");
  const auto prompts = synthetic::make_drift_prompts(planted, n, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const auto run = [&](const std::vector<TokenId>& pool) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < choice_len; ++i) out.push_back(pool[pick(rng)]);
    return planted.vocab.decode(out);
  };
  std::vector<McItem> items;
  for (const auto& prompt : prompts) {
    std::vector<std::pair<std::string, bool>> choices{{run(planted.partition.desired), true},
                                                      {run(planted.partition.desired), true},
                                                      {run(planted.partition.deviant), false},
                                                      {run(planted.partition.deviant), false}};
    std::shuffle(choices.begin(), choices.end(), rng);
    McItem item;
    item.question = planted.vocab.decode(prompt);
    for (std::size_t i = 0; i < choices.size(); ++i) {
      item.choices.push_back(choices[i].first);
      if (choices[i].second) item.correct.insert(i);
    }
    item.best_index = *item.correct.begin();
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<std::string> report_header(const anchoring::SteeringBundle& bundle, const Task& task,
                                       const DecodingPolicy& decoding) {
  std::vector<std::string> header;
  header.push_back("fasb sweep report");
  header.push_back("bundle_fingerprint: " + fingerprint_hex(bundle.model_fingerprint));
  header.push_back("bundle_method: " + anchoring::to_string(bundle.method) + " k=" + std::to_string(bundle.k()) +
                   " normalization=" + anchoring::to_string(bundle.hyper.normalization));
  header.push_back("split_seed: " + std::to_string(bundle.split_seed));
  header.push_back(std::string("decoding: ") +
                   (decoding.kind == DecodingPolicy::Kind::greedy ? "greedy" : "sample") +
                   " temperature=" + format_double(decoding.temperature) + " seed=" + std::to_string(decoding.seed));
  if (std::holds_alternative<McTask>(task)) {
    header.push_back("task: multiple-choice, " + std::to_string(std::get<McTask>(task).items.size()) + " items");
    header.push_back("scoring: mean per-token log-likelihood of the choice tokens given the question");
  } else {
    const auto& t = std::get<SyntheticTask>(task);
    header.push_back("task: synthetic, " + std::to_string(t.prompts.size()) +
                     " prompts, max_tokens=" + std::to_string(t.max_tokens));
    header.push_back("scoring: fraction of generated tokens in the desired set");
  }
  return header;
}

EvalReport sweep(Backend& backend, const anchoring::SteeringBundle& bundle, const SweepGrid& grid, const Task& task,
                 const DecodingPolicy& decoding) {
  require(!grid.empty(), "empty_grid", "sweep grid has no values");
  EvalReport report;
  report.header = report_header(bundle, task, decoding);
  const std::size_t max_tokens =
      std::holds_alternative<SyntheticTask>(task) ? std::get<SyntheticTask>(task).max_tokens : ControllerConfig{}.max_tokens;

  for (Mode mode : axis_or(grid.modes, Mode::fasb))
    for (std::size_t k : axis_or(grid.k, bundle.k()))
      for (double alpha : axis_or(grid.alpha, bundle.hyper.alpha))
        for (double beta : axis_or(grid.beta, bundle.hyper.beta))
          for (std::size_t s : axis_or(grid.s, bundle.hyper.s)) {
            ControllerConfig config;
            config.mode = mode;
            config.alpha = alpha;
            config.beta = beta;
            config.s = s;
            config.max_tokens = max_tokens;
            config.decoding = decoding;
            try {
              report.rows.push_back(evaluate(backend, bundle, k, config, task));
            } catch (const Error& e) {
              PointResult failed;
              failed.mode = mode;
              failed.alpha = alpha;
              failed.beta = beta;
              failed.s = s;
              failed.k = k;
              failed.ok = false;
              failed.error = std::string(e.code());
              report.rows.push_back(std::move(failed));
            }
          }
  return report;
}

void EvalReport::write_csv(std::ostream& out) const {
  for (const auto& line : header) out << "# " << line << '\n';
  out << "mode,alpha,beta,s,k,status,desired_rate,mc1,mc2,mc3,trigger_rate,mean_trigger_position,overhead,"
         "triggers_0_10,triggers_10_20,triggers_20_plus\n";
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& r : rows) {
    out << controller::to_string(r.mode) << ',' << format_double(r.alpha) << ',' << format_double(r.beta) << ','
        << r.s << ',' << r.k << ',' << (r.ok ? "ok" : "failed:" + r.error) << ',';
    if (!r.ok) {
      out << ",,,,,,,,,\n";
      continue;
    }
    out << opt(r.desired_rate) << ',' << (r.mc ? format_double(r.mc->mc1) : "") << ','
        << (r.mc ? format_double(r.mc->mc2) : "") << ',' << (r.mc ? format_double(r.mc->mc3) : "") << ','
        << format_double(r.trigger_rate) << ',' << opt(r.mean_trigger_position) << ',' << format_double(r.overhead)
        << ',' << r.histogram.counts[0] << ',' << r.histogram.counts[1] << ',' << r.histogram.counts[2] << '\n';
  }
}

}  // namespace fasb::eval
