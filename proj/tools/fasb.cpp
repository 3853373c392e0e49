#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fasb/anchoring/activations.hpp"
#include "fasb/anchoring/bundle.hpp"
#include "fasb/bridge/client.hpp"
#include "fasb/bridge/server.hpp"
#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"
#include "fasb/controller/controller.hpp"
#include "fasb/eval/eval.hpp"
#include "fasb/model/local_backend.hpp"
#include "fasb/synthetic/dataset.hpp"
#include "fasb/synthetic/planted.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fasb::cli {
namespace {

std::vector<std::string> g_argv;

struct BackendOptions {
  std::string backend = "local";
  std::string model_dir;
  std::string bridge_addr;

  void attach(CLI::App& cmd) {
    cmd.add_option("--backend", backend, "Model backend")->check(CLI::IsMember({"local", "bridge"}));
    cmd.add_option("--model", model_dir, "Model directory (config.json, weights.bin, vocab.txt)");
    cmd.add_option("--bridge-addr", bridge_addr, "Bridge server HOST:PORT");
  }

  json to_json() const {
    return backend == "local" ? json{{"backend", backend}, {"model", model_dir}}
                              : json{{"backend", backend}, {"bridge_addr", bridge_addr}};
  }
};

struct OpenBackend {
  std::unique_ptr<Backend> backend;
  std::optional<Vocabulary> vocab;

  const Vocabulary& vocabulary() const {
    require(vocab.has_value(), "no_tokenizer", "backend has no vocabulary for text input");
    return *vocab;
  }
};

OpenBackend open_backend(const BackendOptions& opts) {
  OpenBackend out;
  if (opts.backend == "bridge") {
    require(!opts.bridge_addr.empty(), "invalid_argument", "--backend bridge needs --bridge-addr");
    auto remote = std::make_unique<bridge::BridgeBackend>(opts.bridge_addr);
    out.vocab = remote->vocabulary();
    out.backend = std::move(remote);
    return out;
  }
  require(!opts.model_dir.empty(), "invalid_argument", "--backend local needs --model");
  out.backend = std::make_unique<LocalBackend>(load_model(opts.model_dir));
  const auto vocab_path = (fs::path(opts.model_dir) / "vocab.txt").string();
  if (fs::exists(vocab_path)) out.vocab = Vocabulary::load(vocab_path);
  return out;
}

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

std::string manifest_path_for_file(const std::string& out) { return out + ".run.json"; }
std::string manifest_path_for_dir(const std::string& dir) { return (fs::path(dir) / "run_manifest.json").string(); }

RunManifest start_manifest(const std::string& command) {
  RunManifest m;
  m.command = command;
  m.argv = g_argv;
  return m;
}

// Prompts file: JSON lines with a "prompt" (or "question") string.
std::vector<std::string> load_prompts(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> prompts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      prompts.push_back(j.contains("prompt") ? j.at("prompt").get<std::string>() : j.at("question").get<std::string>());
    } catch (const json::exception& e) {
      fail("invalid_prompts", path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(!prompts.empty(), "invalid_prompts", path + ": no prompts");
  return prompts;
}

void write_lines(const std::string& path, const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  io::write_file(path, out);
}

// ----- synth ---------------------------------------------------------------

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 0;
  std::string config_path;
  std::size_t samples = 200;
  std::size_t drift_prompts = 100;
  std::size_t mc_items = 50;
};

void run_synth(const SynthOptions& o) {
  auto manifest = start_manifest("synth");
  ModelConfig config = synthetic::default_config();
  if (!o.config_path.empty()) {
    json j = config;
    j.merge_patch(json::parse(io::read_file(o.config_path)));
    config = j.get<ModelConfig>();
    manifest.inputs.push_back(o.config_path);
  }
  const auto planted = synthetic::build_planted_model(config, o.seed);
  fs::create_directories(o.out);
  const fs::path dir(o.out);

  save_model(*planted.model, o.out);
  planted.vocab.save((dir / "vocab.txt").string());

  const auto data = synthetic::generate_behavior_dataset(planted, o.samples, o.seed);
  const auto to_text = [&](const std::vector<synthetic::BehaviorRecord>& records) {
    std::vector<anchoring::LabeledText> out;
    for (const auto& r : records)
      out.push_back({planted.vocab.decode(r.prompt), planted.vocab.decode(r.answer), r.label});
    return out;
  };
  anchoring::save_qa_jsonl((dir / "train.jsonl").string(), to_text(data.train));
  anchoring::save_qa_jsonl((dir / "validation.jsonl").string(), to_text(data.validation));
  anchoring::save_qa_jsonl((dir / "test.jsonl").string(), to_text(data.test));

  std::vector<json> prompts;
  for (const auto& p : synthetic::make_drift_prompts(planted, o.drift_prompts, o.seed + 1))
    prompts.push_back({{"prompt", planted.vocab.decode(p)}});
  write_lines((dir / "drift_prompts.jsonl").string(), prompts);

  eval::save_mc_jsonl((dir / "mc.jsonl").string(), eval::make_synthetic_mc(planted, o.mc_items, o.seed + 2));
  io::write_file((dir / "ground_truth.json").string(), synthetic::ground_truth_json(planted).dump(2) + "\n");

  manifest.config = {{"model", config}, {"samples", o.samples}, {"drift_prompts", o.drift_prompts},
                     {"mc_items", o.mc_items}};
  manifest.seeds = {{"seed", o.seed}};
  manifest.outputs = {"config.json",      "weights.bin",         "vocab.txt", "train.jsonl", "validation.jsonl",
                      "test.jsonl",       "drift_prompts.jsonl", "mc.jsonl",  "ground_truth.json"};
  manifest.write(manifest_path_for_dir(o.out));
  std::cout << "wrote planted model to " << o.out << " (designated head " << to_string(planted.designated_head)
            << ")\n";
}

// ----- extract -------------------------------------------------------------

struct ExtractOptions {
  BackendOptions backend;
  std::vector<std::string> data;
  std::string out;
};

void run_extract(const ExtractOptions& o) {
  auto manifest = start_manifest("extract");
  auto opened = open_backend(o.backend);
  std::vector<anchoring::LabeledText> records;
  for (const auto& path : o.data) {
    auto part = anchoring::load_qa_jsonl(path);
    records.insert(records.end(), part.begin(), part.end());
    manifest.inputs.push_back(path);
  }
  const auto tokens = anchoring::tokenize(opened.vocabulary(), records);
  const auto acts = anchoring::extract_activations(*opened.backend, tokens);
  ensure_parent(o.out);
  acts.save(o.out);
  manifest.config = {{"backend", o.backend.to_json()}, {"records", records.size()}};
  manifest.outputs = {o.out};
  manifest.write(manifest_path_for_file(o.out));
  std::cout << "extracted " << acts.n_samples() << " samples x " << acts.n_layers() * acts.n_heads()
            << " heads to " << o.out << "\n";
}

// ----- anchor --------------------------------------------------------------

struct AnchorCmdOptions {
  BackendOptions backend;
  std::string acts;
  std::string out;
  std::string method = "probe";
  std::optional<std::size_t> k;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.8;
  double lambda = 1e-3;
  double tau = 0.1;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::size_t> s;
  std::string normalization = "unit";
};

void run_anchor(const AnchorCmdOptions& o) {
  auto manifest = start_manifest("anchor");
  manifest.inputs = {o.acts};
  const auto acts = anchoring::ActivationSet::load(o.acts);
  auto opened = open_backend(o.backend);
  const ModelConfig& config = opened.backend->config();
  require(acts.n_layers() == config.n_layers && acts.n_heads() == config.n_heads && acts.d_head() == config.d_head,
          "shape_mismatch", "activation file does not match the model geometry");

  anchoring::AnchorOptions a;
  a.method = anchoring::parse_method(o.method);
  const std::size_t total_heads = config.n_layers * config.n_heads;
  a.k = o.k.value_or(std::min<std::size_t>(24, total_heads));
  require(a.k >= 1 && a.k <= total_heads, "invalid_k",
          "--k must be in [1, " + std::to_string(total_heads) + "], got " + std::to_string(a.k));
  a.split_seed = o.split_seed;
  a.train_fraction = o.train_fraction;
  a.lambda = o.lambda;
  a.tau = o.tau;
  a.hyper = anchoring::default_hyperparams(a.method);
  if (o.alpha) a.hyper.alpha = *o.alpha;
  if (o.beta) a.hyper.beta = *o.beta;
  if (o.s) a.hyper.s = *o.s;
  a.hyper.normalization = anchoring::parse_normalization(o.normalization);

  const auto result = anchoring::anchor(acts, a, config.fingerprint());
  result.bundle.save(o.out);

  std::ostringstream csv;
  csv << "layer,head,validation_accuracy,degenerate,selected\n";
  const auto selected = result.bundle.head_ids();
  for (const auto& c : result.all) {
    const HeadId h = anchoring::head_of(c);
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.6f", anchoring::accuracy_of(c));
    csv << h.layer << ',' << h.head << ',' << acc << ',' << (anchoring::is_degenerate(c) ? 1 : 0) << ','
        << (std::find(selected.begin(), selected.end(), h) != selected.end() ? 1 : 0) << '\n';
  }
  io::write_file((fs::path(o.out) / "head_accuracy.csv").string(), csv.str());

  manifest.config = {{"backend", o.backend.to_json()}, {"method", o.method},   {"k", a.k},
                     {"train_fraction", a.train_fraction}, {"lambda", a.lambda}, {"tau", a.tau},
                     {"alpha", a.hyper.alpha},   {"beta", a.hyper.beta},     {"s", a.hyper.s},
                     {"normalization", o.normalization}};
  manifest.seeds = {{"split_seed", o.split_seed}};
  manifest.outputs = {"manifest.json", "vectors.bin", "head_accuracy.csv"};
  manifest.write(manifest_path_for_dir(o.out));
  std::cout << "selected " << a.k << " heads; top " << to_string(anchoring::head_of(result.bundle.heads.front()))
            << " accuracy " << anchoring::accuracy_of(result.bundle.heads.front()) << "\n";
}

// ----- shared controller options -------------------------------------------

struct ControlOptions {
  std::string bundle;
  std::string mode = "fasb";
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<std::size_t> s;
  std::optional<std::size_t> k;
  std::size_t max_tokens = 50;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  std::vector<std::string> stop;

  void attach(CLI::App& cmd, bool with_hyper) {
    cmd.add_option("--bundle", bundle, "Steering bundle directory")->required();
    if (with_hyper) {
      cmd.add_option("--mode", mode, "Steering mode");
      cmd.add_option("--alpha", alpha, "Intervention strength (default: bundle)");
      cmd.add_option("--beta", beta, "Deviation threshold (default: bundle)");
      cmd.add_option("--s", s, "Backtracking count (default: bundle)");
      cmd.add_option("--k", k, "Use only the top k bundle heads");
    }
    cmd.add_option("--max-tokens", max_tokens, "Maximum generated tokens");
    cmd.add_option("--seed", seed, "Decoding seed");
    cmd.add_option("--temperature", temperature, "Sampling temperature; 0 decodes greedily");
    cmd.add_option("--stop", stop, "Stop words");
  }

  DecodingPolicy decoding() const {
    DecodingPolicy p;
    p.seed = seed;
    if (temperature > 0.0) {
      p.kind = DecodingPolicy::Kind::sample;
      p.temperature = temperature;
    }
    return p;
  }

  controller::ControllerConfig resolve(const anchoring::SteeringBundle& b, const OpenBackend& opened) const {
    auto c = controller::config_from_bundle(b, controller::parse_mode(mode));
    if (alpha) c.alpha = *alpha;
    if (beta) c.beta = *beta;
    if (s) c.s = *s;
    c.max_tokens = max_tokens;
    c.decoding = decoding();
    for (const auto& w : stop) c.stop_tokens.insert(opened.vocabulary().id(w));
    c.validate();
    return c;
  }

  json to_json(const controller::ControllerConfig& c, std::size_t k_used) const {
    return {{"bundle", bundle},         {"mode", controller::to_string(c.mode)},
            {"alpha", c.alpha},         {"beta", c.beta},
            {"s", c.s},                 {"k", k_used},
            {"max_tokens", c.max_tokens}, {"temperature", temperature},
            {"stop", stop}};
  }
};

// ----- generate ------------------------------------------------------------

struct GenerateOptions {
  BackendOptions backend;
  ControlOptions control;
  std::string prompts;
  std::string out;
};

void run_generate(const GenerateOptions& o) {
  auto manifest = start_manifest("generate");
  auto opened = open_backend(o.backend);
  auto bundle = anchoring::SteeringBundle::load(o.control.bundle);
  const std::size_t k = o.control.k.value_or(bundle.k());
  bundle = bundle.truncated(k);
  const auto config = o.control.resolve(bundle, opened);
  const controller::Controller ctl(bundle, config);
  const auto& vocab = opened.vocabulary();

  std::vector<json> rows;
  for (const auto& text : load_prompts(o.prompts)) {
    const auto prompt = vocab.encode(text);
    const auto r = ctl.generate(*opened.backend, prompt);
    json trace{{"probabilities", r.trace.probabilities}};
    trace["question_probability"] = r.trace.question_probability ? json(*r.trace.question_probability) : json();
    if (r.trace.trigger) {
      trace["trigger_index"] = r.trace.trigger->index;
      trace["trigger_probability"] = r.trace.trigger->probability;
      trace["strength"] = r.trace.trigger->strength;
      trace["regen_start"] = r.trace.trigger->regen_start;
    } else {
      trace["trigger_index"] = nullptr;
      trace["strength"] = r.trace.steered_from ? json(r.trace.applied_strength) : json(0.0);
    }
    trace["steered_from"] = r.trace.steered_from ? json(*r.trace.steered_from) : json();
    rows.push_back({{"prompt", text},
                    {"output", vocab.decode(r.tokens)},
                    {"tokens", r.tokens},
                    {"mode", controller::to_string(config.mode)},
                    {"alpha", config.alpha},
                    {"beta", config.beta},
                    {"s", config.s},
                    {"k", k},
                    {"trace", std::move(trace)},
                    {"regenerated_tokens", r.regenerated_tokens},
                    {"wall_time_ms", r.wall_time_ms}});
  }
  ensure_parent(o.out);
  write_lines(o.out, rows);
  manifest.inputs = {o.prompts, o.control.bundle};
  manifest.config = {{"backend", o.backend.to_json()}, {"controller", o.control.to_json(config, k)}};
  manifest.seeds = {{"seed", o.control.seed}};
  manifest.outputs = {o.out};
  manifest.write(manifest_path_for_file(o.out));
  std::cout << "generated " << rows.size() << " responses to " << o.out << "\n";
}

// ----- eval / sweep --------------------------------------------------------

struct TaskOptions {
  std::string task = "mc";
  std::string data;
  std::string ground_truth;

  void attach(CLI::App& cmd) {
    cmd.add_option("--task", task, "Workload")->check(CLI::IsMember({"mc", "synthetic"}));
    cmd.add_option("--data", data, "mc.jsonl items or prompts JSON lines")->required();
    cmd.add_option("--ground-truth", ground_truth, "ground_truth.json (synthetic task)");
  }

  eval::Task load(const OpenBackend& opened, std::size_t max_tokens) const {
    const auto& vocab = opened.vocabulary();
    if (task == "mc") {
      eval::McTask t;
      for (const auto& item : eval::load_mc_jsonl(data)) t.items.push_back(eval::tokenize(vocab, item));
      return t;
    }
    require(!ground_truth.empty(), "invalid_argument", "--task synthetic needs --ground-truth");
    eval::SyntheticTask t;
    t.partition = synthetic::ground_truth_from_json(json::parse(io::read_file(ground_truth))).partition;
    for (const auto& text : load_prompts(data)) t.prompts.push_back(vocab.encode(text));
    t.max_tokens = max_tokens;
    return t;
  }
};

void write_report(const eval::EvalReport& report, const std::string& out) {
  std::ostringstream csv;
  report.write_csv(csv);
  ensure_parent(out);
  io::write_file(out, csv.str());
}

struct EvalOptions {
  BackendOptions backend;
  ControlOptions control;
  TaskOptions task;
  std::string out;
};

void run_eval(const EvalOptions& o) {
  auto manifest = start_manifest("eval");
  auto opened = open_backend(o.backend);
  const auto bundle = anchoring::SteeringBundle::load(o.control.bundle);
  const std::size_t k = o.control.k.value_or(bundle.k());
  const auto config = o.control.resolve(bundle, opened);
  const auto task = o.task.load(opened, config.max_tokens);

  eval::EvalReport report;
  report.header = eval::report_header(bundle, task, config.decoding);
  report.rows.push_back(eval::evaluate(*opened.backend, bundle, k, config, task));
  write_report(report, o.out);

  manifest.inputs = {o.task.data, o.control.bundle};
  manifest.config = {{"backend", o.backend.to_json()}, {"controller", o.control.to_json(config, k)},
                     {"task", o.task.task}};
  manifest.seeds = {{"seed", o.control.seed}, {"split_seed", bundle.split_seed}};
  manifest.outputs = {o.out};
  manifest.write(manifest_path_for_file(o.out));
  const auto& row = report.rows.front();
  if (row.mc)
    std::cout << "MC1 " << row.mc->mc1 << " MC2 " << row.mc->mc2 << " MC3 " << row.mc->mc3 << "\n";
  if (row.desired_rate) std::cout << "desired rate " << *row.desired_rate << "\n";
}

struct SweepOptions {
  BackendOptions backend;
  ControlOptions control;
  TaskOptions task;
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<std::size_t> ss;
  std::vector<std::size_t> ks;
  std::vector<std::string> modes;
  std::string out;
};

void run_sweep(const SweepOptions& o) {
  auto manifest = start_manifest("sweep");
  auto opened = open_backend(o.backend);
  const auto bundle = anchoring::SteeringBundle::load(o.control.bundle);
  const auto task = o.task.load(opened, o.control.max_tokens);

  eval::SweepGrid grid;
  grid.alpha = o.alphas;
  grid.beta = o.betas;
  grid.s = o.ss;
  grid.k = o.ks;
  for (const auto& m : o.modes) grid.modes.push_back(controller::parse_mode(m));
  const auto report = eval::sweep(*opened.backend, bundle, grid, task, o.control.decoding());
  write_report(report, o.out);

  manifest.inputs = {o.task.data, o.control.bundle};
  manifest.config = {{"backend", o.backend.to_json()}, {"task", o.task.task}, {"alpha", o.alphas},
                     {"beta", o.betas}, {"s", o.ss}, {"k", o.ks}, {"modes", o.modes},
                     {"max_tokens", o.control.max_tokens}, {"temperature", o.control.temperature}};
  manifest.seeds = {{"seed", o.control.seed}, {"split_seed", bundle.split_seed}};
  manifest.outputs = {o.out};
  manifest.write(manifest_path_for_file(o.out));
  const auto failed = std::count_if(report.rows.begin(), report.rows.end(), [](const auto& r) { return !r.ok; });
  std::cout << "wrote " << report.rows.size() << " rows (" << failed << " failed) to " << o.out << "\n";
}

// ----- serve ---------------------------------------------------------------

void run_serve(const std::string& model_dir, const std::string& addr) {
  const auto [host, port] = bridge::parse_address(addr);
  std::optional<Vocabulary> vocab;
  const auto vocab_path = (fs::path(model_dir) / "vocab.txt").string();
  if (fs::exists(vocab_path)) vocab = Vocabulary::load(vocab_path);
  bridge::BridgeServer server(load_model(model_dir), std::move(vocab));
  server.listen(host, port);
  std::cout << "listening on " << host << ":" << server.port() << std::endl;
  server.run();
}

int run(int argc, char** argv);

void run_replay(const std::string& path) {
  const auto manifest = RunManifest::load(path);
  require(!manifest.argv.empty(), "invalid_manifest", path + ": empty argv");
  std::filesystem::current_path(manifest.working_dir);
  std::vector<std::string> args = manifest.argv;
  std::vector<char*> ptrs;
  for (auto& a : args) ptrs.push_back(a.data());
  const int rc = run(static_cast<int>(ptrs.size()), ptrs.data());
  require(rc == 0, "replay_failed", "replayed command exited with " + std::to_string(rc));
}

int run(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"Flexible activation steering with backtracking"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "Build a planted model with datasets");
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed, "Seed");
  c_synth->add_option("--config", synth.config_path, "JSON file overriding model config fields");
  c_synth->add_option("--samples", synth.samples, "Behaviour dataset size");
  c_synth->add_option("--drift-prompts", synth.drift_prompts, "Number of drift prompts");
  c_synth->add_option("--mc-items", synth.mc_items, "Number of multiple-choice items");

  ExtractOptions extract;
  auto* c_extract = app.add_subcommand("extract", "Record last-token head activations");
  extract.backend.attach(*c_extract);
  c_extract->add_option("--data", extract.data, "Labelled JSON-lines files")->required();
  c_extract->add_option("--out", extract.out, "Activation file")->required();

  AnchorCmdOptions anchor;
  auto* c_anchor = app.add_subcommand("anchor", "Fit per-head classifiers and select steering heads");
  anchor.backend.attach(*c_anchor);
  c_anchor->add_option("--acts", anchor.acts, "Activation file")->required();
  c_anchor->add_option("--out", anchor.out, "Bundle directory")->required();
  c_anchor->add_option("--method", anchor.method, "Classifier")->check(CLI::IsMember({"probe", "prototype"}));
  c_anchor->add_option("--k", anchor.k, "Number of heads (default: min(24, all heads))");
  c_anchor->add_option("--split-seed", anchor.split_seed, "Train/validation split seed");
  c_anchor->add_option("--train-fraction", anchor.train_fraction, "Training share of each class");
  c_anchor->add_option("--lambda", anchor.lambda, "Probe L2 penalty");
  c_anchor->add_option("--tau", anchor.tau, "Prototype temperature");
  c_anchor->add_option("--alpha", anchor.alpha, "Stored strength");
  c_anchor->add_option("--beta", anchor.beta, "Stored threshold");
  c_anchor->add_option("--s", anchor.s, "Stored backtracking count");
  c_anchor->add_option("--normalization", anchor.normalization, "Steering direction scaling")
      ->check(CLI::IsMember({"raw", "unit"}));

  GenerateOptions generate;
  auto* c_generate = app.add_subcommand("generate", "Generate with tracking and steering");
  generate.backend.attach(*c_generate);
  generate.control.attach(*c_generate, true);
  c_generate->add_option("--prompts", generate.prompts, "Prompts JSON lines")->required();
  c_generate->add_option("--out", generate.out, "Output JSON lines")->required();

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate one operating point");
  ev.backend.attach(*c_eval);
  ev.control.attach(*c_eval, true);
  ev.task.attach(*c_eval);
  c_eval->add_option("--out", ev.out, "Report CSV")->required();

  SweepOptions sw;
  auto* c_sweep = app.add_subcommand("sweep", "Evaluate a hyperparameter grid");
  sw.backend.attach(*c_sweep);
  sw.control.attach(*c_sweep, false);
  sw.task.attach(*c_sweep);
  c_sweep->add_option("--alphas", sw.alphas, "Strengths")->delimiter(',');
  c_sweep->add_option("--betas", sw.betas, "Thresholds")->delimiter(',');
  c_sweep->add_option("--ss", sw.ss, "Backtracking counts")->delimiter(',');
  c_sweep->add_option("--ks", sw.ks, "Head counts")->delimiter(',');
  c_sweep->add_option("--modes", sw.modes, "Modes")->delimiter(',');
  c_sweep->add_option("--out", sw.out, "Report CSV")->required();

  std::string serve_model, serve_addr = "127.0.0.1:7878";
  auto* c_serve = app.add_subcommand("serve", "Host a model over the bridge protocol");
  c_serve->add_option("--model", serve_model, "Model directory")->required();
  c_serve->add_option("--addr", serve_addr, "Listen HOST:PORT");

  std::string replay_path;
  auto* c_replay = app.add_subcommand("replay", "Re-run the command recorded in a run manifest");
  c_replay->add_option("manifest", replay_path, "Run manifest")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_synth) run_synth(synth);
    if (*c_extract) run_extract(extract);
    if (*c_anchor) run_anchor(anchor);
    if (*c_generate) run_generate(generate);
    if (*c_eval) run_eval(ev);
    if (*c_sweep) run_sweep(sw);
    if (*c_serve) run_serve(serve_model, serve_addr);
    if (*c_replay) run_replay(replay_path);
  } catch (const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace
}  // namespace fasb::cli

int main(int argc, char** argv) { return fasb::cli::run(argc, argv); }
