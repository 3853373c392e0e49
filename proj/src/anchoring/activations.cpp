#include "fasb/anchoring/activations.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"

namespace fasb::anchoring {

namespace {
constexpr char kMagic[8] = {'F', 'A', 'S', 'B', 'A', 'C', 'T', '1'};
}

ActivationSet::ActivationSet(std::size_t n_layers, std::size_t n_heads, std::size_t d_head)
    : n_layers_(n_layers), n_heads_(n_heads), d_head_(d_head) {}

void ActivationSet::append(const StepOutput& output, int label) {
  std::vector<float> row;
  row.reserve(n_layers_ * n_heads_ * d_head_);
  for (std::size_t l = 0; l < n_layers_; ++l) {
    for (std::size_t h = 0; h < n_heads_; ++h) {
      const auto it = output.head_activations.find(HeadId{l, h});
      require(it != output.head_activations.end(), "missing_activation",
              "step output lacks head " + to_string(HeadId{l, h}));
      require(static_cast<std::size_t>(it->second.size()) == d_head_, "invalid_activation",
              "activation length mismatch");
      row.insert(row.end(), it->second.data(), it->second.data() + it->second.size());
    }
  }
  append_raw(row, label);
}

void ActivationSet::append_raw(std::span<const float> activations, int label) {
  require(activations.size() == n_layers_ * n_heads_ * d_head_, "invalid_activation",
          "activation row has wrong length");
  require(label == 0 || label == 1, "invalid_label", "label must be 0 or 1");
  for (float v : activations) require(std::isfinite(v), "non_finite", "activation is not finite");
  data_.insert(data_.end(), activations.begin(), activations.end());
  labels_.push_back(static_cast<std::uint8_t>(label));
}

Eigen::Map<const Eigen::VectorXf> ActivationSet::activation(std::size_t sample, HeadId head) const {
  const std::size_t offset = ((sample * n_layers_ + head.layer) * n_heads_ + head.head) * d_head_;
  return Eigen::Map<const Eigen::VectorXf>(data_.data() + offset, static_cast<Eigen::Index>(d_head_));
}

Eigen::MatrixXd ActivationSet::head_matrix(HeadId head, std::span<const std::size_t> samples) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(d_head_));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = activation(samples[i], head).cast<double>().transpose();
  }
  return m;
}

void ActivationSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.is_open(), "io_error", "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  io::write_u32(out, static_cast<std::uint32_t>(n_samples()));
  io::write_u32(out, static_cast<std::uint32_t>(n_layers_));
  io::write_u32(out, static_cast<std::uint32_t>(n_heads_));
  io::write_u32(out, static_cast<std::uint32_t>(d_head_));
  io::write_f32(out, data_);
  out.write(reinterpret_cast<const char*>(labels_.data()), static_cast<std::streamsize>(labels_.size()));
  require(static_cast<bool>(out), "io_error", "write failed for " + path);
}

ActivationSet ActivationSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.is_open(), "io_error", "cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  require(in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, "bad_format",
          path + " is not a FASBACT1 activation file");
  const std::size_t n = io::read_u32(in);
  const std::size_t n_layers = io::read_u32(in);
  const std::size_t n_heads = io::read_u32(in);
  const std::size_t d_head = io::read_u32(in);
  ActivationSet set(n_layers, n_heads, d_head);
  set.data_.resize(n * set.n_layers_ * set.n_heads_ * set.d_head_);
  io::read_f32(in, set.data_);
  set.labels_.resize(n);
  in.read(reinterpret_cast<char*>(set.labels_.data()), static_cast<std::streamsize>(n));
  require(static_cast<bool>(in), "bad_format", path + ": truncated label block");
  for (auto label : set.labels_) require(label <= 1, "bad_format", path + ": label byte not 0/1");
  in.peek();
  require(in.eof(), "bad_format", path + ": trailing bytes after label block");
  return set;
}

std::vector<LabeledText> load_qa_jsonl(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<LabeledText> records;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail("bad_format", where + "invalid JSON (" + e.what() + ")");
    }
    require(j.is_object() && j.contains("question") && j["question"].is_string() && j.contains("answer") &&
                j["answer"].is_string() && j.contains("label") && j["label"].is_number_integer(),
            "bad_format", where + "expected {\"question\": str, \"answer\": str, \"label\": 0|1}");
    const int label = j["label"].get<int>();
    require(label == 0 || label == 1, "bad_format", where + "label must be 0 or 1");
    records.push_back({j["question"].get<std::string>(), j["answer"].get<std::string>(), label});
  }
  return records;
}

void save_qa_jsonl(const std::string& path, std::span<const LabeledText> records) {
  std::string out;
  for (const auto& r : records) {
    out += nlohmann::json{{"question", r.question}, {"answer", r.answer}, {"label", r.label}}.dump() + "\n";
  }
  io::write_file(path, out);
}

std::vector<LabeledTokens> tokenize(const Vocabulary& vocab, std::span<const LabeledText> records) {
  std::vector<LabeledTokens> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    LabeledTokens t{vocab.encode(r.question), r.label};
    const auto answer = vocab.encode(r.answer);
    t.tokens.insert(t.tokens.end(), answer.begin(), answer.end());
    out.push_back(std::move(t));
  }
  return out;
}

ActivationSet extract_activations(Backend& backend, std::span<const LabeledTokens> records) {
  const ModelConfig& config = backend.config();
  std::vector<HeadId> all_heads;
  for (std::size_t l = 0; l < config.n_layers; ++l)
    for (std::size_t h = 0; h < config.n_heads; ++h) all_heads.push_back(HeadId{l, h});

  ActivationSet set(config.n_layers, config.n_heads, config.d_head);
  for (std::size_t i = 0; i < records.size(); ++i) {
    require(!records[i].tokens.empty() && records[i].tokens.size() <= config.max_seq_len - 1, "prompt_too_long",
            "record " + std::to_string(i) + " tokenizes to " + std::to_string(records[i].tokens.size()) +
                " tokens; must be in [1, " + std::to_string(config.max_seq_len - 1) + "]");
    auto session = backend.prime(records[i].tokens, all_heads);
    set.append(session->last(), records[i].label);
  }
  return set;
}

}  // namespace fasb::anchoring
