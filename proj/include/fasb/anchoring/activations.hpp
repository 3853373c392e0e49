#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fasb/model/session.hpp"
#include "fasb/model/tokenizer.hpp"

namespace fasb::anchoring {

// Last-token head activations for a labelled dataset, stored densely as
// [sample, layer, head, dim]. Label 1 = desired behaviour, 0 = deviant.
class ActivationSet {
 public:
  ActivationSet() = default;
  ActivationSet(std::size_t n_layers, std::size_t n_heads, std::size_t d_head);

  std::size_t n_samples() const { return labels_.size(); }
  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_heads() const { return n_heads_; }
  std::size_t d_head() const { return d_head_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<float>& data() const { return data_; }

  void append(const StepOutput& output, int label);
  void append_raw(std::span<const float> activations, int label);

  Eigen::Map<const Eigen::VectorXf> activation(std::size_t sample, HeadId head) const;

  // Rows `samples` of one head as a double matrix [n, d_head].
  Eigen::MatrixXd head_matrix(HeadId head, std::span<const std::size_t> samples) const;

  // FASBACT1 file: magic, u32 n_samples/n_layers/n_heads/d_head, float32
  // activations, then one label byte per sample.
  void save(const std::string& path) const;
  static ActivationSet load(const std::string& path);

  bool operator==(const ActivationSet&) const = default;

 private:
  std::size_t n_layers_ = 0;
  std::size_t n_heads_ = 0;
  std::size_t d_head_ = 0;
  std::vector<float> data_;
  std::vector<std::uint8_t> labels_;
};

struct LabeledText {
  std::string question;
  std::string answer;
  int label = 0;
};

// JSON-lines {"question": str, "answer": str, "label": 0|1}. Errors carry the
// 1-based line number.
std::vector<LabeledText> load_qa_jsonl(const std::string& path);
void save_qa_jsonl(const std::string& path, std::span<const LabeledText> records);

struct LabeledTokens {
  std::vector<TokenId> tokens;  // prompt followed by answer
  int label = 0;
};

std::vector<LabeledTokens> tokenize(const Vocabulary& vocab, std::span<const LabeledText> records);

// Primes the backend on each concatenated prompt+answer with every head
// tapped and records the activations at the final token.
ActivationSet extract_activations(Backend& backend, std::span<const LabeledTokens> records);

}  // namespace fasb::anchoring
