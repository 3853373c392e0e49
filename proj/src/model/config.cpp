#include "fasb/model/config.hpp"

#include <cstdio>

#include "fasb/common/error.hpp"

namespace fasb {

namespace {

const char* encoding_name(PositionalEncoding encoding) {
  return encoding == PositionalEncoding::learned ? "learned" : "sinusoidal";
}

}  // namespace

void ModelConfig::validate() const {
  require(n_layers >= 1 && n_heads >= 1 && d_model >= 1 && d_head >= 1 && vocab_size >= 1,
          "invalid_config", "all model dimensions must be >= 1");
  require(max_seq_len >= 2, "invalid_config", "max_seq_len must be >= 2");
  require(d_head * n_heads == d_model, "invalid_config",
          "d_head * n_heads must equal d_model");
}

std::uint64_t ModelConfig::fingerprint() const {
  const std::string canonical = "n_layers=" + std::to_string(n_layers) +
                                ";n_heads=" + std::to_string(n_heads) +
                                ";d_model=" + std::to_string(d_model) +
                                ";d_head=" + std::to_string(d_head) +
                                ";vocab_size=" + std::to_string(vocab_size) +
                                ";max_seq_len=" + std::to_string(max_seq_len) +
                                ";positional_encoding=" + encoding_name(positional_encoding);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string fingerprint_hex(std::uint64_t fingerprint) {
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(fingerprint));
  return buffer;
}

void to_json(nlohmann::json& j, const ModelConfig& config) {
  j = nlohmann::json{{"n_layers", config.n_layers},
                     {"n_heads", config.n_heads},
                     {"d_model", config.d_model},
                     {"d_head", config.d_head},
                     {"vocab_size", config.vocab_size},
                     {"max_seq_len", config.max_seq_len},
                     {"positional_encoding", encoding_name(config.positional_encoding)}};
}

void from_json(const nlohmann::json& j, ModelConfig& config) {
  try {
    config.n_layers = j.at("n_layers").get<std::size_t>();
    config.n_heads = j.at("n_heads").get<std::size_t>();
    config.d_model = j.at("d_model").get<std::size_t>();
    config.d_head = j.at("d_head").get<std::size_t>();
    config.vocab_size = j.at("vocab_size").get<std::size_t>();
    config.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    const auto encoding = j.value("positional_encoding", std::string("learned"));
    if (encoding == "learned") {
      config.positional_encoding = PositionalEncoding::learned;
    } else if (encoding == "sinusoidal") {
      config.positional_encoding = PositionalEncoding::sinusoidal;
    } else {
      fail("invalid_config", "unknown positional_encoding '" + encoding + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail("invalid_config", std::string("malformed model config: ") + e.what());
  }
  config.validate();
}

}  // namespace fasb
