#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include <json.hpp>

namespace fasb {

enum class PositionalEncoding { learned, sinusoidal };

// Geometry of a decoder-only transformer. The MLP hidden width is fixed at
// 4 * d_model by the reference architecture and is not a config field.
struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_head = 16;
  std::size_t vocab_size = 64;
  std::size_t max_seq_len = 96;
  PositionalEncoding positional_encoding = PositionalEncoding::learned;

  std::size_t d_ff() const { return 4 * d_model; }

  // Throws fasb::Error("invalid_config") when an invariant is violated.
  void validate() const;

  // Stable 64-bit FNV-1a hash over the canonical field serialization.
  std::uint64_t fingerprint() const;

  bool operator==(const ModelConfig&) const = default;
};

std::string fingerprint_hex(std::uint64_t fingerprint);

void to_json(nlohmann::json& j, const ModelConfig& config);
void from_json(const nlohmann::json& j, ModelConfig& config);

}  // namespace fasb
