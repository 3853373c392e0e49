#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fasb/model/types.hpp"

namespace fasb {

// Whitespace-split word-level vocabulary. Line i of vocab.txt is token id i;
// unknown words map to the UNK token.
class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "<unk>";

  explicit Vocabulary(std::vector<std::string> words);

  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return words_.size(); }
  TokenId unk_id() const { return unk_; }
  const std::string& word(TokenId id) const;
  // Returns unk_id() for unknown words.
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_ = 0;
};

}  // namespace fasb
