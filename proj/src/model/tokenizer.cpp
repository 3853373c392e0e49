#include "fasb/model/tokenizer.hpp"

#include <fstream>
#include <sstream>

#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"

namespace fasb {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  require(!words_.empty(), "invalid_vocab", "vocabulary is empty");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    require(!words_[i].empty() && words_[i].find_first_of(" \t\r\n") == std::string::npos,
            "invalid_vocab", "vocabulary line " + std::to_string(i + 1) + " is not a single word");
    const bool inserted = index_.emplace(words_[i], static_cast<TokenId>(i)).second;
    require(inserted, "invalid_vocab", "duplicate vocabulary entry '" + words_[i] + "'");
  }
  const auto it = index_.find(std::string(kUnk));
  require(it != index_.end(), "invalid_vocab", "vocabulary has no <unk> entry");
  unk_ = it->second;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::istringstream in(io::read_file(path));
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    words.push_back(line);
  }
  return Vocabulary(std::move(words));
}

void Vocabulary::save(const std::string& path) const {
  std::string contents;
  for (const auto& w : words_) contents += w + "\n";
  io::write_file(path, contents);
}

const std::string& Vocabulary::word(TokenId id) const {
  require(id >= 0 && static_cast<std::size_t>(id) < words_.size(), "invalid_token",
          "token id " + std::to_string(id) + " out of vocabulary range");
  return words_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? unk_ : it->second;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::vector<TokenId> ids;
  std::string w;
  while (in >> w) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string text;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) text += ' ';
    text += word(ids[i]);
  }
  return text;
}

}  // namespace fasb
