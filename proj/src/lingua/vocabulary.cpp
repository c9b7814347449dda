#include "munmt/lingua/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace munmt::lingua {

std::vector<LanguageId> make_languages(int count) {
  std::vector<LanguageId> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back({i, "L" + std::to_string(i)});
  return out;
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> reserved{"<pad>", "<s>", "</s>", "<unk>", "<mask>"};
  return reserved;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kMinVocabSize) throw std::invalid_argument("vocab too small");
  const auto& reserved = reserved_tokens();
  for (std::size_t i = 0; i < kNumReserved; ++i) {
    if (tokens_[i] != reserved[i]) throw std::invalid_argument("vocabulary must start with the reserved tokens");
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || split_whitespace(tokens_[i]).size() != 1) {
      throw std::invalid_argument("invalid vocabulary token at id " + std::to_string(i));
    }
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpora, std::size_t max_size,
                             std::size_t min_freq) {
  if (max_size <= kMinVocabSize) throw std::invalid_argument("vocab too small");
  std::map<std::string, std::size_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& line : corpus) {
      for (auto& tok : split_whitespace(line)) ++counts[tok];
    }
  }
  const auto& reserved = reserved_tokens();
  for (const auto& r : reserved) counts.erase(r);
  if (counts.empty()) throw std::invalid_argument("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens(reserved.begin(), reserved.end());
  for (const auto& [tok, n] : ranked) {
    if (tokens.size() >= max_size) break;
    if (n < min_freq) break;
    tokens.push_back(tok);
  }
  if (tokens.size() < kMinVocabSize) throw std::invalid_argument("vocab too small");
  return Vocabulary(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) { return Vocabulary(std::move(tokens)); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq out;
  for (const auto& tok : split_whitespace(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const TokenSeq& seq) const {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += token(seq[i]);
  }
  return out;
}

}  // namespace munmt::lingua
