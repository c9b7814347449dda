#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace munmt::lingua {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kMask = 4;
inline constexpr std::size_t kNumReserved = 5;
inline constexpr std::size_t kMinVocabSize = 6;

struct LanguageId {
  int id = 0;
  std::string name;

  friend bool operator==(const LanguageId&, const LanguageId&) = default;
};

// Languages are dense 0..K-1 named "L<id>".
std::vector<LanguageId> make_languages(int count);

// Token inventory. Ids 0-4 are PAD, BOS, EOS, UNK, MASK in that order.
class Vocabulary {
 public:
  static const std::vector<std::string>& reserved_tokens();

  // Builds from raw whitespace-tokenized text. Slots after the reserved ids are
  // filled by descending frequency with lexicographic tie-break; tokens seen
  // fewer than min_freq times are left out and encode to UNK.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpora, std::size_t max_size,
                          std::size_t min_freq = 1);

  // Takes a full token list whose first five entries must be the reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;

  TokenSeq encode(std::string_view text) const;
  std::string decode(const TokenSeq& seq) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  explicit Vocabulary(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string> split_whitespace(std::string_view text);

}  // namespace munmt::lingua
