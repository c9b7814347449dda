#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "munmt/lingua/vocabulary.hpp"

namespace munmt::lingua {

inline constexpr std::size_t kDefaultLengthCap = 100;

struct MonoCorpus {
  LanguageId language;
  std::vector<TokenSeq> lines;
};

using SentencePair = std::pair<TokenSeq, TokenSeq>;

struct ParallelCorpus {
  LanguageId src_language;
  LanguageId tgt_language;
  std::vector<SentencePair> pairs;
};

// Throws std::invalid_argument when a corpus breaks its invariants.
void validate(const MonoCorpus& corpus, const Vocabulary& vocab, std::size_t length_cap);
void validate(const ParallelCorpus& corpus, const Vocabulary& vocab, std::size_t length_cap);

struct LoadStats {
  std::size_t kept = 0;
  std::size_t dropped_too_long = 0;
  std::size_t dropped_empty = 0;
};

// One sentence per line. Lines longer than length_cap tokens and empty lines
// are dropped; for parallel files the pair is dropped if either side fails.
MonoCorpus load_mono(const std::filesystem::path& path, const LanguageId& language, const Vocabulary& vocab,
                     std::size_t length_cap = kDefaultLengthCap, LoadStats* stats = nullptr);
ParallelCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                             const LanguageId& src_language, const LanguageId& tgt_language,
                             const Vocabulary& vocab, std::size_t length_cap = kDefaultLengthCap,
                             LoadStats* stats = nullptr);

void save_lines(const std::filesystem::path& path, const std::vector<TokenSeq>& lines, const Vocabulary& vocab);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace munmt::lingua
