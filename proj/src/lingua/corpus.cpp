#include "munmt/lingua/corpus.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace munmt::lingua {
namespace {

void check_seq(const TokenSeq& seq, const Vocabulary& vocab, std::size_t length_cap) {
  if (seq.size() > length_cap) throw std::invalid_argument("sentence exceeds length cap");
  for (const TokenId id : seq) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) throw std::invalid_argument("token id out of range");
  }
}

}  // namespace

void validate(const MonoCorpus& corpus, const Vocabulary& vocab, std::size_t length_cap) {
  if (corpus.lines.empty()) throw std::invalid_argument("empty corpus");
  for (const auto& line : corpus.lines) check_seq(line, vocab, length_cap);
}

void validate(const ParallelCorpus& corpus, const Vocabulary& vocab, std::size_t length_cap) {
  if (corpus.src_language.id == corpus.tgt_language.id) {
    throw std::invalid_argument("parallel corpus languages must differ");
  }
  if (corpus.pairs.empty()) throw std::invalid_argument("empty corpus");
  for (const auto& [src, tgt] : corpus.pairs) {
    check_seq(src, vocab, length_cap);
    check_seq(tgt, vocab, length_cap);
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

MonoCorpus load_mono(const std::filesystem::path& path, const LanguageId& language, const Vocabulary& vocab,
                     std::size_t length_cap, LoadStats* stats) {
  LoadStats local;
  MonoCorpus corpus{language, {}};
  for (const auto& line : read_lines(path)) {
    TokenSeq seq = vocab.encode(line);
    if (seq.empty()) {
      ++local.dropped_empty;
    } else if (seq.size() > length_cap) {
      ++local.dropped_too_long;
    } else {
      corpus.lines.push_back(std::move(seq));
    }
  }
  local.kept = corpus.lines.size();
  if (stats) *stats = local;
  validate(corpus, vocab, length_cap);
  return corpus;
}

ParallelCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                             const LanguageId& src_language, const LanguageId& tgt_language,
                             const Vocabulary& vocab, std::size_t length_cap, LoadStats* stats) {
  const auto src_lines = read_lines(src_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw std::invalid_argument("parallel files have different line counts: " + src_path.string() + " vs " +
                                tgt_path.string());
  }
  LoadStats local;
  ParallelCorpus corpus{src_language, tgt_language, {}};
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    TokenSeq src = vocab.encode(src_lines[i]);
    TokenSeq tgt = vocab.encode(tgt_lines[i]);
    if (src.empty() || tgt.empty()) {
      ++local.dropped_empty;
    } else if (src.size() > length_cap || tgt.size() > length_cap) {
      ++local.dropped_too_long;
    } else {
      corpus.pairs.emplace_back(std::move(src), std::move(tgt));
    }
  }
  local.kept = corpus.pairs.size();
  if (stats) *stats = local;
  validate(corpus, vocab, length_cap);
  return corpus;
}

void save_lines(const std::filesystem::path& path, const std::vector<TokenSeq>& lines, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path.string());
  for (const auto& line : lines) out << vocab.decode(line) << '\n';
}

}  // namespace munmt::lingua
