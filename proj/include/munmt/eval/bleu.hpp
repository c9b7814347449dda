#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "munmt/lingua/corpus.hpp"
#include "munmt/objectives/objectives.hpp"

namespace munmt::eval {

using lingua::TokenSeq;

struct BleuReport {
  double score = 0;                    // 0..100
  std::array<double, 4> precisions{};  // p1..p4
  std::array<std::int64_t, 4> matches{};
  std::array<std::int64_t, 4> totals{};
  double brevity_penalty = 0;
  std::int64_t hyp_length = 0;
  std::int64_t ref_length = 0;

  std::string to_json() const;
};

// Corpus BLEU with one reference per hypothesis: clipped n-gram counts summed
// over the corpus for n = 1..4, BP = min(1, exp(1 - ref_len / hyp_len)), and a
// score of 0 when any precision is 0. With smooth set, n >= 2 counts get add-one
// smoothing, which keeps short test sets from collapsing to 0.
BleuReport corpus_bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, bool smooth = false);

struct DecodeMode {
  int beam = 1;  // 1 is greedy
  double length_ratio = 1.5;
  int length_offset = 5;
};

struct PairResult {
  BleuReport report;
  std::vector<TokenSeq> hypotheses;
};

// Decodes every test source into tgt_lang and scores against the gold side.
// The model is only read.
template <class T>
PairResult evaluate_pair(const nn::Model<T>& model, const std::vector<lingua::SentencePair>& testset, int src_lang,
                         int tgt_lang, const DecodeMode& mode = {});

// Same, with the translation step supplied by the caller.
template <class T>
PairResult evaluate_pair(const nn::Model<T>& model, const std::vector<lingua::SentencePair>& testset, int src_lang,
                         int tgt_lang, const obj::Translator<T>& translate);

// One decoded sentence per line, aligned with the test sources.
void write_hypotheses(const std::filesystem::path& path, const std::vector<TokenSeq>& hyps,
                      const lingua::Vocabulary& vocab);

std::string direction_name(int src_lang, int tgt_lang);  // "L0->L2"

}  // namespace munmt::eval
