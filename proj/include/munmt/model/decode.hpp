#pragma once

#include <memory>
#include <vector>

#include "munmt/model/model.hpp"

namespace munmt::nn {

template <class T>
struct Hypothesis {
  TokenSeq tokens;  // ends with EOS unless max_len was reached first
  T score = 0;      // sum of the chosen tokens' log-probabilities

  bool finished() const { return !tokens.empty() && tokens.back() == lingua::kEos; }
  // Tokens without the trailing EOS.
  TokenSeq content() const;
};

// Next-token distributions for a set of sources, one position at a time.
// Decoding states are integer handles owned by the scorer.
template <class T>
class StepScorer {
 public:
  virtual ~StepScorer() = default;
  // New state for `source`, positioned before the first target token.
  virtual int open(int source) = 0;
  virtual int fork(int state) = 0;
  virtual void release(int state) = 0;
  // Feeds tokens[i] to states[i] and returns next-token log-probabilities
  // (one row per state).
  virtual Matrix<T> step(const std::vector<int>& states, const std::vector<lingua::TokenId>& tokens) = 0;
};

// Scorer backed by the model in evaluation mode, with per-state key/value caches.
template <class T>
std::unique_ptr<StepScorer<T>> make_scorer(const Model<T>& model, const std::vector<TokenSeq>& sources, int tgt_lang);

// Argmax search over every source in [0, num_sources); lowest token id wins ties.
template <class T>
std::vector<Hypothesis<T>> greedy_search(StepScorer<T>& scorer, int num_sources, int max_len);
// Same with a separate length limit per source.
template <class T>
std::vector<Hypothesis<T>> greedy_search(StepScorer<T>& scorer, const std::vector<int>& max_lens);

// Length-unnormalized beam search. EOS-terminated candidates retire into a
// finished pool; search stops once no live prefix can beat the best finished one.
// Candidate ties break toward the earlier parent, then the lower token id.
template <class T>
Hypothesis<T> beam_search(StepScorer<T>& scorer, int source, int max_len, int beam);

// Model-level wrappers. Callers receive plain data: no gradient path runs
// through decoding.
template <class T>
Hypothesis<T> greedy_decode(const Model<T>& model, const TokenSeq& src, int src_lang, int tgt_lang, int max_len);

template <class T>
std::vector<Hypothesis<T>> greedy_decode_batch(const Model<T>& model, const std::vector<TokenSeq>& sources,
                                               int src_lang, int tgt_lang, int max_len);
template <class T>
std::vector<Hypothesis<T>> greedy_decode_batch(const Model<T>& model, const std::vector<TokenSeq>& sources,
                                               int src_lang, int tgt_lang, const std::vector<int>& max_lens);

template <class T>
Hypothesis<T> beam_decode(const Model<T>& model, const TokenSeq& src, int src_lang, int tgt_lang, int max_len,
                          int beam);

}  // namespace munmt::nn
