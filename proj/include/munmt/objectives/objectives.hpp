#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "munmt/lingua/corpus.hpp"
#include "munmt/lingua/masking.hpp"
#include "munmt/model/decode.hpp"
#include "munmt/model/gradients.hpp"

namespace munmt::obj {

using lingua::SentencePair;
using lingua::TokenSeq;

enum class LossKind { Mass, Sup, Bt, Ct };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

// One loss term, reported as mean negative log-likelihood per target token.
//   MASS: src = tgt = the corpus language.
//   SUP:  src -> tgt as trained.
//   BT:   src = the language of the decoded hypothesis, tgt = the language of
//         the original sentence being reconstructed.
//   CT:   src -> tgt is the parallel pair direction; pivot is the decoded language.
struct LossRecord {
  LossKind kind = LossKind::Mass;
  int src_lang = 0;
  int tgt_lang = 0;
  int pivot_lang = -1;  // CT only
  double value = 0;
  std::int64_t token_count = 0;
  std::int64_t skipped = 0;  // examples dropped because the decode came back empty

  // {"step", "kind", "src", "tgt", "pivot", "value", "tokens"}; pivot is null
  // except for CT.
  std::string to_json(std::int64_t step) const;
};

// A teacher-forced cross-entropy job: predict targets from sources.
struct CrossEntropyBatch {
  std::vector<TokenSeq> sources;
  std::vector<TokenSeq> targets;
  int src_lang = 0;
  int tgt_lang = 0;

  std::int64_t token_count() const;  // target tokens plus one EOS per sentence
};

// Per-token mean cross-entropy of a batch, scaled by weight. The returned
// function refers to batch, which must outlive it.
template <class T>
nn::LossFn<T> cross_entropy(const CrossEntropyBatch& batch, const nn::ForwardMode<T>& mode, T weight = T(1));

// Evaluation-mode per-token loss value.
template <class T>
double cross_entropy_value(const nn::Model<T>& model, const CrossEntropyBatch& batch);

// E-step translation of a batch. Beam search is an experimental alternative;
// the default is greedy decoding.
struct EStepConfig {
  int beam = 1;
  // Length limit for each hypothesis: min(model max_len, ratio * len(src) + offset).
  double length_ratio = 1.5;
  int length_offset = 5;
};

template <class T>
using Translator = std::function<std::vector<TokenSeq>(const nn::Model<T>& model, const std::vector<TokenSeq>& sources,
                                                       int src_lang, int tgt_lang)>;

template <class T>
Translator<T> decode_translator(const EStepConfig& cfg = {});

// --- batch builders --------------------------------------------------------

CrossEntropyBatch mass_batch(const std::vector<lingua::MaskedExample>& examples, int lang);

// Returns {x -> y, y -> x}.
std::pair<CrossEntropyBatch, CrossEntropyBatch> supervised_batches(const std::vector<SentencePair>& pairs, int lang_x,
                                                                   int lang_y);

// Decodes each source into `via` on the current parameters and pairs the
// hypotheses with the targets: (hyp -> target in tgt_lang). Empty hypotheses
// are dropped and counted in *skipped.
template <class T>
CrossEntropyBatch translated_batch(const nn::Model<T>& model, const std::vector<TokenSeq>& sources, int src_lang,
                                   const std::vector<TokenSeq>& targets, int tgt_lang, int via,
                                   const Translator<T>& translate, std::int64_t* skipped);

// Decodes y_hat = translate(x, lang -> other) on the current parameters and
// returns the batch (y_hat -> x). Empty hypotheses are dropped and counted.
template <class T>
CrossEntropyBatch back_translation_batch(const nn::Model<T>& model, const std::vector<TokenSeq>& xs, int lang,
                                         int other, const Translator<T>& translate, std::int64_t* skipped);

// For pairs (x, y) in (lang_x, lang_y): direction 1 decodes z_hat from x and
// predicts y; direction 2 decodes z_hat from y and predicts x.
template <class T>
std::pair<CrossEntropyBatch, CrossEntropyBatch> cross_translation_batches(const nn::Model<T>& model,
                                                                          const std::vector<SentencePair>& pairs,
                                                                          int lang_x, int lang_y, int pivot,
                                                                          const Translator<T>& translate,
                                                                          std::int64_t skipped[2]);

// --- evaluation-mode losses ------------------------------------------------

template <class T>
LossRecord mass_loss(const nn::Model<T>& model, const std::vector<lingua::MaskedExample>& batch, int lang);

template <class T>
std::pair<LossRecord, LossRecord> supervised_loss(const nn::Model<T>& model, const std::vector<SentencePair>& pairs,
                                                  int lang_x, int lang_y);

template <class T>
LossRecord bt_loss(const nn::Model<T>& model, const std::vector<TokenSeq>& xs, int lang, int other,
                   const Translator<T>& translate = decode_translator<T>());

template <class T>
std::pair<LossRecord, LossRecord> ct_loss(const nn::Model<T>& model, const std::vector<SentencePair>& pairs,
                                          int lang_x, int lang_y, int pivot,
                                          const Translator<T>& translate = decode_translator<T>());

// Record for a batch; value filled in by the caller.
LossRecord make_record(LossKind kind, const CrossEntropyBatch& batch, int pivot = -1, std::int64_t skipped = 0);

// Loss value and parameter gradients of one term; this is what a training
// update consumes. The record's value is the unweighted per-token loss.
template <class T>
struct TermGradients {
  LossRecord record;
  nn::Gradients<T> grads;
};

template <class T>
TermGradients<T> term_gradients(const nn::Model<T>& model, LossRecord record, const CrossEntropyBatch& batch,
                                const nn::ForwardMode<T>& mode, T weight = T(1));

}  // namespace munmt::obj
