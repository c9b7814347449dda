#include "munmt/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace munmt::obj {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Mass:
      return "MASS";
    case LossKind::Sup:
      return "SUP";
    case LossKind::Bt:
      return "BT";
    case LossKind::Ct:
      return "CT";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& text) {
  for (const auto k : {LossKind::Mass, LossKind::Sup, LossKind::Bt, LossKind::Ct}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown loss kind: " + text);
}

std::string LossRecord::to_json(std::int64_t step) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["kind"] = to_string(kind);
  j["src"] = "L" + std::to_string(src_lang);
  j["tgt"] = "L" + std::to_string(tgt_lang);
  j["pivot"] = pivot_lang >= 0 ? nlohmann::ordered_json("L" + std::to_string(pivot_lang)) : nlohmann::ordered_json();
  j["value"] = value;
  j["tokens"] = token_count;
  if (skipped > 0) j["skipped"] = skipped;
  return j.dump();
}

std::int64_t CrossEntropyBatch::token_count() const {
  std::int64_t n = 0;
  for (const auto& t : targets) n += static_cast<std::int64_t>(t.size()) + 1;
  return n;
}

template <class T>
nn::LossFn<T> cross_entropy(const CrossEntropyBatch& batch, const nn::ForwardMode<T>& mode, T weight) {
  if (batch.sources.empty()) throw std::invalid_argument("empty batch");
  return [&batch, mode, weight](nn::Binder<T>& bind) {
    std::int64_t tokens = 0;
    const ad::Var nll = nn::teacher_forced_nll(bind, batch.sources, batch.targets, batch.tgt_lang, mode,
                                               static_cast<std::vector<T>*>(nullptr), &tokens);
    return bind.tape().scale(nll, weight / static_cast<T>(tokens));
  };
}

template <class T>
double cross_entropy_value(const nn::Model<T>& model, const CrossEntropyBatch& batch) {
  nn::check_language(model.config(), batch.src_lang);
  ad::Tape<T> tape;
  nn::Binder<T> bind(tape, model);
  return static_cast<double>(tape.value(cross_entropy<T>(batch, nn::ForwardMode<T>::eval())(bind))(0, 0));
}

template <class T>
Translator<T> decode_translator(const EStepConfig& cfg) {
  if (cfg.beam < 1) throw std::invalid_argument("beam must be >= 1");
  return [cfg](const nn::Model<T>& model, const std::vector<TokenSeq>& sources, int src_lang, int tgt_lang) {
    const int cap = model.config().max_len;
    std::vector<int> limits;
    limits.reserve(sources.size());
    for (const auto& s : sources) {
      const double want = cfg.length_ratio * static_cast<double>(s.size()) + cfg.length_offset;
      limits.push_back(std::clamp(static_cast<int>(std::ceil(want)), 1, cap));
    }
    std::vector<TokenSeq> out;
    out.reserve(sources.size());
    if (cfg.beam == 1) {
      for (const auto& h : nn::greedy_decode_batch(model, sources, src_lang, tgt_lang, limits)) out.push_back(h.content());
    } else {
      for (std::size_t i = 0; i < sources.size(); ++i) {
        out.push_back(nn::beam_decode(model, sources[i], src_lang, tgt_lang, limits[i], cfg.beam).content());
      }
    }
    return out;
  };
}

CrossEntropyBatch mass_batch(const std::vector<lingua::MaskedExample>& examples, int lang) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  CrossEntropyBatch b;
  b.src_lang = b.tgt_lang = lang;
  for (const auto& ex : examples) {
    if (ex.target.empty()) throw std::invalid_argument("masked example has an empty span");
    b.sources.push_back(ex.input);
    b.targets.push_back(ex.target);
  }
  return b;
}

std::pair<CrossEntropyBatch, CrossEntropyBatch> supervised_batches(const std::vector<SentencePair>& pairs, int lang_x,
                                                                   int lang_y) {
  if (pairs.empty()) throw std::invalid_argument("empty batch");
  CrossEntropyBatch xy, yx;
  xy.src_lang = yx.tgt_lang = lang_x;
  xy.tgt_lang = yx.src_lang = lang_y;
  for (const auto& [x, y] : pairs) {
    xy.sources.push_back(x);
    xy.targets.push_back(y);
    yx.sources.push_back(y);
    yx.targets.push_back(x);
  }
  return {std::move(xy), std::move(yx)};
}

template <class T>
CrossEntropyBatch translated_batch(const nn::Model<T>& model, const std::vector<TokenSeq>& sources, int src_lang,
                                   const std::vector<TokenSeq>& targets, int tgt_lang, int via,
                                   const Translator<T>& translate, std::int64_t* skipped) {
  if (sources.empty()) throw std::invalid_argument("empty batch");
  if (sources.size() != targets.size()) throw std::invalid_argument("sources and targets differ in size");
  if (via == src_lang || via == tgt_lang) throw std::invalid_argument("decode language must differ from both sides");
  const auto hyps = translate(model, sources, src_lang, via);
  if (hyps.size() != sources.size()) throw std::logic_error("translator returned the wrong number of hypotheses");
  CrossEntropyBatch b;
  b.src_lang = via;
  b.tgt_lang = tgt_lang;
  std::int64_t dropped = 0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (hyps[i].empty()) {
      ++dropped;
      continue;
    }
    b.sources.push_back(hyps[i]);
    b.targets.push_back(targets[i]);
  }
  if (skipped) *skipped = dropped;
  return b;
}

template <class T>
CrossEntropyBatch back_translation_batch(const nn::Model<T>& model, const std::vector<TokenSeq>& xs, int lang,
                                         int other, const Translator<T>& translate, std::int64_t* skipped) {
  if (lang == other) throw std::invalid_argument("back-translation needs two distinct languages");
  return translated_batch(model, xs, lang, xs, lang, other, translate, skipped);
}

template <class T>
std::pair<CrossEntropyBatch, CrossEntropyBatch> cross_translation_batches(const nn::Model<T>& model,
                                                                          const std::vector<SentencePair>& pairs,
                                                                          int lang_x, int lang_y, int pivot,
                                                                          const Translator<T>& translate,
                                                                          std::int64_t skipped[2]) {
  if (pairs.empty()) throw std::invalid_argument("empty batch");
  if (lang_x == lang_y) throw std::invalid_argument("parallel languages must differ");
  std::vector<TokenSeq> xs, ys;
  for (const auto& [x, y] : pairs) {
    xs.push_back(x);
    ys.push_back(y);
  }
  auto first = translated_batch(model, xs, lang_x, ys, lang_y, pivot, translate, skipped ? &skipped[0] : nullptr);
  auto second = translated_batch(model, ys, lang_y, xs, lang_x, pivot, translate, skipped ? &skipped[1] : nullptr);
  return {std::move(first), std::move(second)};
}

LossRecord make_record(LossKind kind, const CrossEntropyBatch& batch, int pivot, std::int64_t skipped) {
  LossRecord r;
  r.kind = kind;
  r.src_lang = batch.src_lang;
  r.tgt_lang = batch.tgt_lang;
  r.pivot_lang = pivot;
  r.token_count = batch.token_count();
  r.skipped = skipped;
  return r;
}

template <class T>
TermGradients<T> term_gradients(const nn::Model<T>& model, LossRecord record, const CrossEntropyBatch& batch,
                                const nn::ForwardMode<T>& mode, T weight) {
  if (weight == T(0)) throw std::invalid_argument("loss weight must be nonzero");
  auto result = nn::gradients(model, cross_entropy<T>(batch, mode, weight));
  record.value = static_cast<double>(result.loss / weight);
  record.token_count = batch.token_count();
  return {record, std::move(result.grads)};
}

namespace {

template <class T>
LossRecord evaluate(const nn::Model<T>& model, LossRecord r, const CrossEntropyBatch& batch) {
  r.value = batch.sources.empty() ? 0.0 : cross_entropy_value(model, batch);
  return r;
}

// CT records name the parallel pair direction, not the pivot -> target batch.
LossRecord ct_record(const CrossEntropyBatch& batch, int from, int to, int pivot, std::int64_t skipped) {
  LossRecord r = make_record(LossKind::Ct, batch, pivot, skipped);
  r.src_lang = from;
  r.tgt_lang = to;
  return r;
}

}  // namespace

template <class T>
LossRecord mass_loss(const nn::Model<T>& model, const std::vector<lingua::MaskedExample>& batch, int lang) {
  const auto b = mass_batch(batch, lang);
  return evaluate(model, make_record(LossKind::Mass, b), b);
}

template <class T>
std::pair<LossRecord, LossRecord> supervised_loss(const nn::Model<T>& model, const std::vector<SentencePair>& pairs,
                                                  int lang_x, int lang_y) {
  const auto [xy, yx] = supervised_batches(pairs, lang_x, lang_y);
  return {evaluate(model, make_record(LossKind::Sup, xy), xy), evaluate(model, make_record(LossKind::Sup, yx), yx)};
}

template <class T>
LossRecord bt_loss(const nn::Model<T>& model, const std::vector<TokenSeq>& xs, int lang, int other,
                   const Translator<T>& translate) {
  std::int64_t skipped = 0;
  const auto b = back_translation_batch(model, xs, lang, other, translate, &skipped);
  return evaluate(model, make_record(LossKind::Bt, b, -1, skipped), b);
}

template <class T>
std::pair<LossRecord, LossRecord> ct_loss(const nn::Model<T>& model, const std::vector<SentencePair>& pairs,
                                          int lang_x, int lang_y, int pivot, const Translator<T>& translate) {
  std::int64_t skipped[2] = {0, 0};
  const auto [first, second] = cross_translation_batches(model, pairs, lang_x, lang_y, pivot, translate, skipped);
  return {evaluate(model, ct_record(first, lang_x, lang_y, pivot, skipped[0]), first),
          evaluate(model, ct_record(second, lang_y, lang_x, pivot, skipped[1]), second)};
}

#define MUNMT_INSTANTIATE(T)                                                                                          \
  template nn::LossFn<T> cross_entropy<T>(const CrossEntropyBatch&, const nn::ForwardMode<T>&, T);                    \
  template double cross_entropy_value<T>(const nn::Model<T>&, const CrossEntropyBatch&);                              \
  template Translator<T> decode_translator<T>(const EStepConfig&);                                                    \
  template CrossEntropyBatch translated_batch<T>(const nn::Model<T>&, const std::vector<TokenSeq>&, int,                \
                                                 const std::vector<TokenSeq>&, int, int, const Translator<T>&,         \
                                                 std::int64_t*);                                                       \
  template CrossEntropyBatch back_translation_batch<T>(const nn::Model<T>&, const std::vector<TokenSeq>&, int, int,   \
                                                       const Translator<T>&, std::int64_t*);                          \
  template std::pair<CrossEntropyBatch, CrossEntropyBatch> cross_translation_batches<T>(                              \
      const nn::Model<T>&, const std::vector<SentencePair>&, int, int, int, const Translator<T>&, std::int64_t[2]);   \
  template TermGradients<T> term_gradients<T>(const nn::Model<T>&, LossRecord, const CrossEntropyBatch&,             \
                                              const nn::ForwardMode<T>&, T);                                          \
  template LossRecord mass_loss<T>(const nn::Model<T>&, const std::vector<lingua::MaskedExample>&, int);              \
  template std::pair<LossRecord, LossRecord> supervised_loss<T>(const nn::Model<T>&, const std::vector<SentencePair>&, \
                                                                int, int);                                            \
  template LossRecord bt_loss<T>(const nn::Model<T>&, const std::vector<TokenSeq>&, int, int, const Translator<T>&);  \
  template std::pair<LossRecord, LossRecord> ct_loss<T>(const nn::Model<T>&, const std::vector<SentencePair>&, int,   \
                                                        int, int, const Translator<T>&);

MUNMT_INSTANTIATE(float)
MUNMT_INSTANTIATE(double)
#undef MUNMT_INSTANTIATE

}  // namespace munmt::obj
