#include "munmt/eval/bleu.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace munmt::eval {

namespace {

using NgramCounts = std::map<std::vector<lingua::TokenId>, std::int64_t>;

NgramCounts ngrams(const TokenSeq& seq, std::size_t n) {
  NgramCounts out;
  if (seq.size() < n) return out;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) out[TokenSeq(seq.begin() + i, seq.begin() + i + n)]++;
  return out;
}

}  // namespace

std::string BleuReport::to_json() const {
  nlohmann::ordered_json j;
  j["bleu"] = score;
  j["precisions"] = precisions;
  j["matches"] = matches;
  j["totals"] = totals;
  j["brevity_penalty"] = brevity_penalty;
  j["hyp_length"] = hyp_length;
  j["ref_length"] = ref_length;
  return j.dump();
}

BleuReport corpus_bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, bool smooth) {
  if (hyps.empty()) throw std::invalid_argument("corpus_bleu: empty input");
  if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: hypothesis and reference counts differ");
  BleuReport r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    r.hyp_length += static_cast<std::int64_t>(hyps[s].size());
    r.ref_length += static_cast<std::int64_t>(refs[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hyps[s], n);
      const auto ref = ngrams(refs[s], n);
      for (const auto& [gram, count] : h) {
        r.totals[n - 1] += count;
        const auto it = ref.find(gram);
        if (it != ref.end()) r.matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  double log_sum = 0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = static_cast<double>(r.matches[n]);
    double t = static_cast<double>(r.totals[n]);
    if (smooth && n > 0) {
      m += 1;
      t += 1;
    }
    r.precisions[n] = t > 0 ? m / t : 0.0;
    if (r.precisions[n] <= 0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  if (r.hyp_length == 0) {
    r.brevity_penalty = 0;
  } else if (r.hyp_length >= r.ref_length) {
    r.brevity_penalty = 1;
  } else {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
  }
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

template <class T>
PairResult evaluate_pair(const nn::Model<T>& model, const std::vector<lingua::SentencePair>& testset, int src_lang,
                         int tgt_lang, const obj::Translator<T>& translate) {
  if (testset.empty()) throw std::invalid_argument("evaluate_pair: empty test set");
  std::vector<TokenSeq> sources, refs;
  for (const auto& [x, y] : testset) {
    sources.push_back(x);
    refs.push_back(y);
  }
  PairResult out;
  out.hypotheses = translate(model, sources, src_lang, tgt_lang);
  if (out.hypotheses.size() != sources.size()) throw std::logic_error("translator returned the wrong number of hypotheses");
  out.report = corpus_bleu(out.hypotheses, refs);
  return out;
}

template <class T>
PairResult evaluate_pair(const nn::Model<T>& model, const std::vector<lingua::SentencePair>& testset, int src_lang,
                         int tgt_lang, const DecodeMode& mode) {
  const obj::EStepConfig cfg{mode.beam, mode.length_ratio, mode.length_offset};
  return evaluate_pair(model, testset, src_lang, tgt_lang, obj::decode_translator<T>(cfg));
}

void write_hypotheses(const std::filesystem::path& path, const std::vector<TokenSeq>& hyps,
                      const lingua::Vocabulary& vocab) {
  lingua::save_lines(path, hyps, vocab);
}

std::string direction_name(int src_lang, int tgt_lang) {
  return "L" + std::to_string(src_lang) + "->L" + std::to_string(tgt_lang);
}

#define MUNMT_INSTANTIATE(T)                                                                                       \
  template PairResult evaluate_pair<T>(const nn::Model<T>&, const std::vector<lingua::SentencePair>&, int, int,    \
                                       const DecodeMode&);                                                         \
  template PairResult evaluate_pair<T>(const nn::Model<T>&, const std::vector<lingua::SentencePair>&, int, int,    \
                                       const obj::Translator<T>&);

MUNMT_INSTANTIATE(float)
MUNMT_INSTANTIATE(double)
#undef MUNMT_INSTANTIATE

}  // namespace munmt::eval
