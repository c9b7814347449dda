#include "munmt/model/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace munmt::nn {

template <class T>
TokenSeq Hypothesis<T>::content() const {
  TokenSeq out = tokens;
  if (finished()) out.pop_back();
  return out;
}

namespace {

template <class T>
void layer_norm_rows(Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + T(1e-5));
    x.row(r) = ((x.row(r).array() - mean) * inv * gain.row(0).array() + bias.row(0).array()).matrix();
  }
}

template <class T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> out;
  out.noalias() = x * w;
  out.rowwise() += b.row(0);
  return out;
}

// Per-hypothesis self-attention cache: one K and V row block per layer.
template <class T>
struct CacheState {
  int source = 0;
  int length = 0;
  std::vector<Matrix<T>> keys;
  std::vector<Matrix<T>> values;
};

// Runs the decoder one position at a time against precomputed encoder memory.
template <class T>
class ModelScorer final : public StepScorer<T> {
 public:
  ModelScorer(const Model<T>& model, const std::vector<TokenSeq>& sources, int tgt_lang)
      : m_(model), lang_(static_cast<std::size_t>(tgt_lang)) {
    check_language(model.config(), tgt_lang);
    ad::Tape<T> tape;
    Binder<T> bind(tape, model);
    PackedSegments layout;
    const Matrix<T> memory = tape.value(encode(bind, sources, ForwardMode<T>::eval(), &layout));
    segments_ = layout.segments;
    for (const auto& layer : m_.decoder) {
      cross_keys_.push_back(affine(memory, p(layer.cross.wk), p(layer.cross.bk)));
      cross_values_.push_back(affine(memory, p(layer.cross.wv), p(layer.cross.bv)));
    }
  }

  int open(int source) override {
    if (source < 0 || static_cast<std::size_t>(source) >= segments_.size()) {
      throw std::out_of_range("decode: source index out of range");
    }
    CacheState<T> s;
    s.source = source;
    const int d = m_.config().hidden_dim;
    const int cap = m_.config().max_len + 1;
    for (std::size_t l = 0; l < m_.decoder.size(); ++l) {
      s.keys.push_back(Matrix<T>::Zero(cap, d));
      s.values.push_back(Matrix<T>::Zero(cap, d));
    }
    return store(std::move(s));
  }

  int fork(int state) override { return store(CacheState<T>(at(state))); }

  void release(int state) override {
    at(state) = CacheState<T>{};
    free_.push_back(state);
  }

  // Feeds one token per state; returns log-softmax rows (states x vocab).
  Matrix<T> step(const std::vector<int>& handles, const std::vector<lingua::TokenId>& tokens) override {
    if (handles.size() != tokens.size()) throw std::invalid_argument("decode: states and tokens differ in size");
    std::vector<CacheState<T>*> states;
    for (const int h : handles) states.push_back(&at(h));
    const auto& cfg = m_.config();
    const int d = cfg.hidden_dim;
    const int heads = cfg.num_heads;
    const int dh = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    const auto n = static_cast<Eigen::Index>(states.size());

    Matrix<T> x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto* s = states[static_cast<std::size_t>(i)];
      if (s->length > cfg.max_len) throw std::invalid_argument("decode: exceeded max_len");
      x.row(i) = p(m_.token_embedding).row(tokens[static_cast<std::size_t>(i)]) +
                 p(m_.position_embedding).row(s->length) + p(m_.language_embedding[lang_]).row(0);
    }

    const auto attend = [&](const Matrix<T>& q, auto keys_of, auto values_of, auto count_of) {
      Matrix<T> out(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto count = count_of(i);
        const auto& keys = keys_of(i);
        const auto& values = values_of(i);
        for (int h = 0; h < heads; ++h) {
          Eigen::Matrix<T, 1, Eigen::Dynamic> scores =
              (q.block(i, h * dh, 1, dh) * keys.block(0, h * dh, count, dh).transpose()) * inv_sqrt;
          const T mx = scores.maxCoeff();
          scores = (scores.array() - mx).exp().matrix();
          scores /= scores.sum();
          out.block(i, h * dh, 1, dh).noalias() = scores * values.block(0, h * dh, count, dh);
        }
      }
      return out;
    };

    for (std::size_t l = 0; l < m_.decoder.size(); ++l) {
      const auto& layer = m_.decoder[l];
      Matrix<T> h = x;
      layer_norm_rows(h, p(layer.norm_self.gain), p(layer.norm_self.bias));
      const Matrix<T> q = affine(h, p(layer.self.wq), p(layer.self.bq));
      const Matrix<T> k = affine(h, p(layer.self.wk), p(layer.self.bk));
      const Matrix<T> v = affine(h, p(layer.self.wv), p(layer.self.bv));
      for (Eigen::Index i = 0; i < n; ++i) {
        auto* s = states[static_cast<std::size_t>(i)];
        s->keys[l].row(s->length) = k.row(i);
        s->values[l].row(s->length) = v.row(i);
      }
      const Matrix<T> self = attend(
          q, [&](Eigen::Index i) -> const Matrix<T>& { return states[static_cast<std::size_t>(i)]->keys[l]; },
          [&](Eigen::Index i) -> const Matrix<T>& { return states[static_cast<std::size_t>(i)]->values[l]; },
          [&](Eigen::Index i) { return states[static_cast<std::size_t>(i)]->length + 1; });
      x += affine(self, p(layer.self.wo[lang_]), p(layer.self.bo[lang_]));

      h = x;
      layer_norm_rows(h, p(layer.norm_cross.gain), p(layer.norm_cross.bias));
      const Matrix<T> qc = affine(h, p(layer.cross.wq), p(layer.cross.bq));
      Matrix<T> cross(n, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const ad::Segment seg = segments_[static_cast<std::size_t>(states[static_cast<std::size_t>(i)]->source)];
        for (int hh = 0; hh < heads; ++hh) {
          Eigen::Matrix<T, 1, Eigen::Dynamic> scores =
              (qc.block(i, hh * dh, 1, dh) * cross_keys_[l].block(seg.offset, hh * dh, seg.length, dh).transpose()) *
              inv_sqrt;
          const T mx = scores.maxCoeff();
          scores = (scores.array() - mx).exp().matrix();
          scores /= scores.sum();
          cross.block(i, hh * dh, 1, dh).noalias() = scores * cross_values_[l].block(seg.offset, hh * dh, seg.length, dh);
        }
      }
      x += affine(cross, p(layer.cross.wo[lang_]), p(layer.cross.bo[lang_]));

      h = x;
      layer_norm_rows(h, p(layer.norm_ffn.gain), p(layer.norm_ffn.bias));
      x += affine(Matrix<T>(affine(h, p(layer.ffn.w1), p(layer.ffn.b1)).cwiseMax(T(0))), p(layer.ffn.w2), p(layer.ffn.b2));
    }
    for (auto* s : states) ++s->length;

    layer_norm_rows(x, p(m_.decoder_norm.gain), p(m_.decoder_norm.bias));
    Matrix<T> logits;
    logits.noalias() = x * p(m_.token_embedding).transpose();
    logits.rowwise() += p(m_.output_bias).row(0);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const T mx = logits.row(r).maxCoeff();
      const T lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
      logits.row(r).array() -= lse;
    }
    return logits;
  }

 private:
  int store(CacheState<T> s) {
    if (!free_.empty()) {
      const int h = free_.back();
      free_.pop_back();
      pool_[static_cast<std::size_t>(h)] = std::move(s);
      return h;
    }
    pool_.push_back(std::move(s));
    return static_cast<int>(pool_.size()) - 1;
  }

  CacheState<T>& at(int h) {
    if (h < 0 || static_cast<std::size_t>(h) >= pool_.size()) throw std::out_of_range("decode: bad state handle");
    return pool_[static_cast<std::size_t>(h)];
  }

  const Matrix<T>& p(int slot) const { return m_.params()[static_cast<std::size_t>(slot)]; }

  const Model<T>& m_;
  std::size_t lang_;
  std::vector<ad::Segment> segments_;
  std::vector<Matrix<T>> cross_keys_;
  std::vector<Matrix<T>> cross_values_;
  std::vector<CacheState<T>> pool_;
  std::vector<int> free_;
};

template <class T>
lingua::TokenId argmax_lowest(const Matrix<T>& logp, Eigen::Index row) {
  lingua::TokenId best = 0;
  for (Eigen::Index j = 1; j < logp.cols(); ++j) {
    if (logp(row, j) > logp(row, best)) best = static_cast<lingua::TokenId>(j);
  }
  return best;
}

void check_decode_args(const ModelConfig& cfg, int src_lang, int max_len) {
  check_language(cfg, src_lang);
  if (max_len < 1 || max_len > cfg.max_len) throw std::invalid_argument("decode: max_len must be in [1, model max_len]");
}

}  // namespace

template <class T>
std::unique_ptr<StepScorer<T>> make_scorer(const Model<T>& model, const std::vector<TokenSeq>& sources, int tgt_lang) {
  return std::make_unique<ModelScorer<T>>(model, sources, tgt_lang);
}

template <class T>
std::vector<Hypothesis<T>> greedy_search(StepScorer<T>& scorer, const std::vector<int>& max_lens) {
  const auto n = max_lens.size();
  std::vector<Hypothesis<T>> out(n);
  std::vector<int> states(n);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (max_lens[i] < 1) throw std::invalid_argument("decode: max_len must be positive");
    states[i] = scorer.open(static_cast<int>(i));
    active.push_back(i);
  }
  std::vector<lingua::TokenId> last(n, lingua::kBos);

  while (!active.empty()) {
    std::vector<int> handles;
    std::vector<lingua::TokenId> toks;
    for (const auto i : active) {
      handles.push_back(states[i]);
      toks.push_back(last[i]);
    }
    const Matrix<T> logp = scorer.step(handles, toks);
    std::vector<std::size_t> still;
    for (std::size_t r = 0; r < active.size(); ++r) {
      const auto i = active[r];
      const lingua::TokenId tok = argmax_lowest(logp, static_cast<Eigen::Index>(r));
      out[i].tokens.push_back(tok);
      out[i].score += logp(static_cast<Eigen::Index>(r), tok);
      last[i] = tok;
      if (tok != lingua::kEos && static_cast<int>(out[i].tokens.size()) < max_lens[i]) {
        still.push_back(i);
      } else {
        scorer.release(states[i]);
      }
    }
    active = std::move(still);
  }
  return out;
}

template <class T>
std::vector<Hypothesis<T>> greedy_search(StepScorer<T>& scorer, int num_sources, int max_len) {
  if (max_len < 1) throw std::invalid_argument("decode: max_len must be positive");
  return greedy_search(scorer, std::vector<int>(static_cast<std::size_t>(num_sources), max_len));
}

template <class T>
Hypothesis<T> beam_search(StepScorer<T>& scorer, int source, int max_len, int beam) {
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  if (max_len < 1) throw std::invalid_argument("decode: max_len must be positive");

  struct Live {
    int state;
    Hypothesis<T> hyp;
  };
  struct Candidate {
    T score;
    std::size_t parent;
    lingua::TokenId token;
  };
  std::vector<Live> live;
  live.push_back({scorer.open(source), {}});
  std::vector<Hypothesis<T>> finished;

  for (int t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<int> handles;
    std::vector<lingua::TokenId> toks;
    for (const auto& l : live) {
      handles.push_back(l.state);
      toks.push_back(l.hyp.tokens.empty() ? lingua::kBos : l.hyp.tokens.back());
    }
    const Matrix<T> logp = scorer.step(handles, toks);
    std::vector<Candidate> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(logp.cols()));
    for (std::size_t b = 0; b < live.size(); ++b) {
      for (Eigen::Index w = 0; w < logp.cols(); ++w) {
        cands.push_back({live[b].hyp.score + logp(static_cast<Eigen::Index>(b), w), b, static_cast<lingua::TokenId>(w)});
      }
    }
    const auto keep = std::min(cands.size(), static_cast<std::size_t>(beam));
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = cands[c];
      Hypothesis<T> hyp = live[cand.parent].hyp;
      hyp.tokens.push_back(cand.token);
      hyp.score = cand.score;
      if (cand.token == lingua::kEos || t + 1 == max_len) {
        finished.push_back(std::move(hyp));
      } else {
        next.push_back({scorer.fork(live[cand.parent].state), std::move(hyp)});
      }
    }
    for (const auto& l : live) scorer.release(l.state);
    live = std::move(next);
    if (!finished.empty() && !live.empty()) {
      T best_finished = finished.front().score;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      T best_live = live.front().hyp.score;
      for (const auto& l : live) best_live = std::max(best_live, l.hyp.score);
      // Scores only decrease as hypotheses grow.
      if (best_finished >= best_live) break;
    }
  }
  for (const auto& l : live) scorer.release(l.state);
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score > finished[best].score) best = i;
  }
  return finished.at(best);
}

template <class T>
std::vector<Hypothesis<T>> greedy_decode_batch(const Model<T>& model, const std::vector<TokenSeq>& sources,
                                               int src_lang, int tgt_lang, int max_len) {
  check_decode_args(model.config(), src_lang, max_len);
  if (sources.empty()) return {};
  ModelScorer<T> scorer(model, sources, tgt_lang);
  return greedy_search<T>(scorer, static_cast<int>(sources.size()), max_len);
}

template <class T>
std::vector<Hypothesis<T>> greedy_decode_batch(const Model<T>& model, const std::vector<TokenSeq>& sources,
                                               int src_lang, int tgt_lang, const std::vector<int>& max_lens) {
  if (max_lens.size() != sources.size()) throw std::invalid_argument("decode: one max_len per source required");
  for (const int m : max_lens) check_decode_args(model.config(), src_lang, m);
  if (sources.empty()) return {};
  ModelScorer<T> scorer(model, sources, tgt_lang);
  return greedy_search<T>(scorer, max_lens);
}

template <class T>
Hypothesis<T> greedy_decode(const Model<T>& model, const TokenSeq& src, int src_lang, int tgt_lang, int max_len) {
  return greedy_decode_batch(model, std::vector<TokenSeq>{src}, src_lang, tgt_lang, max_len).front();
}

template <class T>
Hypothesis<T> beam_decode(const Model<T>& model, const TokenSeq& src, int src_lang, int tgt_lang, int max_len,
                          int beam) {
  if (beam < 1) throw std::invalid_argument("beam must be >= 1");
  check_decode_args(model.config(), src_lang, max_len);
  ModelScorer<T> scorer(model, {src}, tgt_lang);
  return beam_search<T>(scorer, 0, max_len, beam);
}

template struct Hypothesis<float>;
template struct Hypothesis<double>;

#define MUNMT_INSTANTIATE(T)                                                                                    \
  template std::unique_ptr<StepScorer<T>> make_scorer<T>(const Model<T>&, const std::vector<TokenSeq>&, int);   \
  template std::vector<Hypothesis<T>> greedy_search<T>(StepScorer<T>&, int, int);                               \
  template std::vector<Hypothesis<T>> greedy_search<T>(StepScorer<T>&, const std::vector<int>&);                \
  template std::vector<Hypothesis<T>> greedy_decode_batch<T>(const Model<T>&, const std::vector<TokenSeq>&, int, \
                                                             int, const std::vector<int>&);                      \
  template Hypothesis<T> beam_search<T>(StepScorer<T>&, int, int, int);                                         \
  template std::vector<Hypothesis<T>> greedy_decode_batch<T>(const Model<T>&, const std::vector<TokenSeq>&, int, \
                                                             int, int);                                          \
  template Hypothesis<T> greedy_decode<T>(const Model<T>&, const TokenSeq&, int, int, int);                      \
  template Hypothesis<T> beam_decode<T>(const Model<T>&, const TokenSeq&, int, int, int, int);

MUNMT_INSTANTIATE(float)
MUNMT_INSTANTIATE(double)
#undef MUNMT_INSTANTIATE

}  // namespace munmt::nn
