#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "munmt/common/rng.hpp"
#include "munmt/lingua/vocabulary.hpp"
#include "munmt/model/tape.hpp"

namespace munmt::nn {

using ad::Matrix;
using lingua::TokenSeq;

struct ModelConfig {
  int num_layers = 2;
  int hidden_dim = 64;
  int ffn_dim = 256;
  int num_heads = 4;
  int max_len = 32;
  int num_languages = 3;
  int vocab_size = 64;
  double dropout_rate = 0.1;
  int precision = 32;  // 32 or 64

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Closed-form parameter count; see README for the derivation.
std::int64_t parameter_count(const ModelConfig& cfg);

// Indices of one attention block's tensors. wo/bo hold one entry per language
// for decoder blocks and a single entry for encoder blocks.
struct AttentionSlots {
  int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1;
  std::vector<int> wo, bo;
};

struct FeedForwardSlots {
  int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

struct NormSlots {
  int gain = -1, bias = -1;
};

struct EncoderLayerSlots {
  NormSlots norm_attn;
  AttentionSlots self;
  NormSlots norm_ffn;
  FeedForwardSlots ffn;
};

struct DecoderLayerSlots {
  NormSlots norm_self;
  AttentionSlots self;
  NormSlots norm_cross;
  AttentionSlots cross;
  NormSlots norm_ffn;
  FeedForwardSlots ffn;
};

// Gradient storage shaped like the model's parameter list.
template <class T>
using Gradients = std::vector<Matrix<T>>;

// Encoder-decoder transformer conditioned on the target language. The encoder
// is language-agnostic; the decoder adds a per-language embedding and uses a
// per-language output map in every self- and cross-attention block.
template <class T>
class Model {
 public:
  static Model init(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Matrix<T>>& params() const { return params_; }
  std::vector<Matrix<T>>& params() { return params_; }
  std::int64_t parameter_count() const;
  int slot(const std::string& name) const;
  // Parameter tensors owned by one language (decoder embedding and output maps).
  std::vector<int> language_slots(int language) const;
  Gradients<T> zero_gradients() const;
  // FNV-1a over the raw parameter bytes.
  std::uint64_t checksum() const;

  int token_embedding = -1;  // tied with the output projection
  int output_bias = -1;
  int position_embedding = -1;
  std::vector<int> language_embedding;
  std::vector<EncoderLayerSlots> encoder;
  NormSlots encoder_norm;
  std::vector<DecoderLayerSlots> decoder;
  NormSlots decoder_norm;

  void write(std::ostream& out) const;
  static Model read(std::istream& in);
  // Reads a model section and checks it against an expected configuration.
  static Model read(std::istream& in, const ModelConfig& expected);

  friend bool operator==(const Model& a, const Model& b) {
    return a.cfg_ == b.cfg_ && a.names_ == b.names_ && a.params_ == b.params_;
  }

 private:
  explicit Model(const ModelConfig& cfg);
  int add(const std::string& name, int rows, int cols, bool random_init);
  AttentionSlots add_attention(const std::string& prefix, int languages);

  ModelConfig cfg_;
  std::vector<std::string> names_;
  std::vector<Matrix<T>> params_;
  std::vector<bool> random_init_;
};

// Binds model parameters to tape leaves on first use. With a gradient set the
// leaves accumulate into it; without one they are constants.
template <class T>
class Binder {
 public:
  Binder(ad::Tape<T>& tape, const Model<T>& model, Gradients<T>* grads = nullptr);
  ad::Var operator()(int slot);
  ad::Tape<T>& tape() { return tape_; }
  const Model<T>& model() const { return model_; }

 private:
  ad::Tape<T>& tape_;
  const Model<T>& model_;
  Gradients<T>* grads_;
  std::vector<ad::Var> bound_;
};

// Dropout is active only when rng is set and rate > 0.
template <class T>
struct ForwardMode {
  T dropout = T(0);
  Rng* rng = nullptr;

  static ForwardMode eval() { return {}; }
};

struct PackedSegments {
  std::vector<ad::Segment> segments;
  int rows = 0;
};

// Encoder input is src + EOS.
template <class T>
ad::Var encode(Binder<T>& bind, const std::vector<TokenSeq>& sources, const ForwardMode<T>& mode,
               PackedSegments* layout);

// Teacher-forced decoder: input BOS + tgt, predicting tgt + EOS. Returns the
// 1x1 summed negative log-likelihood. per_token, if given, receives log p per
// predicted position in packed order.
template <class T>
ad::Var teacher_forced_nll(Binder<T>& bind, const std::vector<TokenSeq>& sources,
                           const std::vector<TokenSeq>& targets, int tgt_lang, const ForwardMode<T>& mode,
                           std::vector<T>* per_token = nullptr, std::int64_t* token_count = nullptr);

// Decoder output distributions (log-softmax rows) for teacher-forced input.
template <class T>
Matrix<T> teacher_forced_log_probs(const Model<T>& model, const TokenSeq& src, const TokenSeq& tgt, int tgt_lang);

template <class T>
struct LogProb {
  T total = 0;
  std::vector<T> per_token;  // one entry per target token plus EOS
};

// log p(tgt | src, tgt_lang) in evaluation mode.
template <class T>
LogProb<T> log_prob(const Model<T>& model, const TokenSeq& src, int src_lang, const TokenSeq& tgt, int tgt_lang);

// Encoder states for one source in evaluation mode (rows = len + 1).
template <class T>
Matrix<T> encoder_output(const Model<T>& model, const TokenSeq& src);

// Same parameters at another floating-point precision.
template <class U, class T>
Model<U> convert(const Model<T>& model) {
  ModelConfig cfg = model.config();
  cfg.precision = static_cast<int>(sizeof(U) * 8);
  Rng unused(0);
  Model<U> out = Model<U>::init(cfg, unused);
  for (std::size_t i = 0; i < model.params().size(); ++i) out.params()[i] = model.params()[i].template cast<U>();
  return out;
}

void check_sequence(const ModelConfig& cfg, const TokenSeq& seq);
void check_language(const ModelConfig& cfg, int language);

extern template class Model<float>;
extern template class Model<double>;
extern template class Binder<float>;
extern template class Binder<double>;

}  // namespace munmt::nn
