#include "munmt/model/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "munmt/model/serialize.hpp"

namespace munmt::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void ModelConfig::validate() const {
  if (num_layers < 1 || hidden_dim < 1 || ffn_dim < 1 || num_heads < 1 || max_len < 1 || num_languages < 1) {
    throw std::invalid_argument("model config: all dimensions must be >= 1");
  }
  if (hidden_dim % num_heads != 0) throw std::invalid_argument("model config: hidden_dim must be divisible by num_heads");
  if (vocab_size < static_cast<int>(lingua::kMinVocabSize)) throw std::invalid_argument("model config: vocab too small");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("model config: dropout_rate must be in [0, 1)");
  if (precision != 32 && precision != 64) throw std::invalid_argument("model config: precision must be 32 or 64");
}

std::int64_t parameter_count(const ModelConfig& cfg) {
  const std::int64_t V = cfg.vocab_size, d = cfg.hidden_dim, f = cfg.ffn_dim, L = cfg.num_layers,
                     K = cfg.num_languages, P = cfg.max_len + 1;
  const std::int64_t attn_proj = d * d + d;
  const std::int64_t norm = 2 * d;
  const std::int64_t ffn = d * f + f + f * d + d;
  const std::int64_t embeddings = V * d + V + P * d + K * d;
  const std::int64_t enc_layer = norm + 4 * attn_proj + norm + ffn;
  const std::int64_t dec_layer = norm + (3 + K) * attn_proj + norm + (3 + K) * attn_proj + norm + ffn;
  return embeddings + L * enc_layer + norm + L * dec_layer + norm;
}

void check_sequence(const ModelConfig& cfg, const TokenSeq& seq) {
  if (static_cast<int>(seq.size()) > cfg.max_len) {
    throw std::invalid_argument("sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                                std::to_string(cfg.max_len));
  }
  for (const auto id : seq) {
    if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("token id out of vocabulary range");
  }
}

void check_language(const ModelConfig& cfg, int language) {
  if (language < 0 || language >= cfg.num_languages) throw std::invalid_argument("language id out of range");
}

// ---------------------------------------------------------------------------
// Model

template <class T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {}

template <class T>
int Model<T>::add(const std::string& name, int rows, int cols, bool random_init) {
  names_.push_back(name);
  params_.push_back(Matrix<T>::Zero(rows, cols));
  random_init_.push_back(random_init);
  return static_cast<int>(params_.size() - 1);
}

template <class T>
AttentionSlots Model<T>::add_attention(const std::string& prefix, int languages) {
  const int d = cfg_.hidden_dim;
  AttentionSlots a;
  a.wq = add(prefix + ".wq", d, d, true);
  a.bq = add(prefix + ".bq", 1, d, false);
  a.wk = add(prefix + ".wk", d, d, true);
  a.bk = add(prefix + ".bk", 1, d, false);
  a.wv = add(prefix + ".wv", d, d, true);
  a.bv = add(prefix + ".bv", 1, d, false);
  for (int l = 0; l < languages; ++l) {
    const std::string suffix = languages > 1 || prefix.starts_with("dec") ? ".L" + std::to_string(l) : "";
    a.wo.push_back(add(prefix + ".wo" + suffix, d, d, true));
    a.bo.push_back(add(prefix + ".bo" + suffix, 1, d, false));
  }
  return a;
}

template <class T>
Model<T> Model<T>::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.precision != static_cast<int>(sizeof(T) * 8)) throw std::invalid_argument("model config: precision mismatch");
  Model m(cfg);
  const int d = cfg.hidden_dim, f = cfg.ffn_dim, K = cfg.num_languages;
  const auto norm = [&m, d](const std::string& p) {
    NormSlots n{m.add(p + ".gain", 1, d, false), m.add(p + ".bias", 1, d, false)};
    m.params_[static_cast<std::size_t>(n.gain)].setOnes();
    return n;
  };
  const auto ffn = [&m, d, f](const std::string& p) {
    return FeedForwardSlots{m.add(p + ".w1", d, f, true), m.add(p + ".b1", 1, f, false), m.add(p + ".w2", f, d, true),
                            m.add(p + ".b2", 1, d, false)};
  };

  m.token_embedding = m.add("tok_emb", cfg.vocab_size, d, true);
  m.output_bias = m.add("out_bias", 1, cfg.vocab_size, false);
  m.position_embedding = m.add("pos_emb", cfg.max_len + 1, d, true);
  for (int l = 0; l < K; ++l) {
    m.language_embedding.push_back(m.add("dec.lang_emb.L" + std::to_string(l), 1, d, true));
  }
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string p = "enc." + std::to_string(i);
    EncoderLayerSlots layer;
    layer.norm_attn = norm(p + ".norm_attn");
    layer.self = m.add_attention(p + ".self", 1);
    layer.norm_ffn = norm(p + ".norm_ffn");
    layer.ffn = ffn(p + ".ffn");
    m.encoder.push_back(layer);
  }
  m.encoder_norm = norm("enc.norm");
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string p = "dec." + std::to_string(i);
    DecoderLayerSlots layer;
    layer.norm_self = norm(p + ".norm_self");
    layer.self = m.add_attention(p + ".self", K);
    layer.norm_cross = norm(p + ".norm_cross");
    layer.cross = m.add_attention(p + ".cross", K);
    layer.norm_ffn = norm(p + ".norm_ffn");
    layer.ffn = ffn(p + ".ffn");
    m.decoder.push_back(layer);
  }
  m.decoder_norm = norm("dec.norm");

  // Scaled uniform init for every weight matrix and embedding; biases and
  // norm parameters keep their constant init.
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    if (!m.random_init_[i]) continue;
    Matrix<T>& w = m.params_[i];
    const double s = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = static_cast<T>((2.0 * rng.uniform() - 1.0) * s);
  }
  return m;
}

template <class T>
std::int64_t Model<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <class T>
int Model<T>::slot(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  throw std::out_of_range("no parameter named " + name);
}

template <class T>
std::vector<int> Model<T>::language_slots(int language) const {
  check_language(cfg_, language);
  const auto l = static_cast<std::size_t>(language);
  std::vector<int> out{language_embedding[l]};
  for (const auto& layer : decoder) {
    out.push_back(layer.self.wo[l]);
    out.push_back(layer.self.bo[l]);
    out.push_back(layer.cross.wo[l]);
    out.push_back(layer.cross.bo[l]);
  }
  return out;
}

template <class T>
Gradients<T> Model<T>::zero_gradients() const {
  Gradients<T> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(Matrix<T>::Zero(p.rows(), p.cols()));
  return g;
}

template <class T>
std::uint64_t Model<T>::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(p.size()) * sizeof(T); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// Model section layout (little-endian):
//   char[8] "MUNMTMDL", u32 format version, u32 precision bits,
//   i32 num_layers, hidden_dim, ffn_dim, num_heads, max_len, num_languages, vocab_size,
//   f64 dropout_rate, u32 tensor count,
//   per tensor in registration order: u32 name length, name bytes, u32 rows, u32 cols,
//   rows*cols values row-major at the stored precision.
inline constexpr char kModelMagic[8] = {'M', 'U', 'N', 'M', 'T', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

template <class T>
void Model<T>::write(std::ostream& out) const {
  io::write_magic(out, kModelMagic);
  io::write_pod<std::uint32_t>(out, kModelFormatVersion);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg_.precision));
  for (const int v : {cfg_.num_layers, cfg_.hidden_dim, cfg_.ffn_dim, cfg_.num_heads, cfg_.max_len, cfg_.num_languages,
                      cfg_.vocab_size}) {
    io::write_pod<std::int32_t>(out, v);
  }
  io::write_pod<double>(out, cfg_.dropout_rate);
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    io::write_string(out, names_[i]);
    io::write_matrix(out, params_[i]);
  }
  if (!out) throw std::runtime_error("failed writing model section");
}

template <class T>
Model<T> Model<T>::read(std::istream& in) {
  io::expect_magic(in, kModelMagic, "model section");
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kModelFormatVersion) {
    throw std::runtime_error("unsupported model format version " + std::to_string(version));
  }
  ModelConfig cfg;
  cfg.precision = static_cast<int>(io::read_pod<std::uint32_t>(in));
  cfg.num_layers = io::read_pod<std::int32_t>(in);
  cfg.hidden_dim = io::read_pod<std::int32_t>(in);
  cfg.ffn_dim = io::read_pod<std::int32_t>(in);
  cfg.num_heads = io::read_pod<std::int32_t>(in);
  cfg.max_len = io::read_pod<std::int32_t>(in);
  cfg.num_languages = io::read_pod<std::int32_t>(in);
  cfg.vocab_size = io::read_pod<std::int32_t>(in);
  cfg.dropout_rate = io::read_pod<double>(in);
  if (cfg.precision != static_cast<int>(sizeof(T) * 8)) {
    throw std::runtime_error("checkpoint precision " + std::to_string(cfg.precision) + " does not match requested " +
                             std::to_string(sizeof(T) * 8));
  }
  cfg.validate();
  Rng unused(0);
  Model m = init(cfg, unused);
  const auto count = io::read_pod<std::uint32_t>(in);
  if (count != m.params_.size()) throw std::runtime_error("checkpoint tensor count does not match config");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const std::string name = io::read_string(in);
    if (name != m.names_[i]) throw std::runtime_error("checkpoint tensor order mismatch at " + name);
    io::read_matrix(in, m.params_[i]);
  }
  return m;
}

template <class T>
Model<T> Model<T>::read(std::istream& in, const ModelConfig& expected) {
  Model m = read(in);
  ModelConfig a = m.config(), b = expected;
  if (!(a == b)) throw std::runtime_error("config mismatch");
  return m;
}

// ---------------------------------------------------------------------------
// Binder

template <class T>
Binder<T>::Binder(ad::Tape<T>& tape, const Model<T>& model, Gradients<T>* grads)
    : tape_(tape), model_(model), grads_(grads), bound_(model.params().size()) {
  if (grads_ && grads_->size() != model.params().size()) throw std::invalid_argument("gradient set does not match model");
}

template <class T>
ad::Var Binder<T>::operator()(int slot) {
  auto& v = bound_.at(static_cast<std::size_t>(slot));
  if (!v.valid()) {
    const auto s = static_cast<std::size_t>(slot);
    v = tape_.leaf(model_.params()[s], grads_ ? &(*grads_)[s] : nullptr);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Forward pass

namespace {

template <class T>
ad::Var linear(Binder<T>& bind, ad::Var x, int w, int b) {
  auto& tape = bind.tape();
  return tape.add_row(tape.matmul(x, bind(w)), bind(b));
}

template <class T>
ad::Var norm(Binder<T>& bind, ad::Var x, const NormSlots& n) {
  return bind.tape().layer_norm(x, bind(n.gain), bind(n.bias), T(1e-5));
}

template <class T>
ad::Var attention_block(Binder<T>& bind, ad::Var queries, ad::Var memory, const AttentionSlots& s, std::size_t lang,
                        const std::vector<ad::Segment>& q_seg, const std::vector<ad::Segment>& k_seg, bool causal) {
  auto& tape = bind.tape();
  const ad::Var q = linear(bind, queries, s.wq, s.bq);
  const ad::Var k = linear(bind, memory, s.wk, s.bk);
  const ad::Var v = linear(bind, memory, s.wv, s.bv);
  const ad::Var a = tape.attention(q, k, v, q_seg, k_seg, bind.model().config().num_heads, causal);
  return linear(bind, a, s.wo[lang], s.bo[lang]);
}

template <class T>
ad::Var feed_forward(Binder<T>& bind, ad::Var x, const FeedForwardSlots& s) {
  return linear(bind, bind.tape().relu(linear(bind, x, s.w1, s.b1)), s.w2, s.b2);
}

// Packs sequences (with one extra BOS/EOS slot each) into ids and positions.
PackedSegments pack(const std::vector<TokenSeq>& seqs, std::vector<int>& ids, std::vector<int>& positions,
                    bool bos_prefix) {
  PackedSegments layout;
  for (const auto& s : seqs) {
    const int len = static_cast<int>(s.size()) + 1;
    layout.segments.push_back({layout.rows, len});
    layout.rows += len;
    if (bos_prefix) ids.push_back(lingua::kBos);
    ids.insert(ids.end(), s.begin(), s.end());
    if (!bos_prefix) ids.push_back(lingua::kEos);
    for (int p = 0; p < len; ++p) positions.push_back(p);
  }
  return layout;
}

}  // namespace

template <class T>
ad::Var encode(Binder<T>& bind, const std::vector<TokenSeq>& sources, const ForwardMode<T>& mode,
               PackedSegments* layout) {
  const Model<T>& m = bind.model();
  auto& tape = bind.tape();
  if (sources.empty()) throw std::invalid_argument("encode: empty batch");
  for (const auto& s : sources) check_sequence(m.config(), s);
  std::vector<int> ids, positions;
  PackedSegments packed = pack(sources, ids, positions, false);
  const bool drop = mode.rng && mode.dropout > T(0);
  const auto dropout = [&](ad::Var x) { return drop ? tape.dropout(x, mode.dropout, *mode.rng) : x; };

  ad::Var x = tape.add(tape.gather_rows(bind(m.token_embedding), std::move(ids)),
                       tape.gather_rows(bind(m.position_embedding), std::move(positions)));
  x = dropout(x);
  for (const auto& layer : m.encoder) {
    const ad::Var h = norm(bind, x, layer.norm_attn);
    x = tape.add(x, dropout(attention_block(bind, h, h, layer.self, 0, packed.segments, packed.segments, false)));
    x = tape.add(x, dropout(feed_forward(bind, norm(bind, x, layer.norm_ffn), layer.ffn)));
  }
  x = norm(bind, x, m.encoder_norm);
  if (layout) *layout = std::move(packed);
  return x;
}

namespace {

// Decoder logits for BOS-prefixed targets; gold receives tgt + EOS ids.
template <class T>
ad::Var decoder_logits(Binder<T>& bind, ad::Var memory, const PackedSegments& src_layout,
                       const std::vector<TokenSeq>& targets, int tgt_lang, const ForwardMode<T>& mode,
                       std::vector<int>& gold) {
  const Model<T>& m = bind.model();
  auto& tape = bind.tape();
  check_language(m.config(), tgt_lang);
  for (const auto& t : targets) check_sequence(m.config(), t);
  std::vector<int> ids, positions;
  PackedSegments tgt_layout = pack(targets, ids, positions, true);
  for (const auto& t : targets) {
    gold.insert(gold.end(), t.begin(), t.end());
    gold.push_back(lingua::kEos);
  }
  const auto lang = static_cast<std::size_t>(tgt_lang);
  const bool drop = mode.rng && mode.dropout > T(0);
  const auto dropout = [&](ad::Var x) { return drop ? tape.dropout(x, mode.dropout, *mode.rng) : x; };

  ad::Var y = tape.add(tape.gather_rows(bind(m.token_embedding), std::move(ids)),
                       tape.gather_rows(bind(m.position_embedding), std::move(positions)));
  y = tape.add_row(y, bind(m.language_embedding[lang]));
  y = dropout(y);
  for (const auto& layer : m.decoder) {
    ad::Var h = norm(bind, y, layer.norm_self);
    y = tape.add(y, dropout(attention_block(bind, h, h, layer.self, lang, tgt_layout.segments, tgt_layout.segments, true)));
    h = norm(bind, y, layer.norm_cross);
    y = tape.add(y, dropout(attention_block(bind, h, memory, layer.cross, lang, tgt_layout.segments, src_layout.segments,
                                            false)));
    y = tape.add(y, dropout(feed_forward(bind, norm(bind, y, layer.norm_ffn), layer.ffn)));
  }
  y = norm(bind, y, m.decoder_norm);
  return tape.add_row(tape.matmul_bt(y, bind(m.token_embedding)), bind(m.output_bias));
}

}  // namespace

template <class T>
ad::Var teacher_forced_nll(Binder<T>& bind, const std::vector<TokenSeq>& sources,
                           const std::vector<TokenSeq>& targets, int tgt_lang, const ForwardMode<T>& mode,
                           std::vector<T>* per_token, std::int64_t* token_count) {
  if (sources.size() != targets.size()) throw std::invalid_argument("teacher_forced_nll: batch size mismatch");
  PackedSegments src_layout;
  const ad::Var memory = encode(bind, sources, mode, &src_layout);
  std::vector<int> gold;
  const ad::Var logits = decoder_logits(bind, memory, src_layout, targets, tgt_lang, mode, gold);
  if (token_count) *token_count = static_cast<std::int64_t>(gold.size());
  return bind.tape().nll(logits, std::move(gold), per_token);
}

template <class T>
LogProb<T> log_prob(const Model<T>& model, const TokenSeq& src, int src_lang, const TokenSeq& tgt, int tgt_lang) {
  check_language(model.config(), src_lang);
  ad::Tape<T> tape;
  Binder<T> bind(tape, model);
  LogProb<T> out;
  const ad::Var nll = teacher_forced_nll(bind, {src}, {tgt}, tgt_lang, ForwardMode<T>::eval(), &out.per_token);
  out.total = -tape.value(nll)(0, 0);
  return out;
}

template <class T>
Matrix<T> encoder_output(const Model<T>& model, const TokenSeq& src) {
  ad::Tape<T> tape;
  Binder<T> bind(tape, model);
  return tape.value(encode(bind, {src}, ForwardMode<T>::eval(), nullptr));
}

template <class T>
Matrix<T> teacher_forced_log_probs(const Model<T>& model, const TokenSeq& src, const TokenSeq& tgt, int tgt_lang) {
  ad::Tape<T> tape;
  Binder<T> bind(tape, model);
  PackedSegments src_layout;
  const ad::Var memory = encode(bind, {src}, ForwardMode<T>::eval(), &src_layout);
  std::vector<int> gold;
  Matrix<T> logits = tape.value(decoder_logits(bind, memory, src_layout, {tgt}, tgt_lang, ForwardMode<T>::eval(), gold));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T mx = logits.row(r).maxCoeff();
    const T lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    logits.row(r).array() -= lse;
  }
  return logits;
}

template class Model<float>;
template class Model<double>;
template class Binder<float>;
template class Binder<double>;

#define MUNMT_INSTANTIATE(T)                                                                                        \
  template ad::Var encode<T>(Binder<T>&, const std::vector<TokenSeq>&, const ForwardMode<T>&, PackedSegments*);     \
  template ad::Var teacher_forced_nll<T>(Binder<T>&, const std::vector<TokenSeq>&, const std::vector<TokenSeq>&, int, \
                                         const ForwardMode<T>&, std::vector<T>*, std::int64_t*);                     \
  template LogProb<T> log_prob<T>(const Model<T>&, const TokenSeq&, int, const TokenSeq&, int);                      \
  template Matrix<T> encoder_output<T>(const Model<T>&, const TokenSeq&);                                            \
  template Matrix<T> teacher_forced_log_probs<T>(const Model<T>&, const TokenSeq&, const TokenSeq&, int);

MUNMT_INSTANTIATE(float)
MUNMT_INSTANTIATE(double)
#undef MUNMT_INSTANTIATE

}  // namespace munmt::nn
