#include <gtest/gtest.h>

#include <cmath>

#include <json.hpp>

#include "gradcheck.hpp"
#include "munmt/lingua/synthetic.hpp"
#include "munmt/objectives/objectives.hpp"

using namespace munmt;
using namespace munmt::obj;
using nn::ForwardMode;
using nn::Model;
using nn::ModelConfig;

namespace {

ModelConfig small_config(int precision, int vocab) {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.ffn_dim = 32;
  cfg.num_heads = 2;
  cfg.max_len = 16;
  cfg.vocab_size = vocab;
  cfg.precision = precision;
  return cfg;
}

lingua::WorldConfig tiny_world() {
  lingua::WorldConfig w;
  w.concepts = 10;
  w.mono_lines = 40;
  w.parallel_pairs = 20;
  w.test_pairs = 10;
  return w;
}

template <class T>
Translator<T> copy_translator() {
  return [](const Model<T>&, const std::vector<TokenSeq>& xs, int, int) { return xs; };
}

template <class T>
Translator<T> world_translator(const lingua::SyntheticWorld& w) {
  return [&w](const Model<T>&, const std::vector<TokenSeq>& xs, int from, int to) {
    std::vector<TokenSeq> out;
    for (const auto& x : xs) out.push_back(w.translate(x, from, to));
    return out;
  };
}

std::vector<lingua::MaskedExample> masked(const std::vector<TokenSeq>& lines, Rng& rng) {
  std::vector<lingua::MaskedExample> out;
  for (const auto& l : lines) out.push_back(lingua::mass_mask(l, rng));
  return out;
}

bool bitwise_equal(const nn::Gradients<float>& a, const nn::Gradients<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    if (std::memcmp(a[i].data(), b[i].data(), static_cast<std::size_t>(a[i].size()) * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

class ObjectivesTest : public ::testing::Test {
 protected:
  void SetUp() override {
    world_ = std::make_unique<lingua::SyntheticWorld>(lingua::gen_synthetic_world(3, tiny_world()));
    Rng rng(4);
    model_ = std::make_unique<Model<float>>(
        Model<float>::init(small_config(32, static_cast<int>(world_->vocab.size())), rng));
  }

  std::vector<TokenSeq> mono(int lang, std::size_t n) const {
    const auto& lines = world_->mono[static_cast<std::size_t>(lang)].lines;
    return {lines.begin(), lines.begin() + static_cast<std::ptrdiff_t>(n)};
  }
  std::vector<SentencePair> pairs(std::size_t n) const {
    return {world_->parallel.pairs.begin(), world_->parallel.pairs.begin() + static_cast<std::ptrdiff_t>(n)};
  }

  std::unique_ptr<lingua::SyntheticWorld> world_;
  std::unique_ptr<Model<float>> model_;
};

TEST_F(ObjectivesTest, MassOnUniformModelIsLogV) {
  auto m = nn::convert<double>(*model_);
  m.params()[static_cast<std::size_t>(m.token_embedding)].setZero();
  m.params()[static_cast<std::size_t>(m.output_bias)].setZero();
  Rng rng(1);
  const auto r = mass_loss(m, masked(mono(0, 8), rng), 0);
  EXPECT_NEAR(r.value, std::log(static_cast<double>(world_->vocab.size())), 1e-4);
  EXPECT_EQ(r.kind, LossKind::Mass);
  EXPECT_EQ(r.src_lang, 0);
  EXPECT_EQ(r.tgt_lang, 0);
}

TEST_F(ObjectivesTest, EmptyBatchesAndSpansError) {
  EXPECT_THROW(mass_loss(*model_, {}, 0), std::invalid_argument);
  EXPECT_THROW(supervised_loss(*model_, {}, 0, 1), std::invalid_argument);
  EXPECT_THROW(bt_loss(*model_, {}, 0, 1), std::invalid_argument);
  EXPECT_THROW(bt_loss(*model_, mono(0, 2), 0, 0), std::invalid_argument);
  EXPECT_THROW(ct_loss(*model_, pairs(2), 0, 1, 1), std::invalid_argument);
  lingua::MaskedExample bad{{5, 6}, {}, 0, 0};
  EXPECT_THROW(mass_batch({bad}, 0), std::invalid_argument);
}

TEST_F(ObjectivesTest, SupervisedMatchesLogProb) {
  const auto m = nn::convert<double>(*model_);
  const auto batch = pairs(6);
  const auto [xy, yx] = supervised_loss(m, batch, 0, 1);
  double total = 0;
  std::int64_t tokens = 0;
  for (const auto& [x, y] : batch) {
    total += nn::log_prob(m, x, 0, y, 1).total;
    tokens += static_cast<std::int64_t>(y.size()) + 1;
  }
  EXPECT_NEAR(xy.value, -total / static_cast<double>(tokens), 1e-12);
  EXPECT_EQ(xy.token_count, tokens);
  EXPECT_EQ(yx.src_lang, 1);
  EXPECT_EQ(yx.tgt_lang, 0);
}

TEST_F(ObjectivesTest, SymmetricStateGivesSymmetricLosses) {
  auto m = nn::convert<double>(*model_);
  const auto s0 = m.language_slots(0);
  const auto s1 = m.language_slots(1);
  for (std::size_t i = 0; i < s0.size(); ++i) m.params()[static_cast<std::size_t>(s1[i])] = m.params()[static_cast<std::size_t>(s0[i])];
  // Closed under swapping sides: every (a, b) also appears as (b, a).
  std::vector<SentencePair> corpus;
  for (const auto& [x, y] : pairs(5)) {
    corpus.emplace_back(x, y);
    corpus.emplace_back(y, x);
  }
  const auto [xy, yx] = supervised_loss(m, corpus, 0, 1);
  EXPECT_NEAR(xy.value, yx.value, 1e-6);
}

TEST_F(ObjectivesTest, BackTranslationIsSupervisedOnDecodedPair) {
  const auto xs = mono(0, 6);
  const auto r = bt_loss(*model_, xs, 0, 2);
  const auto hyps = decode_translator<float>()(*model_, xs, 0, 2);
  std::vector<SentencePair> synthetic;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!hyps[i].empty()) synthetic.emplace_back(hyps[i], xs[i]);
  }
  ASSERT_FALSE(synthetic.empty());
  const auto [forward, backward] = supervised_loss(*model_, synthetic, 2, 0);
  EXPECT_EQ(r.value, forward.value);
  EXPECT_EQ(r.kind, LossKind::Bt);
  EXPECT_EQ(r.src_lang, 2);
  EXPECT_EQ(r.tgt_lang, 0);
  EXPECT_EQ(r.skipped, static_cast<std::int64_t>(xs.size() - synthetic.size()));
}

TEST_F(ObjectivesTest, BackTranslationWithCopyingDecoderIsReconstruction) {
  const auto xs = mono(1, 6);
  const auto r = bt_loss(*model_, xs, 1, 0, copy_translator<float>());
  CrossEntropyBatch recon{xs, xs, 0, 1};
  EXPECT_EQ(r.value, cross_entropy_value(*model_, recon));
  EXPECT_EQ(r.skipped, 0);
}

TEST_F(ObjectivesTest, EmptyHypothesesAreSkipped) {
  const auto xs = mono(0, 4);
  const Translator<float> half_empty = [](const Model<float>&, const std::vector<TokenSeq>& in, int, int) {
    std::vector<TokenSeq> out = in;
    out[1].clear();
    out[3].clear();
    return out;
  };
  const auto r = bt_loss(*model_, xs, 0, 1, half_empty);
  EXPECT_EQ(r.skipped, 2);
  EXPECT_EQ(r.token_count, static_cast<std::int64_t>(xs[0].size() + xs[2].size() + 2));
}

TEST_F(ObjectivesTest, CrossTranslationWithCopyingDecoderIsSupervised) {
  const auto batch = pairs(5);
  const auto [first, second] = ct_loss(*model_, batch, 0, 1, 2, copy_translator<float>());
  const auto [xy, yx] = supervised_loss(*model_, batch, 0, 1);
  EXPECT_EQ(first.value, xy.value);
  EXPECT_EQ(second.value, yx.value);
  EXPECT_EQ(first.kind, LossKind::Ct);
  EXPECT_EQ(first.pivot_lang, 2);
  EXPECT_EQ(first.src_lang, 0);
  EXPECT_EQ(first.tgt_lang, 1);
  EXPECT_EQ(second.src_lang, 1);
  EXPECT_EQ(second.tgt_lang, 0);
}

TEST_F(ObjectivesTest, CrossTranslationWithPerfectPivotIsGoldSupervised) {
  const auto batch = pairs(5);
  const auto [first, second] = ct_loss(*model_, batch, 0, 1, 2, world_translator<float>(*world_));
  std::vector<SentencePair> gold_zy;
  for (const auto& [x, y] : batch) gold_zy.emplace_back(world_->translate(x, 0, 2), y);
  const auto [zy, yz] = supervised_loss(*model_, gold_zy, 2, 1);
  EXPECT_EQ(first.value, zy.value);
}

TEST_F(ObjectivesTest, CrossTranslationOnFreshModelNearUniform) {
  // Uses a model at the default width, where initial logits are close to flat.
  lingua::WorldConfig wc;
  wc.mono_lines = 20;
  wc.parallel_pairs = 40;
  wc.test_pairs = 5;
  const auto w = lingua::gen_synthetic_world(5, wc);
  ModelConfig cfg;
  cfg.vocab_size = static_cast<int>(w.vocab.size());
  Rng rng(8);
  const auto m = Model<float>::init(cfg, rng);
  const std::vector<SentencePair> batch(w.parallel.pairs.begin(), w.parallel.pairs.begin() + 32);
  const auto [first, second] = ct_loss(m, batch, 0, 1, 2);
  const double log_v = std::log(static_cast<double>(w.vocab.size()));
  EXPECT_NEAR(first.value, log_v, 0.15 * log_v);
}

TEST_F(ObjectivesTest, StopGradientContract) {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto xs = mono(trial % 3, 6);
    const int other = (trial + 1) % 3;
    std::int64_t skipped = 0;
    const auto batch = back_translation_batch(*model_, xs, trial % 3, other, decode_translator<float>(), &skipped);
    ASSERT_FALSE(batch.sources.empty());
    const auto via_bt = term_gradients(*model_, make_record(LossKind::Bt, batch), batch, ForwardMode<float>::eval());
    // The same cross-entropy with the hypotheses supplied as plain data.
    CrossEntropyBatch injected;
    injected.src_lang = other;
    injected.tgt_lang = trial % 3;
    const auto hyps = decode_translator<float>()(*model_, xs, trial % 3, other);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (hyps[i].empty()) continue;
      injected.sources.push_back(hyps[i]);
      injected.targets.push_back(xs[i]);
    }
    const auto direct = term_gradients(*model_, make_record(LossKind::Sup, injected), injected, ForwardMode<float>::eval());
    EXPECT_TRUE(bitwise_equal(via_bt.grads, direct.grads));
    EXPECT_EQ(via_bt.record.value, direct.record.value);
  }
}

TEST_F(ObjectivesTest, GradientsMatchFiniteDifferencesPerKind) {
  Rng rng(12);
  const auto md = nn::convert<double>(*model_);
  std::int64_t skipped = 0;
  std::int64_t ct_skipped[2];
  const std::vector<CrossEntropyBatch> batches{
      mass_batch(masked(mono(0, 4), rng), 0),
      supervised_batches(pairs(4), 0, 1).first,
      back_translation_batch(*model_, mono(2, 4), 2, 0, decode_translator<float>(), &skipped),
      cross_translation_batches(*model_, pairs(4), 0, 1, 2, decode_translator<float>(), ct_skipped).first,
  };
  for (const auto& b : batches) {
    ASSERT_FALSE(b.sources.empty());
    const auto d = checks::check_gradients(md, b, 50, rng);
    EXPECT_LE(d.max_rel_error, 1e-5) << d.worst;
    const auto f = checks::check_gradients(*model_, b, 50, rng);
    EXPECT_LE(f.max_rel_error, 1e-3) << f.worst;
  }
}

TEST_F(ObjectivesTest, RecordJson) {
  LossRecord r;
  r.kind = LossKind::Ct;
  r.src_lang = 0;
  r.tgt_lang = 1;
  r.pivot_lang = 2;
  r.value = 1.5;
  r.token_count = 40;
  const auto j = nlohmann::json::parse(r.to_json(17));
  EXPECT_EQ(j["step"], 17);
  EXPECT_EQ(j["kind"], "CT");
  EXPECT_EQ(j["src"], "L0");
  EXPECT_EQ(j["tgt"], "L1");
  EXPECT_EQ(j["pivot"], "L2");
  EXPECT_EQ(j["value"], 1.5);
  EXPECT_EQ(j["tokens"], 40);
  r.kind = LossKind::Bt;
  r.pivot_lang = -1;
  EXPECT_TRUE(nlohmann::json::parse(r.to_json(1))["pivot"].is_null());
  EXPECT_EQ(parse_loss_kind("MASS"), LossKind::Mass);
  EXPECT_THROW(parse_loss_kind("XX"), std::invalid_argument);
}
