#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "munmt/lingua/corpus.hpp"
#include "munmt/lingua/masking.hpp"
#include "munmt/lingua/synthetic.hpp"

using namespace munmt;
using namespace munmt::lingua;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / ("munmt_lingua_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

WorldConfig small_world() {
  WorldConfig cfg;
  cfg.concepts = 16;
  cfg.mono_lines = 300;
  cfg.parallel_pairs = 200;
  cfg.test_pairs = 50;
  return cfg;
}

}  // namespace

TEST(Vocabulary, FrequencyThenLexicographicOrder) {
  const auto v = Vocabulary::build({{"a b", "a c"}}, 8, 1);
  const std::vector<std::string> expected{"<pad>", "<s>", "</s>", "<unk>", "<mask>", "a", "b", "c"};
  EXPECT_EQ(v.tokens(), expected);
}

TEST(Vocabulary, MinFrequencyExcludesRareTokens) {
  const auto v = Vocabulary::build({{"a b", "a c"}}, 8, 2);
  EXPECT_EQ(v.size(), 6u);
  EXPECT_FALSE(v.contains("b"));
  EXPECT_FALSE(v.contains("c"));
  EXPECT_EQ(v.encode("b"), TokenSeq{kUnk});
}

TEST(Vocabulary, Errors) {
  EXPECT_THROW(
      {
        try {
          Vocabulary::build({{"", "  "}}, 8, 1);
        } catch (const std::invalid_argument& e) {
          EXPECT_STREQ(e.what(), "empty corpus");
          throw;
        }
      },
      std::invalid_argument);
  EXPECT_THROW(
      {
        try {
          Vocabulary::build({{"a b"}}, 6, 1);
        } catch (const std::invalid_argument& e) {
          EXPECT_STREQ(e.what(), "vocab too small");
          throw;
        }
      },
      std::invalid_argument);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b", "c", "d", "e", "f"}), std::invalid_argument);
  EXPECT_THROW(Vocabulary::from_tokens({"<pad>", "<s>", "</s>", "<unk>", "<mask>", "x", "x"}), std::invalid_argument);
}

TEST(Vocabulary, TruncatesToMaxSizeByFrequency) {
  // 10k lines over a skewed token distribution.
  Rng rng(11);
  std::vector<std::string> lines;
  for (int i = 0; i < 10000; ++i) {
    std::string line;
    const auto n = rng.between(3, 9);
    for (int j = 0; j < n; ++j) {
      // Squaring a uniform skews toward small ids, giving distinct frequencies.
      const double u = rng.uniform();
      line += (j ? " " : "") + ("w" + std::to_string(static_cast<int>(u * u * 200)));
    }
    lines.push_back(line);
  }
  const auto v = Vocabulary::build({lines}, 64, 1);
  ASSERT_EQ(v.size(), 64u);

  // Independent count: sort every token occurrence and run-length encode.
  std::vector<std::string> all;
  for (const auto& l : lines) {
    std::size_t i = 0;
    while (i < l.size()) {
      const auto j = l.find(' ', i);
      all.push_back(l.substr(i, j == std::string::npos ? std::string::npos : j - i));
      if (j == std::string::npos) break;
      i = j + 1;
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<std::pair<long, std::string>> runs;  // (-count, token) sorts as required
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j] == all[i]) ++j;
    runs.emplace_back(-static_cast<long>(j - i), all[i]);
    i = j;
  }
  std::sort(runs.begin(), runs.end());
  for (std::size_t k = 0; k < 59; ++k) EXPECT_EQ(v.token(static_cast<TokenId>(k + 5)), runs[k].second) << k;
}

TEST(Vocabulary, EncodeDecode) {
  const auto v = Vocabulary::build({{"a b", "a c"}}, 8, 1);
  EXPECT_EQ(v.encode("a b a"), (TokenSeq{v.id("a"), v.id("b"), v.id("a")}));
  EXPECT_EQ(v.decode(v.encode("a b a")), "a b a");
  EXPECT_EQ(v.encode("a zz b"), (TokenSeq{v.id("a"), kUnk, v.id("b")}));
}

TEST(Vocabulary, RoundTripProperty) {
  const auto world = gen_synthetic_world(3, small_world());
  const auto& v = world.vocab;
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto n = rng.between(0, 20);
    for (int i = 0; i < n; ++i) {
      text += (i ? " " : "") + v.token(static_cast<TokenId>(rng.between(0, static_cast<std::int64_t>(v.size()) - 1)));
    }
    EXPECT_EQ(v.decode(v.encode(text)), text);
  }
}

TEST(Vocabulary, SaveLoadKeepsIds) {
  const auto world = gen_synthetic_world(3, small_world());
  const auto path = temp_dir() / "vocab.txt";
  world.vocab.save(path);
  const auto loaded = Vocabulary::load(path);
  EXPECT_EQ(loaded, world.vocab);
  EXPECT_EQ(loaded.id("<mask>"), kMask);
}

TEST(Corpus, LoaderDropsOverlongLines) {
  const auto v = Vocabulary::build({{"a b c"}}, 8, 1);
  const auto path = temp_dir() / "mono.txt";
  {
    std::ofstream out(path);
    out << "a b\n" << "a b c a b c\n" << "\n" << "c\n";
  }
  LoadStats stats;
  const auto corpus = load_mono(path, {0, "L0"}, v, 4, &stats);
  EXPECT_EQ(corpus.lines.size(), 2u);
  EXPECT_EQ(stats.dropped_too_long, 1u);
  EXPECT_EQ(stats.dropped_empty, 1u);
  for (const auto& l : corpus.lines) EXPECT_LE(l.size(), 4u);
}

TEST(Corpus, ParallelLineCountMismatch) {
  const auto v = Vocabulary::build({{"a b c"}}, 8, 1);
  const auto dir = temp_dir();
  std::ofstream(dir / "p.src") << "a\nb\n";
  std::ofstream(dir / "p.tgt") << "a\n";
  EXPECT_THROW(load_parallel(dir / "p.src", dir / "p.tgt", {0, "L0"}, {1, "L1"}, v), std::invalid_argument);
}

TEST(Corpus, ValidateRejectsSameLanguagePair) {
  const auto v = Vocabulary::build({{"a b c"}}, 8, 1);
  ParallelCorpus c{{0, "L0"}, {0, "L0"}, {{{5}, {6}}}};
  EXPECT_THROW(validate(c, v, 100), std::invalid_argument);
}

TEST(Masking, SpanAndPositions) {
  Rng rng(1);
  const TokenSeq seq{10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  for (int i = 0; i < 500; ++i) {
    const auto ex = mass_mask(seq, rng);
    ASSERT_EQ(ex.span_len, 5u);
    ASSERT_EQ(ex.input.size(), seq.size());
    for (std::size_t p = 0; p < seq.size(); ++p) {
      const bool in_span = p >= ex.span_start && p < ex.span_start + ex.span_len;
      EXPECT_EQ(ex.input[p], in_span ? kMask : seq[p]);
    }
    TokenSeq rebuilt = ex.input;
    std::copy(ex.target.begin(), ex.target.end(), rebuilt.begin() + static_cast<std::ptrdiff_t>(ex.span_start));
    EXPECT_EQ(rebuilt, seq);
  }
}

TEST(Masking, TooShort) {
  Rng rng(1);
  try {
    mass_mask({7}, rng);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "sequence too short to mask");
  }
}

TEST(Masking, LengthTwoStartDistribution) {
  // Branches: 0.2 -> start 0, 0.2 -> start 1, 0.6 -> uniform over {0, 1}.
  const double analytic = 0.2 + 0.6 * 0.5;
  Rng rng(2);
  int zero = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zero += mass_mask({5, 6}, rng).span_start == 0;
  EXPECT_NEAR(static_cast<double>(zero) / n, analytic, 0.01);
}

TEST(Masking, LengthTenStartDistribution) {
  Rng rng(3);
  std::vector<int> counts(6, 0);
  const int n = 100000;
  const TokenSeq seq(10, 7);
  for (int i = 0; i < n; ++i) ++counts.at(mass_mask(seq, rng).span_start);
  EXPECT_NEAR(counts[0] / double(n), 0.3, 0.01);
  EXPECT_NEAR(counts[5] / double(n), 0.3, 0.01);
  for (int s = 1; s <= 4; ++s) EXPECT_NEAR(counts[static_cast<std::size_t>(s)] / double(n), 0.1, 0.01);
}

TEST(Masking, MiddleStartClampedWhenSpanIsLong) {
  MaskPolicy policy;
  policy.span_ratio = 0.8;  // len 10 -> span 8, valid starts {0,1,2}, middle start 5 clamps to 2
  const auto ex = mask_at(TokenSeq(10, 7), 5, policy);
  EXPECT_EQ(ex.span_len, 8u);
  EXPECT_EQ(ex.span_start, 2u);
  policy.p_start_zero = 0;
  policy.p_start_middle = 1;
  Rng rng(4);
  EXPECT_EQ(mass_mask(TokenSeq(10, 7), rng, policy).span_start, 2u);
}

TEST(Synthetic, Deterministic) {
  const auto a = gen_synthetic_world(7, small_world());
  const auto b = gen_synthetic_world(7, small_world());
  EXPECT_EQ(a.vocab, b.vocab);
  for (std::size_t l = 0; l < a.mono.size(); ++l) EXPECT_EQ(a.mono[l].lines, b.mono[l].lines);
  EXPECT_EQ(a.parallel.pairs, b.parallel.pairs);
  const auto c = gen_synthetic_world(8, small_world());
  EXPECT_NE(a.mono[0].lines, c.mono[0].lines);
}

TEST(Synthetic, GoldPairsAreExactAndCompose) {
  auto cfg = small_world();
  cfg.latent = LatentModel::Markov;
  const auto w = gen_synthetic_world(7, cfg);
  ASSERT_EQ(w.tests.size(), 6u);
  const auto& t02 = w.test(0, 2);
  const auto& t01 = w.test(0, 1);
  const auto& t12 = w.test(1, 2);
  for (std::size_t i = 0; i < t02.pairs.size(); ++i) {
    const auto& [x, z] = t02.pairs[i];
    EXPECT_EQ(w.translate(x, 0, 2), z);
    EXPECT_EQ(t01.pairs[i].first, x);
    EXPECT_EQ(t12.pairs[i].second, z);
    EXPECT_EQ(w.translate(w.translate(x, 0, 1), 1, 2), z);
  }
  for (const auto& [x, y] : w.parallel.pairs) EXPECT_EQ(w.translate(x, 0, 1), y);
}

TEST(Synthetic, LanguagesAreNotRelabelings) {
  const auto w = gen_synthetic_world(7, small_world());
  // L1 swaps adjacent positions: its latent order differs from surface order.
  const LatentSentence s{0, 1, 2, 3, 4};
  const auto r1 = w.render(s, 1);
  EXPECT_EQ(r1[0], w.surface[1][1]);
  EXPECT_EQ(r1[1], w.surface[1][0]);
  EXPECT_EQ(r1[4], w.surface[1][4]);
  EXPECT_EQ(w.to_latent(r1, 1), s);
  // Private token sets are disjoint across languages.
  std::set<TokenId> seen;
  for (const auto& table : w.surface) {
    for (const auto id : table) EXPECT_TRUE(seen.insert(id).second);
  }
}

TEST(Synthetic, MonoCorporaUseDisjointLatentSamples) {
  const auto w = gen_synthetic_world(9, small_world());
  std::set<LatentSentence> latents;
  std::size_t total = 0;
  for (std::size_t l = 0; l < w.mono.size(); ++l) {
    for (const auto& line : w.mono[l].lines) {
      latents.insert(w.to_latent(line, static_cast<int>(l)));
      ++total;
      EXPECT_GE(line.size(), 4u);
      EXPECT_LE(line.size(), 10u);
    }
  }
  EXPECT_EQ(latents.size(), total);
}

TEST(Synthetic, UniformUnigramsWithinChiSquareBound) {
  WorldConfig cfg;
  cfg.mono_lines = 10000;
  cfg.parallel_pairs = 10;
  cfg.test_pairs = 10;
  const auto w = gen_synthetic_world(21, cfg);
  for (const auto& corpus : w.mono) {
    // Independent count keyed by surface token id.
    std::map<TokenId, long> counts;
    long total = 0;
    for (const auto& line : corpus.lines) {
      for (const auto id : line) {
        ++counts[id];
        ++total;
      }
    }
    ASSERT_EQ(counts.size(), 64u);
    const double expected = static_cast<double>(total) / 64.0;
    double chi2 = 0;
    for (const auto& [id, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    // 63 degrees of freedom: mean 63, sd sqrt(126); 3-sigma bound.
    EXPECT_LT(chi2, 63.0 + 3.0 * std::sqrt(126.0)) << "language " << corpus.language.name;
  }
}

TEST(Synthetic, SharedConceptsUseOneSurfaceString) {
  auto cfg = small_world();
  cfg.shared_concepts = 4;
  const auto w = gen_synthetic_world(1, cfg);
  EXPECT_EQ(w.vocab.size(), 5u + 3u * 12u + 4u);
  for (int c = 0; c < 4; ++c) {
    EXPECT_EQ(w.surface[0][static_cast<std::size_t>(c)], w.surface[2][static_cast<std::size_t>(c)]);
  }
  for (const auto& [x, z] : w.test(0, 2).pairs) EXPECT_EQ(w.translate(x, 0, 2), z);
}

TEST(Synthetic, InvalidConfig) {
  auto cfg = small_world();
  cfg.mono_lines = 0;
  EXPECT_THROW(gen_synthetic_world(1, cfg), std::invalid_argument);
  cfg = small_world();
  cfg.min_len = 8;
  cfg.max_len = 3;
  EXPECT_THROW(gen_synthetic_world(1, cfg), std::invalid_argument);
  cfg = small_world();
  cfg.parallel_tgt = cfg.parallel_src;
  EXPECT_THROW(gen_synthetic_world(1, cfg), std::invalid_argument);
}
