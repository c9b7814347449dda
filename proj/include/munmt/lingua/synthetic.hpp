#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "munmt/lingua/corpus.hpp"

namespace munmt::lingua {

// How latent concept sentences are drawn.
//   Uniform: every position i.i.d. uniform over the concepts.
//   Markov:  a seeded sparse first-order chain; each concept has a handful of
//            successors. Gives each language the same sequential structure, which
//            is what lets the unsupervised pair be identified from mono data.
enum class LatentModel { Uniform, Markov };

std::string to_string(LatentModel model);
LatentModel parse_latent_model(const std::string& text);

struct WorldConfig {
  int num_languages = 3;
  int concepts = 64;  // vocabulary size per language
  int min_len = 4;
  int max_len = 10;
  int mono_lines = 10000;
  int parallel_pairs = 5000;
  int test_pairs = 500;
  int parallel_src = 0;
  int parallel_tgt = 1;
  int target_src = 0;
  int target_tgt = 2;
  int reordered_language = 1;  // adjacent-pair swap; -1 for none
  LatentModel latent = LatentModel::Uniform;
  int markov_successors = 4;
  int shared_concepts = 0;  // concepts rendered with one surface string in every language

  void validate() const;
};

using LatentSentence = std::vector<int>;

struct GoldTestSet {
  int src = 0;
  int tgt = 0;
  std::vector<SentencePair> pairs;
};

struct SyntheticWorld {
  WorldConfig config;
  std::vector<LanguageId> languages;
  Vocabulary vocab;
  std::vector<MonoCorpus> mono;
  ParallelCorpus parallel;
  std::vector<GoldTestSet> tests;  // all K*(K-1) directed pairs, from one shared latent sample
  std::vector<std::vector<TokenId>> surface;  // [language][concept] -> token id

  TokenSeq render(const LatentSentence& latent, int language) const;
  LatentSentence to_latent(const TokenSeq& seq, int language) const;
  TokenSeq translate(const TokenSeq& seq, int from, int to) const;
  const GoldTestSet& test(int src, int tgt) const;
};

// Pure function of (seed, cfg).
SyntheticWorld gen_synthetic_world(std::uint64_t seed, const WorldConfig& cfg);

}  // namespace munmt::lingua
