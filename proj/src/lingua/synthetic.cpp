#include "munmt/lingua/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "munmt/common/rng.hpp"

namespace munmt::lingua {
namespace {

enum Stream : std::uint64_t { kSurface = 1, kChain = 2, kMono = 100, kParallel = 200, kTest = 300 };

// Sparse first-order chain over concepts.
struct Chain {
  std::vector<double> start;
  std::vector<std::vector<int>> successors;
  std::vector<std::vector<double>> weights;
};

std::vector<double> dirichlet(Rng& rng, std::size_t n) {
  std::vector<double> w(n);
  double total = 0;
  for (auto& x : w) total += (x = rng.gamma(1.0));
  for (auto& x : w) x /= total;
  return w;
}

std::size_t draw(Rng& rng, const std::vector<double>& weights) {
  double u = rng.uniform();
  for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

Chain make_chain(std::uint64_t seed, const WorldConfig& cfg) {
  Rng rng(mix_seed(seed, kChain));
  Chain chain;
  const auto n = static_cast<std::size_t>(cfg.concepts);
  chain.start = dirichlet(rng, n);
  const auto k = static_cast<std::size_t>(std::min(cfg.markov_successors, cfg.concepts));
  chain.successors.resize(n);
  chain.weights.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    // Partial Fisher-Yates: first k entries are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + rng.below(n - i)]);
    chain.successors[c].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
    chain.weights[c] = dirichlet(rng, k);
  }
  return chain;
}

LatentSentence sample_latent(Rng& rng, const WorldConfig& cfg, const Chain& chain) {
  const auto len = static_cast<std::size_t>(rng.between(cfg.min_len, cfg.max_len));
  LatentSentence s(len);
  if (cfg.latent == LatentModel::Uniform) {
    for (auto& c : s) c = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.concepts)));
    return s;
  }
  s[0] = static_cast<int>(draw(rng, chain.start));
  for (std::size_t i = 1; i < len; ++i) {
    const auto prev = static_cast<std::size_t>(s[i - 1]);
    s[i] = chain.successors[prev][draw(rng, chain.weights[prev])];
  }
  return s;
}

// Draws `count` latent sentences never produced before in this world.
std::vector<LatentSentence> sample_unique(Rng& rng, const WorldConfig& cfg, const Chain& chain, int count,
                                          std::set<LatentSentence>& used) {
  std::vector<LatentSentence> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t attempts = 0;
  const std::size_t limit = static_cast<std::size_t>(count) * 100 + 1000;
  while (out.size() < static_cast<std::size_t>(count)) {
    if (++attempts > limit) throw std::runtime_error("synthetic world: latent space too small for requested sizes");
    auto s = sample_latent(rng, cfg, chain);
    if (used.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string to_string(LatentModel model) { return model == LatentModel::Uniform ? "uniform" : "markov"; }

LatentModel parse_latent_model(const std::string& text) {
  if (text == "uniform") return LatentModel::Uniform;
  if (text == "markov") return LatentModel::Markov;
  throw std::invalid_argument("unknown latent model: " + text);
}

void WorldConfig::validate() const {
  const auto lang_ok = [this](int l) { return l >= 0 && l < num_languages; };
  if (num_languages < 2 || num_languages > 26) throw std::invalid_argument("world: num_languages must be in [2, 26]");
  if (concepts < 1) throw std::invalid_argument("world: concepts must be positive");
  if (min_len < 1 || max_len < 1) throw std::invalid_argument("world: sentence lengths must be positive");
  if (min_len > max_len) throw std::invalid_argument("world: sentence length range inverted");
  if (mono_lines < 1 || parallel_pairs < 1 || test_pairs < 1) throw std::invalid_argument("world: corpus sizes must be positive");
  if (!lang_ok(parallel_src) || !lang_ok(parallel_tgt) || parallel_src == parallel_tgt) {
    throw std::invalid_argument("world: invalid parallel pair");
  }
  if (!lang_ok(target_src) || !lang_ok(target_tgt) || target_src == target_tgt) {
    throw std::invalid_argument("world: invalid target pair");
  }
  if (reordered_language != -1 && !lang_ok(reordered_language)) throw std::invalid_argument("world: invalid reordered language");
  if (markov_successors < 1) throw std::invalid_argument("world: markov_successors must be positive");
  if (shared_concepts < 0 || shared_concepts > concepts) throw std::invalid_argument("world: invalid shared_concepts");
}

TokenSeq SyntheticWorld::render(const LatentSentence& latent, int language) const {
  const auto& table = surface.at(static_cast<std::size_t>(language));
  TokenSeq out(latent.size());
  for (std::size_t i = 0; i < latent.size(); ++i) out[i] = table.at(static_cast<std::size_t>(latent[i]));
  if (language == config.reordered_language) {
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  }
  return out;
}

LatentSentence SyntheticWorld::to_latent(const TokenSeq& seq, int language) const {
  const auto& table = surface.at(static_cast<std::size_t>(language));
  LatentSentence out(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto it = std::find(table.begin(), table.end(), seq[i]);
    if (it == table.end()) throw std::invalid_argument("token does not belong to language L" + std::to_string(language));
    out[i] = static_cast<int>(it - table.begin());
  }
  if (language == config.reordered_language) {
    for (std::size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
  }
  return out;
}

TokenSeq SyntheticWorld::translate(const TokenSeq& seq, int from, int to) const {
  return render(to_latent(seq, from), to);
}

const GoldTestSet& SyntheticWorld::test(int src, int tgt) const {
  for (const auto& t : tests) {
    if (t.src == src && t.tgt == tgt) return t;
  }
  throw std::out_of_range("no test set for the requested direction");
}

SyntheticWorld gen_synthetic_world(std::uint64_t seed, const WorldConfig& cfg) {
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.num_languages);
  const auto C = static_cast<std::size_t>(cfg.concepts);
  const auto shared = static_cast<std::size_t>(cfg.shared_concepts);

  // Surface strings: language l writes its private tokens as "<letter><index>",
  // shared concepts as "#<index>". Private indices are a per-language permutation.
  std::vector<std::string> tokens(Vocabulary::reserved_tokens());
  std::vector<std::vector<std::string>> surface_text(K, std::vector<std::string>(C));
  Rng surface_rng(mix_seed(seed, kSurface));
  for (std::size_t c = 0; c < shared; ++c) {
    for (std::size_t l = 0; l < K; ++l) surface_text[l][c] = "#" + std::to_string(c);
  }
  for (std::size_t l = 0; l < K; ++l) {
    std::vector<std::size_t> perm(C - shared);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[surface_rng.below(i)]);
    for (std::size_t c = shared; c < C; ++c) {
      surface_text[l][c] = std::string(1, static_cast<char>('a' + l)) + std::to_string(perm[c - shared]);
    }
  }
  for (std::size_t l = 0; l < K; ++l) {
    std::vector<std::string> private_tokens(surface_text[l].begin() + static_cast<std::ptrdiff_t>(shared),
                                            surface_text[l].end());
    std::sort(private_tokens.begin(), private_tokens.end(), [](const std::string& a, const std::string& b) {
      return std::stoi(a.substr(1)) < std::stoi(b.substr(1));
    });
    tokens.insert(tokens.end(), private_tokens.begin(), private_tokens.end());
  }
  for (std::size_t c = 0; c < shared; ++c) tokens.push_back("#" + std::to_string(c));
  SyntheticWorld world{cfg, make_languages(cfg.num_languages), Vocabulary::from_tokens(tokens), {}, {}, {}, {}};
  world.surface.assign(K, std::vector<TokenId>(C));
  for (std::size_t l = 0; l < K; ++l) {
    for (std::size_t c = 0; c < C; ++c) world.surface[l][c] = world.vocab.id(surface_text[l][c]);
  }

  const Chain chain = make_chain(seed, cfg);
  std::set<LatentSentence> used;

  for (std::size_t l = 0; l < K; ++l) {
    Rng rng(mix_seed(seed, kMono + l));
    MonoCorpus corpus{world.languages[l], {}};
    for (const auto& s : sample_unique(rng, cfg, chain, cfg.mono_lines, used)) {
      corpus.lines.push_back(world.render(s, static_cast<int>(l)));
    }
    world.mono.push_back(std::move(corpus));
  }

  {
    Rng rng(mix_seed(seed, kParallel));
    world.parallel.src_language = world.languages[static_cast<std::size_t>(cfg.parallel_src)];
    world.parallel.tgt_language = world.languages[static_cast<std::size_t>(cfg.parallel_tgt)];
    for (const auto& s : sample_unique(rng, cfg, chain, cfg.parallel_pairs, used)) {
      world.parallel.pairs.emplace_back(world.render(s, cfg.parallel_src), world.render(s, cfg.parallel_tgt));
    }
  }

  {
    Rng rng(mix_seed(seed, kTest));
    const auto latents = sample_unique(rng, cfg, chain, cfg.test_pairs, used);
    for (int a = 0; a < cfg.num_languages; ++a) {
      for (int b = 0; b < cfg.num_languages; ++b) {
        if (a == b) continue;
        GoldTestSet t{a, b, {}};
        for (const auto& s : latents) t.pairs.emplace_back(world.render(s, a), world.render(s, b));
        world.tests.push_back(std::move(t));
      }
    }
  }
  return world;
}

}  // namespace munmt::lingua
