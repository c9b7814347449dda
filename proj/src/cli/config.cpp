#include "munmt/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace munmt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(v);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// "L0->L2", "0->2" or "0-2".
std::pair<int, int> parse_direction(const std::string& key, std::string v) {
  for (const std::string arrow : {"->", "-"}) {
    const auto pos = v.find(arrow);
    if (pos == std::string::npos) continue;
    auto side = [&](std::string s) {
      s = trim(s);
      if (!s.empty() && (s[0] == 'L' || s[0] == 'l')) s = s.substr(1);
      return parse_int<int>(key, s);
    };
    return {side(v.substr(0, pos)), side(v.substr(pos + arrow.size()))};
  }
  throw ConfigError(key + ": expected a direction like L0->L2, got '" + v + "'");
}

std::string direction_text(std::pair<int, int> d) { return eval::direction_name(d.first, d.second); }

struct Field {
  std::string key;
  std::string doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class Get>
Field int_field(std::string key, std::string doc, Get access) {
  return {key, std::move(doc), [access](const ExperimentConfig& c) { return std::to_string(access(const_cast<ExperimentConfig&>(c))); },
          [access, key](ExperimentConfig& c, const std::string& v) {
            auto& ref = access(c);
            ref = parse_int<std::remove_reference_t<decltype(ref)>>(key, v);
          }};
}

template <class Get>
Field double_field(std::string key, std::string doc, Get access) {
  return {key, std::move(doc), [access](const ExperimentConfig& c) { return fmt(access(const_cast<ExperimentConfig&>(c))); },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_double(key, v); }};
}

template <class Get>
Field bool_field(std::string key, std::string doc, Get access) {
  return {key, std::move(doc),
          [access](const ExperimentConfig& c) { return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false"); },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_bool(key, v); }};
}

template <class Get>
Field string_field(std::string key, std::string doc, Get access) {
  return {key, std::move(doc), [access](const ExperimentConfig& c) { return access(const_cast<ExperimentConfig&>(c)); },
          [access](ExperimentConfig& c, const std::string& v) { access(c) = v; }};
}

// Shared training keys for one phase.
void train_fields(std::vector<Field>& f, const std::string& p, train::TrainConfig ExperimentConfig::*member) {
  auto tc = [member](ExperimentConfig& c) -> train::TrainConfig& { return c.*member; };
  f.push_back(int_field(p + ".steps", "optimizer updates", [tc](ExperimentConfig& c) -> auto& { return tc(c).steps; }));
  f.push_back(int_field(p + ".batch_size", "sentences (pretrain) or tokens (finetune) per batch",
                        [tc](ExperimentConfig& c) -> auto& { return tc(c).batch_size; }));
  f.push_back(double_field(p + ".lr", "peak learning rate", [tc](ExperimentConfig& c) -> auto& { return tc(c).base_lr; }));
  f.push_back(int_field(p + ".warmup_steps", "linear warmup length",
                        [tc](ExperimentConfig& c) -> auto& { return tc(c).warmup_steps; }));
  f.push_back(int_field(p + ".total_decay_steps", "step at which the learning rate reaches 0",
                        [tc](ExperimentConfig& c) -> auto& { return tc(c).total_decay_steps; }));
  f.push_back(double_field(p + ".weight_decay", "decoupled weight decay",
                           [tc](ExperimentConfig& c) -> auto& { return tc(c).weight_decay; }));
  f.push_back({p + ".optimizer", "adam or adamax",
               [tc](const ExperimentConfig& c) { return train::to_string(tc(const_cast<ExperimentConfig&>(c)).optimizer); },
               [tc](ExperimentConfig& c, const std::string& v) {
                 try {
                   tc(c).optimizer = train::parse_optimizer(v);
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(e.what());
                 }
               }});
  f.push_back(double_field(p + ".beta1", "first-moment decay", [tc](ExperimentConfig& c) -> auto& { return tc(c).beta1; }));
  f.push_back(double_field(p + ".beta2", "second-moment decay", [tc](ExperimentConfig& c) -> auto& { return tc(c).beta2; }));
  f.push_back(double_field(p + ".epsilon", "optimizer epsilon", [tc](ExperimentConfig& c) -> auto& { return tc(c).epsilon; }));
  f.push_back(int_field(p + ".eval_every", "steps between BLEU evaluations (0 = never)",
                        [tc](ExperimentConfig& c) -> auto& { return tc(c).eval_every; }));
  f.push_back(int_field(p + ".checkpoint_every", "steps between checkpoints (0 = never)",
                        [tc](ExperimentConfig& c) -> auto& { return tc(c).checkpoint_every; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(int_field("seed", "seed for the world, initialisation and training", [](ExperimentConfig& c) -> auto& { return c.seed; }));
    f.push_back(string_field("output_dir", "root of every artifact", [](ExperimentConfig& c) -> auto& { return c.output_dir; }));
    f.push_back(string_field("data_dir", "corpus directory (empty = <output_dir>/data)",
                             [](ExperimentConfig& c) -> auto& { return c.data_dir; }));

    f.push_back(int_field("world.num_languages", "number of languages K", [](ExperimentConfig& c) -> auto& { return c.world.num_languages; }));
    f.push_back(int_field("world.concepts", "tokens per language", [](ExperimentConfig& c) -> auto& { return c.world.concepts; }));
    f.push_back(int_field("world.min_len", "shortest sentence", [](ExperimentConfig& c) -> auto& { return c.world.min_len; }));
    f.push_back(int_field("world.max_len", "longest sentence", [](ExperimentConfig& c) -> auto& { return c.world.max_len; }));
    f.push_back(int_field("world.mono_lines", "monolingual lines per language", [](ExperimentConfig& c) -> auto& { return c.world.mono_lines; }));
    f.push_back(int_field("world.parallel_pairs", "auxiliary parallel pairs", [](ExperimentConfig& c) -> auto& { return c.world.parallel_pairs; }));
    f.push_back(int_field("world.test_pairs", "test pairs per direction", [](ExperimentConfig& c) -> auto& { return c.world.test_pairs; }));
    f.push_back(int_field("world.parallel_src", "first language of the parallel corpus", [](ExperimentConfig& c) -> auto& { return c.world.parallel_src; }));
    f.push_back(int_field("world.parallel_tgt", "second language of the parallel corpus", [](ExperimentConfig& c) -> auto& { return c.world.parallel_tgt; }));
    f.push_back(int_field("world.target_src", "first language of the unsupervised pair", [](ExperimentConfig& c) -> auto& { return c.world.target_src; }));
    f.push_back(int_field("world.target_tgt", "second language of the unsupervised pair", [](ExperimentConfig& c) -> auto& { return c.world.target_tgt; }));
    f.push_back(int_field("world.reordered_language", "language with adjacent-pair swaps (-1 = none)",
                          [](ExperimentConfig& c) -> auto& { return c.world.reordered_language; }));
    f.push_back({"world.latent", "uniform or markov",
                 [](const ExperimentConfig& c) { return lingua::to_string(c.world.latent); },
                 [](ExperimentConfig& c, const std::string& v) {
                   try {
                     c.world.latent = lingua::parse_latent_model(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    f.push_back(int_field("world.markov_successors", "successors per concept under the markov latent",
                          [](ExperimentConfig& c) -> auto& { return c.world.markov_successors; }));
    f.push_back(int_field("world.shared_concepts", "concepts spelled the same in every language",
                          [](ExperimentConfig& c) -> auto& { return c.world.shared_concepts; }));

    f.push_back(int_field("model.num_layers", "encoder and decoder depth", [](ExperimentConfig& c) -> auto& { return c.model.num_layers; }));
    f.push_back(int_field("model.hidden_dim", "model width", [](ExperimentConfig& c) -> auto& { return c.model.hidden_dim; }));
    f.push_back(int_field("model.ffn_dim", "feed-forward width", [](ExperimentConfig& c) -> auto& { return c.model.ffn_dim; }));
    f.push_back(int_field("model.num_heads", "attention heads", [](ExperimentConfig& c) -> auto& { return c.model.num_heads; }));
    f.push_back(int_field("model.max_len", "longest sequence including EOS", [](ExperimentConfig& c) -> auto& { return c.model.max_len; }));
    f.push_back(double_field("model.dropout", "dropout rate while training", [](ExperimentConfig& c) -> auto& { return c.model.dropout_rate; }));
    f.push_back(int_field("model.precision", "32 or 64", [](ExperimentConfig& c) -> auto& { return c.model.precision; }));

    train_fields(f, "pretrain", &ExperimentConfig::pretrain);
    f.push_back(double_field("pretrain.weight.mass", "MASS loss weight", [](ExperimentConfig& c) -> auto& { return c.pretrain.weights.mass; }));
    f.push_back(double_field("pretrain.weight.sup", "supervised loss weight", [](ExperimentConfig& c) -> auto& { return c.pretrain.weights.sup; }));
    f.push_back({"pretrain.dataset_weights", "comma-separated pick weights, mono L0..LK-1 then parallel (empty = uniform)",
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.pretrain.dataset_weights.size(); ++i) {
                     if (i) s += ",";
                     s += fmt(c.pretrain.dataset_weights[i]);
                   }
                   return s;
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.pretrain.dataset_weights.clear();
                   for (const auto& part : split(v, ',')) c.pretrain.dataset_weights.push_back(parse_double("pretrain.dataset_weights", part));
                 }});

    train_fields(f, "finetune", &ExperimentConfig::finetune);
    f.push_back({"finetune.ablation", "bt, m_bt or full",
                 [](const ExperimentConfig& c) { return train::to_string(c.finetune.ablation); },
                 [](ExperimentConfig& c, const std::string& v) {
                   try {
                     c.finetune.ablation = train::parse_ablation(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    f.push_back(int_field("finetune.patience", "evaluations without improvement before stopping (0 = off)",
                          [](ExperimentConfig& c) -> auto& { return c.finetune.patience; }));
    f.push_back(double_field("finetune.weight.bt", "back-translation loss weight", [](ExperimentConfig& c) -> auto& { return c.finetune.weights.bt; }));
    f.push_back(double_field("finetune.weight.ct", "cross-translation loss weight", [](ExperimentConfig& c) -> auto& { return c.finetune.weights.ct; }));
    f.push_back(int_field("finetune.estep_beam", "beam width of the E-step decode (1 = greedy)",
                          [](ExperimentConfig& c) -> auto& { return c.finetune.estep.beam; }));
    f.push_back(double_field("finetune.length_ratio", "E-step length limit: ratio * source length + offset",
                             [](ExperimentConfig& c) -> auto& { return c.finetune.estep.length_ratio; }));
    f.push_back(int_field("finetune.length_offset", "E-step length limit offset",
                          [](ExperimentConfig& c) -> auto& { return c.finetune.estep.length_offset; }));
    f.push_back(string_field("finetune.init", "checkpoint to start from (empty = <output_dir>/pretrain/final.ckpt)",
                             [](ExperimentConfig& c) -> auto& { return c.finetune_init; }));
    f.push_back(bool_field("finetune.from_scratch", "start from a fresh model instead of a checkpoint",
                           [](ExperimentConfig& c) -> auto& { return c.finetune_from_scratch; }));

    f.push_back(int_field("eval.beam", "beam width when evaluating (1 = greedy)", [](ExperimentConfig& c) -> auto& { return c.eval.beam; }));
    f.push_back({"eval.directions", "comma-separated directions to score, e.g. L0->L2,L2->L0",
                 [](const ExperimentConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.eval.directions.size(); ++i) {
                     if (i) s += ",";
                     s += direction_text(c.eval.directions[i]);
                   }
                   return s;
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.eval.directions.clear();
                   for (const auto& part : split(v, ',')) c.eval.directions.push_back(parse_direction("eval.directions", part));
                   if (c.eval.directions.empty()) throw ConfigError("eval.directions: at least one direction required");
                 }});
    f.push_back({"eval.curve_direction", "direction tabulated by ablate",
                 [](const ExperimentConfig& c) { return direction_text(c.eval.curve_direction); },
                 [](ExperimentConfig& c, const std::string& v) { c.eval.curve_direction = parse_direction("eval.curve_direction", v); }});
    f.push_back(int_field("eval.dev_sentences", "test pairs decoded at periodic evaluations (0 = all)",
                          [](ExperimentConfig& c) -> auto& { return c.eval.dev_sentences; }));
    f.push_back(string_field("eval.checkpoint", "checkpoint for evaluate (empty = the finetune run's final.ckpt)",
                             [](ExperimentConfig& c) -> auto& { return c.eval.checkpoint; }));
    return f;
  }();
  return table;
}

}  // namespace

std::filesystem::path ExperimentConfig::data_path() const {
  return data_dir.empty() ? std::filesystem::path(output_dir) / "data" : std::filesystem::path(data_dir);
}

void ExperimentConfig::validate() const {
  try {
    world.validate();
    nn::ModelConfig m = model;
    m.num_languages = world.num_languages;
    m.vocab_size = std::max(m.vocab_size, static_cast<int>(lingua::kMinVocabSize));
    m.validate();
    pretrain.validate();
    finetune.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  const int K = world.num_languages;
  auto in_range = [K](int l) { return l >= 0 && l < K; };
  for (const auto& [s, t] : eval.directions) {
    if (!in_range(s) || !in_range(t) || s == t) throw ConfigError("eval.directions: bad direction " + direction_text({s, t}));
  }
  if (!in_range(eval.curve_direction.first) || !in_range(eval.curve_direction.second)) {
    throw ConfigError("eval.curve_direction: language out of range");
  }
  if (eval.beam < 1) throw ConfigError("eval.beam must be >= 1");
  if (eval.dev_sentences < 0) throw ConfigError("eval.dev_sentences must be >= 0");
  if (finetune.target_src != world.target_src || finetune.target_tgt != world.target_tgt) {
    throw ConfigError("finetune target pair must match the world's target pair");
  }
  const std::size_t datasets = static_cast<std::size_t>(K) + 1;
  if (!pretrain.dataset_weights.empty() && pretrain.dataset_weights.size() != datasets) {
    throw ConfigError("pretrain.dataset_weights needs " + std::to_string(datasets) + " entries");
  }
}

std::vector<std::pair<std::string, std::string>> to_flat(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

const std::map<std::string, std::string>& key_docs() {
  static const std::map<std::string, std::string> docs = [] {
    std::map<std::string, std::string> m;
    for (const auto& f : fields()) m[f.key] = f.doc;
    return m;
  }();
  return docs;
}

void apply(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      // The target pair lives in both the world and the fine-tune config.
      if (key == "world.target_src") cfg.finetune.target_src = cfg.pretrain.target_src = cfg.world.target_src;
      if (key == "world.target_tgt") cfg.finetune.target_tgt = cfg.pretrain.target_tgt = cfg.world.target_tgt;
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

std::vector<std::pair<std::string, std::string>> parse_flat(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  for (const auto& [k, v] : parse_flat(ss.str())) apply(cfg, k, v);
  return cfg;
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_flat(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace munmt::cli
