#include "munmt/trainer/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "munmt/lingua/masking.hpp"
#include "munmt/model/serialize.hpp"

namespace munmt::train {

namespace {

constexpr char kTrainMagic[8] = {'M', 'U', 'N', 'M', 'T', 'T', 'R', 'N'};
constexpr std::uint32_t kTrainFormatVersion = 1;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

}  // namespace

std::string to_string(Phase p) { return p == Phase::Pretrain ? "pretrain" : "finetune"; }

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::Bt:
      return "bt";
    case Ablation::MBt:
      return "m_bt";
    case Ablation::Full:
      return "full";
  }
  return "?";
}

std::string to_string(OptimizerKind o) { return o == OptimizerKind::Adam ? "adam" : "adamax"; }

Phase parse_phase(const std::string& text) {
  const auto t = lower(text);
  if (t == "pretrain") return Phase::Pretrain;
  if (t == "finetune") return Phase::Finetune;
  throw std::invalid_argument("unknown phase: " + text);
}

Ablation parse_ablation(const std::string& text) {
  const auto t = lower(text);
  for (const auto a : {Ablation::Bt, Ablation::MBt, Ablation::Full}) {
    if (to_string(a) == t) return a;
  }
  throw std::invalid_argument("unknown ablation: " + text);
}

OptimizerKind parse_optimizer(const std::string& text) {
  const auto t = lower(text);
  if (t == "adam") return OptimizerKind::Adam;
  if (t == "adamax") return OptimizerKind::Adamax;
  throw std::invalid_argument("unknown optimizer: " + text);
}

double LossWeights::of(obj::LossKind kind) const {
  switch (kind) {
    case obj::LossKind::Mass:
      return mass;
    case obj::LossKind::Sup:
      return sup;
    case obj::LossKind::Bt:
      return bt;
    case obj::LossKind::Ct:
      return ct;
  }
  return 0;
}

TrainConfig TrainConfig::pretrain_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::finetune_defaults() {
  TrainConfig c;
  c.phase = Phase::Finetune;
  c.batch_size = 512;
  c.weight_decay = 0;
  c.optimizer = OptimizerKind::Adamax;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (steps < 1) fail("steps must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(base_lr >= 0)) fail("base_lr must be >= 0");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (warmup_steps > total_decay_steps) fail("warmup_steps must not exceed total_decay_steps");
  if (total_decay_steps < 1) fail("total_decay_steps must be >= 1");
  if (!(weight_decay >= 0)) fail("weight_decay must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (eval_every < 0 || checkpoint_every < 0 || patience < 0) fail("eval_every, checkpoint_every, patience must be >= 0");
  for (const double w : {weights.mass, weights.sup, weights.bt, weights.ct}) {
    if (!(w > 0) || !std::isfinite(w)) fail("loss weights must be positive");
  }
  for (const double w : dataset_weights) {
    if (!(w >= 0) || !std::isfinite(w)) fail("dataset weights must be non-negative");
  }
  if (!dataset_weights.empty() && std::accumulate(dataset_weights.begin(), dataset_weights.end(), 0.0) <= 0) {
    fail("dataset weights sum to zero");
  }
  if (target_src == target_tgt) fail("target pair must name two languages");
  if (estep.beam < 1) fail("beam must be >= 1");
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("lr_at: negative step");
  const double base = cfg.base_lr;
  if (step < cfg.warmup_steps) return base * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step >= cfg.total_decay_steps) return 0.0;
  const auto span = static_cast<double>(cfg.total_decay_steps - cfg.warmup_steps);
  return base * static_cast<double>(cfg.total_decay_steps - step) / span;
}

template <class T>
OptimizerState<T> zero_optimizer(const nn::Model<T>& model) {
  OptimizerState<T> s;
  s.first = model.zero_gradients();
  s.second = model.zero_gradients();
  return s;
}

template <class T>
void optimizer_update(nn::Model<T>& model, OptimizerState<T>& opt, const nn::Gradients<T>& grads, double lr,
                      const TrainConfig& cfg) {
  auto& params = model.params();
  if (grads.size() != params.size() || opt.first.size() != params.size() || opt.second.size() != params.size()) {
    throw std::invalid_argument("optimizer_update: gradient set does not match model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols()) {
      throw std::invalid_argument("optimizer_update: gradient shape mismatch for " + model.names()[i]);
    }
  }
  if (!nn::all_finite(grads)) throw std::domain_error("non-finite gradient");

  const std::int64_t t = opt.t + 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const T decay = static_cast<T>(1.0 - lr * cfg.weight_decay);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2), eps = static_cast<T>(cfg.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = opt.first[i];
    auto& v = opt.second[i];
    const auto& g = grads[i];
    if (cfg.weight_decay != 0) p *= decay;
    m = tb1 * m + (T(1) - tb1) * g;
    if (cfg.optimizer == OptimizerKind::Adam) {
      v = tb2 * v + (T(1) - tb2) * g.cwiseProduct(g);
      const T step = static_cast<T>(lr / c1);
      const T root_c2 = static_cast<T>(std::sqrt(c2));
      p.array() -= step * m.array() / ((v.array().sqrt() / root_c2) + eps);
    } else {
      v = (tb2 * v).cwiseMax((g.array().abs() + eps).matrix());
      const T step = static_cast<T>(lr / c1);
      p.array() -= step * m.array() / v.array();
    }
  }
  opt.t = t;
}

std::string Dataset::name() const {
  if (parallel) return "parallel " + parallel->src_language.name + "-" + parallel->tgt_language.name;
  if (mono) return "mono " + mono->language.name;
  return "empty";
}

template <class T>
TrainState<T> make_state(nn::Model<T> model, const TrainConfig& cfg) {
  OptimizerState<T> opt = zero_optimizer(model);
  return TrainState<T>{cfg.phase, 0, std::move(model), std::move(opt), Rng(mix_seed(cfg.seed, 0x7472)), {}, {}};
}

JsonlSink::JsonlSink(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open metrics log " + path.string());
}

void JsonlSink::record(std::int64_t step, const obj::LossRecord& r) { out_ << r.to_json(step) << '\n' << std::flush; }

void JsonlSink::eval(std::int64_t step, const EvalRow& row) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["direction"] = row.direction;
  j["bleu"] = row.bleu;
  out_ << j.dump() << '\n' << std::flush;
}

namespace {

void check_datasets(const std::vector<Dataset>& datasets, int num_languages) {
  if (datasets.empty()) throw std::invalid_argument("at least one dataset is required");
  for (const auto& d : datasets) {
    if ((d.mono == nullptr) == (d.parallel == nullptr)) throw std::invalid_argument("dataset must be mono or parallel");
    if (d.mono) {
      if (d.mono->lines.empty()) throw std::invalid_argument("empty dataset: " + d.name());
      nn::check_language(nn::ModelConfig{.num_languages = num_languages}, d.mono->language.id);
    } else {
      if (d.parallel->pairs.empty()) throw std::invalid_argument("empty dataset: " + d.name());
      if (d.parallel->src_language.id == d.parallel->tgt_language.id) {
        throw std::invalid_argument("parallel dataset needs two languages: " + d.name());
      }
      nn::check_language(nn::ModelConfig{.num_languages = num_languages}, d.parallel->src_language.id);
      nn::check_language(nn::ModelConfig{.num_languages = num_languages}, d.parallel->tgt_language.id);
    }
  }
}

template <class T>
nn::ForwardMode<T> train_mode(const nn::Model<T>& model, Rng& rng) {
  return {static_cast<T>(model.config().dropout_rate), &rng};
}

// Runs the hooks that follow an optimizer step (or a skipped one).
template <class T>
void after_step(TrainState<T>& state, const TrainConfig& cfg, const Hooks<T>& hooks, bool early_stop) {
  if (cfg.eval_every > 0 && state.step % cfg.eval_every == 0 && hooks.evaluate) {
    const auto rows = hooks.evaluate(state.model, state.step);
    double sum = 0;
    for (const auto& row : rows) {
      sum += row.bleu;
      if (hooks.metrics) hooks.metrics->eval(state.step, row);
    }
    if (early_stop && !rows.empty()) {
      const double mean = sum / static_cast<double>(rows.size());
      auto& es = state.early_stop;
      if (mean > es.best) {
        es.best = mean;
        es.stale = 0;
      } else {
        ++es.stale;
        if (cfg.patience > 0 && es.stale >= cfg.patience) es.stopped = true;
      }
    }
  }
  if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && hooks.checkpoint) hooks.checkpoint(state);
}

template <class T>
void emit(const Hooks<T>& hooks, std::int64_t step, const obj::LossRecord& r) {
  if (hooks.metrics) hooks.metrics->record(step, r);
}

}  // namespace

std::size_t pick_dataset(Rng& rng, std::size_t n, const std::vector<double>& weights) {
  if (weights.empty()) return static_cast<std::size_t>(rng.below(n));
  if (weights.size() != n) throw std::invalid_argument("one dataset weight per dataset required");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  for (std::size_t i = n; i-- > 0;) {
    if (weights[i] > 0) return i;
  }
  return n - 1;
}

template <class T>
void pretrain(TrainState<T>& state, const std::vector<Dataset>& datasets, const TrainConfig& cfg,
              const Hooks<T>& hooks) {
  cfg.validate();
  check_datasets(datasets, state.model.config().num_languages);
  state.phase = Phase::Pretrain;
  while (state.step < cfg.steps) {
    const auto& d = datasets[pick_dataset(state.rng, datasets.size(), cfg.dataset_weights)];
    const double lr = lr_at(state.step + 1, cfg);
    const auto mode = train_mode(state.model, state.rng);
    std::vector<obj::LossRecord> records;
    nn::Gradients<T> grads;
    if (d.mono) {
      std::vector<lingua::MaskedExample> batch;
      for (int i = 0; i < cfg.batch_size; ++i) {
        const auto& line = d.mono->lines[state.rng.below(d.mono->lines.size())];
        batch.push_back(lingua::mass_mask(line, state.rng));
      }
      const auto b = obj::mass_batch(batch, d.mono->language.id);
      auto tg = obj::term_gradients(state.model, obj::make_record(obj::LossKind::Mass, b), b, mode,
                                    static_cast<T>(cfg.weights.mass));
      records.push_back(tg.record);
      grads = std::move(tg.grads);
    } else {
      std::vector<lingua::SentencePair> pairs;
      for (int i = 0; i < cfg.batch_size; ++i) pairs.push_back(d.parallel->pairs[state.rng.below(d.parallel->pairs.size())]);
      const auto [xy, yx] = obj::supervised_batches(pairs, d.parallel->src_language.id, d.parallel->tgt_language.id);
      const T w = static_cast<T>(cfg.weights.sup);
      auto first = obj::term_gradients(state.model, obj::make_record(obj::LossKind::Sup, xy), xy, mode, w);
      auto second = obj::term_gradients(state.model, obj::make_record(obj::LossKind::Sup, yx), yx, mode, w);
      nn::accumulate(first.grads, second.grads);
      records.push_back(first.record);
      records.push_back(second.record);
      grads = std::move(first.grads);
    }
    optimizer_update(state.model, state.optimizer, grads, lr, cfg);
    ++state.step;
    for (const auto& r : records) emit(hooks, state.step, r);
    after_step(state, cfg, hooks, false);
  }
}

std::vector<Dataset> finetune_datasets(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                                       int num_languages) {
  check_datasets(datasets, num_languages);
  std::vector<Dataset> out;
  for (const auto& d : datasets) {
    if (d.mono) {
      const int l = d.mono->language.id;
      if (cfg.ablation == Ablation::Bt && l != cfg.target_src && l != cfg.target_tgt) continue;
      out.push_back(d);
    } else if (cfg.ablation == Ablation::Full && num_languages > 2) {
      out.push_back(d);
    }
  }
  if (cfg.ablation == Ablation::Full && std::none_of(out.begin(), out.end(), [](const Dataset& d) { return d.is_parallel(); })) {
    throw std::invalid_argument("ablation full requires a parallel dataset with a third language to pivot through");
  }
  if (out.empty()) throw std::invalid_argument("no dataset survives the ablation filter");
  return out;
}

namespace {

// Token-budget batch: sentences are drawn until the next one would overflow
// the budget. The first sentence is always taken.
template <class Item, class Size>
std::vector<Item> budget_batch(const std::vector<Item>& items, int budget, Rng& rng, Size tokens_of) {
  std::vector<Item> out;
  std::int64_t used = 0;
  for (;;) {
    const auto& item = items[rng.below(items.size())];
    const std::int64_t n = tokens_of(item);
    if (!out.empty() && used + n > budget) break;
    out.push_back(item);
    used += n;
  }
  return out;
}

void enqueue_terms(FinetuneCursor& cursor, const Dataset& d, const TrainConfig& cfg, int num_languages, Rng& rng) {
  if (d.mono) {
    const int l = d.mono->language.id;
    const auto xs = budget_batch(d.mono->lines, cfg.batch_size, rng,
                                 [](const lingua::TokenSeq& s) { return static_cast<std::int64_t>(s.size()) + 1; });
    for (int other = 0; other < num_languages; ++other) {
      if (other == l) continue;
      if (cfg.ablation == Ablation::Bt && other != cfg.target_src && other != cfg.target_tgt) continue;
      cursor.pending.push_back({obj::LossKind::Bt, l, l, other, -1, xs, xs});
    }
    return;
  }
  const int a = d.parallel->src_language.id, b = d.parallel->tgt_language.id;
  const auto pairs = budget_batch(d.parallel->pairs, cfg.batch_size, rng, [](const lingua::SentencePair& p) {
    return static_cast<std::int64_t>(p.first.size() + p.second.size()) + 2;
  });
  std::vector<lingua::TokenSeq> xs, ys;
  for (const auto& [x, y] : pairs) {
    xs.push_back(x);
    ys.push_back(y);
  }
  for (int pivot = 0; pivot < num_languages; ++pivot) {
    if (pivot == a || pivot == b) continue;
    cursor.pending.push_back({obj::LossKind::Ct, a, b, pivot, pivot, xs, ys});
    cursor.pending.push_back({obj::LossKind::Ct, b, a, pivot, pivot, ys, xs});
  }
}

}  // namespace

template <class T>
void finetune(TrainState<T>& state, const std::vector<Dataset>& datasets, const TrainConfig& cfg,
              const Hooks<T>& hooks) {
  cfg.validate();
  const int K = state.model.config().num_languages;
  const auto active = finetune_datasets(datasets, cfg, K);
  const obj::Translator<T> translate = hooks.translate ? hooks.translate : obj::decode_translator<T>(cfg.estep);
  state.phase = Phase::Finetune;
  auto& cursor = state.cursor;
  while (state.step < cfg.steps && !state.early_stop.stopped) {
    if (cursor.pending.empty()) {
      const auto& d = active[cursor.next_dataset % active.size()];
      cursor.next_dataset = (cursor.next_dataset + 1) % active.size();
      enqueue_terms(cursor, d, cfg, K, state.rng);
      continue;
    }
    const PendingTerm term = cursor.pending.front();
    std::int64_t skipped = 0;
    const auto batch = obj::translated_batch(state.model, term.sources, term.src_lang, term.targets, term.tgt_lang,
                                             term.via, translate, &skipped);
    obj::LossRecord record = obj::make_record(term.kind, batch, term.pivot, skipped);
    if (term.kind == obj::LossKind::Ct) {
      record.src_lang = term.src_lang;
      record.tgt_lang = term.tgt_lang;
    }
    if (!batch.sources.empty()) {
      const double lr = lr_at(state.step + 1, cfg);
      auto tg = obj::term_gradients(state.model, record, batch, train_mode(state.model, state.rng),
                                    static_cast<T>(cfg.weights.of(term.kind)));
      optimizer_update(state.model, state.optimizer, tg.grads, lr, cfg);
      record = tg.record;
    }
    cursor.pending.erase(cursor.pending.begin());
    ++state.step;
    emit(hooks, state.step, record);
    after_step(state, cfg, hooks, true);
  }
}

// --- checkpoints ------------------------------------------------------------

namespace {

void write_seqs(std::ostream& out, const std::vector<lingua::TokenSeq>& seqs) {
  io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(seqs.size()));
  for (const auto& s : seqs) {
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    for (const auto t : s) io::write_pod<std::int32_t>(out, static_cast<std::int32_t>(t));
  }
}

std::vector<lingua::TokenSeq> read_seqs(std::istream& in) {
  const auto n = io::read_pod<std::uint32_t>(in);
  if (n > (1u << 24)) throw std::runtime_error("corrupt checkpoint sequence count");
  std::vector<lingua::TokenSeq> seqs(n);
  for (auto& s : seqs) {
    const auto len = io::read_pod<std::uint32_t>(in);
    if (len > (1u << 16)) throw std::runtime_error("corrupt checkpoint sequence length");
    s.resize(len);
    for (auto& t : s) t = static_cast<lingua::TokenId>(io::read_pod<std::int32_t>(in));
  }
  return seqs;
}

template <class T>
TrainState<T> read_state(std::istream& in, const nn::ModelConfig* expected) {
  io::expect_magic(in, kTrainMagic, "training checkpoint");
  const auto version = io::read_pod<std::uint32_t>(in);
  if (version != kTrainFormatVersion) {
    throw std::runtime_error("unsupported training checkpoint version " + std::to_string(version));
  }
  const auto precision = io::read_pod<std::uint32_t>(in);
  if (precision != sizeof(T) * 8) {
    throw std::runtime_error("checkpoint precision " + std::to_string(precision) + " does not match requested " +
                             std::to_string(sizeof(T) * 8));
  }
  const auto phase_byte = io::read_pod<std::uint8_t>(in);
  if (phase_byte > 1) throw std::runtime_error("corrupt checkpoint phase");
  const auto step = io::read_pod<std::int64_t>(in);
  Rng rng;
  rng.deserialize(io::read_string(in));
  EarlyStop es;
  es.best = io::read_pod<double>(in);
  es.stale = io::read_pod<std::int32_t>(in);
  es.stopped = io::read_pod<std::uint8_t>(in) != 0;
  const auto t = io::read_pod<std::int64_t>(in);
  const auto count = io::read_pod<std::uint32_t>(in);
  std::vector<nn::Matrix<T>> first, second;
  for (auto* moments : {&first, &second}) {
    moments->reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto rows = io::read_pod<std::uint32_t>(in);
      const auto cols = io::read_pod<std::uint32_t>(in);
      if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw std::runtime_error("corrupt checkpoint tensor");
      nn::Matrix<T> m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(T)));
      if (!in) throw std::runtime_error("truncated checkpoint");
      moments->push_back(std::move(m));
    }
  }
  nn::Model<T> model = expected ? nn::Model<T>::read(in, *expected) : nn::Model<T>::read(in);
  if (count != model.params().size()) throw std::runtime_error("optimizer state does not match model");
  for (std::size_t i = 0; i < count; ++i) {
    const auto& p = model.params()[i];
    if (first[i].rows() != p.rows() || first[i].cols() != p.cols() || second[i].rows() != p.rows() ||
        second[i].cols() != p.cols()) {
      throw std::runtime_error("optimizer state does not match model");
    }
  }
  FinetuneCursor cursor;
  cursor.next_dataset = io::read_pod<std::uint64_t>(in);
  const auto pending = io::read_pod<std::uint32_t>(in);
  if (pending > (1u << 16)) throw std::runtime_error("corrupt checkpoint cursor");
  for (std::uint32_t i = 0; i < pending; ++i) {
    PendingTerm p;
    const auto kind = io::read_pod<std::uint8_t>(in);
    if (kind > 3) throw std::runtime_error("corrupt checkpoint loss kind");
    p.kind = static_cast<obj::LossKind>(kind);
    p.src_lang = io::read_pod<std::int32_t>(in);
    p.tgt_lang = io::read_pod<std::int32_t>(in);
    p.via = io::read_pod<std::int32_t>(in);
    p.pivot = io::read_pod<std::int32_t>(in);
    p.sources = read_seqs(in);
    p.targets = read_seqs(in);
    cursor.pending.push_back(std::move(p));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in checkpoint");
  OptimizerState<T> opt{t, std::move(first), std::move(second)};
  return TrainState<T>{static_cast<Phase>(phase_byte), step, std::move(model), std::move(opt), rng,
                       std::move(cursor), es};
}

}  // namespace

template <class T>
void save_checkpoint(const TrainState<T>& state, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    io::write_magic(out, kTrainMagic);
    io::write_pod<std::uint32_t>(out, kTrainFormatVersion);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(sizeof(T) * 8));
    io::write_pod<std::uint8_t>(out, state.phase == Phase::Pretrain ? 0 : 1);
    io::write_pod<std::int64_t>(out, state.step);
    io::write_string(out, state.rng.serialize());
    io::write_pod<double>(out, state.early_stop.best);
    io::write_pod<std::int32_t>(out, state.early_stop.stale);
    io::write_pod<std::uint8_t>(out, state.early_stop.stopped ? 1 : 0);
    io::write_pod<std::int64_t>(out, state.optimizer.t);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(state.optimizer.first.size()));
    for (const auto& m : state.optimizer.first) io::write_matrix(out, m);
    for (const auto& m : state.optimizer.second) io::write_matrix(out, m);
    state.model.write(out);
    io::write_pod<std::uint64_t>(out, state.cursor.next_dataset);
    io::write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(state.cursor.pending.size()));
    for (const auto& p : state.cursor.pending) {
      io::write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(p.kind));
      for (const int v : {p.src_lang, p.tgt_lang, p.via, p.pivot}) io::write_pod<std::int32_t>(out, v);
      write_seqs(out, p.sources);
      write_seqs(out, p.targets);
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <class T>
TrainState<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_state<T>(in, nullptr);
}

template <class T>
TrainState<T> load_checkpoint(const std::filesystem::path& path, const nn::ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_state<T>(in, &expected);
}

#define MUNMT_INSTANTIATE(T)                                                                                      \
  template OptimizerState<T> zero_optimizer<T>(const nn::Model<T>&);                                              \
  template void optimizer_update<T>(nn::Model<T>&, OptimizerState<T>&, const nn::Gradients<T>&, double,           \
                                    const TrainConfig&);                                                          \
  template TrainState<T> make_state<T>(nn::Model<T>, const TrainConfig&);                                         \
  template void pretrain<T>(TrainState<T>&, const std::vector<Dataset>&, const TrainConfig&, const Hooks<T>&);    \
  template void finetune<T>(TrainState<T>&, const std::vector<Dataset>&, const TrainConfig&, const Hooks<T>&);    \
  template void save_checkpoint<T>(const TrainState<T>&, const std::filesystem::path&);                           \
  template TrainState<T> load_checkpoint<T>(const std::filesystem::path&);                                        \
  template TrainState<T> load_checkpoint<T>(const std::filesystem::path&, const nn::ModelConfig&);

MUNMT_INSTANTIATE(float)
MUNMT_INSTANTIATE(double)
#undef MUNMT_INSTANTIATE

}  // namespace munmt::train
