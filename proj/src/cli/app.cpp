#include "munmt/cli/app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "munmt/oracle/oracle.hpp"
#include "munmt/trainer/trainer.hpp"

namespace munmt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lang_name(int l) { return "L" + std::to_string(l); }

std::string pair_tag(int a, int b) { return lang_name(a) + "-" + lang_name(b); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_resolved(const ExperimentConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.resolved", render_config(cfg));
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw UsageError("missing " + what + ": " + path.string());
}

// Directions scored by periodic and final evaluation.
std::vector<std::pair<int, int>> scored_directions(const ExperimentConfig& cfg) {
  auto dirs = cfg.eval.directions;
  if (std::find(dirs.begin(), dirs.end(), cfg.eval.curve_direction) == dirs.end()) dirs.push_back(cfg.eval.curve_direction);
  return dirs;
}

train::TrainConfig phase_config(const ExperimentConfig& cfg, train::Phase phase) {
  auto tc = phase == train::Phase::Pretrain ? cfg.pretrain : cfg.finetune;
  tc.phase = phase;
  tc.seed = cfg.seed;
  tc.target_src = cfg.world.target_src;
  tc.target_tgt = cfg.world.target_tgt;
  return tc;
}

eval::DecodeMode decode_mode(const ExperimentConfig& cfg) {
  return {cfg.eval.beam, cfg.finetune.estep.length_ratio, cfg.finetune.estep.length_offset};
}

std::vector<train::Dataset> all_datasets(const CorpusData& data) {
  std::vector<train::Dataset> out;
  for (const auto& m : data.mono) out.push_back(train::Dataset::of(m));
  for (const auto& p : data.parallel) out.push_back(train::Dataset::of(p));
  return out;
}

json scores_json(const std::vector<DirectionScore>& scores) {
  json j = json::object();
  for (const auto& s : scores) j[eval::direction_name(s.src, s.tgt)] = json::parse(s.report.to_json());
  return j;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// Forwards to the metrics file and prints a short progress line now and then.
class ProgressSink final : public train::MetricsSink {
 public:
  ProgressSink(train::MetricsSink& inner, std::ostream& log, std::string label, train::MemorySink* capture)
      : inner_(inner), log_(log), label_(std::move(label)), capture_(capture) {}

  void record(std::int64_t step, const obj::LossRecord& r) override {
    inner_.record(step, r);
    if (capture_) capture_->record(step, r);
    if (r.token_count > 0) {
      sum_ += r.value;
      ++count_;
    }
    if (step != last_ && step % 100 == 0) {
      last_ = step;
      log_ << label_ << " step " << step << " mean loss " << (count_ ? sum_ / count_ : 0.0) << "\n" << std::flush;
      sum_ = 0;
      count_ = 0;
    }
  }

  void eval(std::int64_t step, const train::EvalRow& row) override {
    inner_.eval(step, row);
    if (capture_) capture_->eval(step, row);
    log_ << label_ << " step " << step << " " << row.direction << " BLEU " << fixed2(row.bleu) << "\n" << std::flush;
  }

 private:
  train::MetricsSink& inner_;
  std::ostream& log_;
  std::string label_;
  train::MemorySink* capture_;
  double sum_ = 0;
  std::int64_t count_ = 0;
  std::int64_t last_ = -1;
};

template <class T>
std::vector<DirectionScore> score(const nn::Model<T>& model, const ExperimentConfig& cfg, const CorpusData& data,
                                  const std::vector<std::pair<int, int>>& dirs, std::size_t limit,
                                  const fs::path& hyp_dir) {
  std::vector<DirectionScore> out;
  for (const auto& [s, t] : dirs) {
    const auto& pairs = data.test(s, t).pairs;
    std::vector<lingua::SentencePair> subset(pairs.begin(),
                                             pairs.begin() + static_cast<std::ptrdiff_t>(limit ? std::min(limit, pairs.size()) : pairs.size()));
    auto r = eval::evaluate_pair(model, subset, s, t, decode_mode(cfg));
    if (!hyp_dir.empty()) eval::write_hypotheses(hyp_dir / ("hyp." + pair_tag(s, t) + ".txt"), r.hypotheses, data.vocab);
    out.push_back({s, t, r.report});
  }
  return out;
}

template <class T>
train::Hooks<T> make_hooks(train::MetricsSink* sink, const ExperimentConfig& cfg, const CorpusData& data,
                           const train::TrainConfig& tc, const fs::path& run_dir) {
  train::Hooks<T> hooks(sink);
  if (tc.eval_every > 0) {
    const auto dirs = scored_directions(cfg);
    hooks.evaluate = [&cfg, &data, dirs](const nn::Model<T>& model, std::int64_t) {
      std::vector<train::EvalRow> rows;
      for (const auto& s : score(model, cfg, data, dirs, static_cast<std::size_t>(cfg.eval.dev_sentences), {})) {
        rows.push_back({eval::direction_name(s.src, s.tgt), s.report.score});
      }
      return rows;
    };
  }
  if (tc.checkpoint_every > 0) {
    const fs::path dir = run_dir / "checkpoints";
    hooks.checkpoint = [dir](const train::TrainState<T>& state) {
      fs::create_directories(dir);
      char name[32];
      std::snprintf(name, sizeof(name), "step-%07lld.ckpt", static_cast<long long>(state.step));
      train::save_checkpoint(state, dir / name);
    };
  }
  return hooks;
}

template <class T>
train::TrainState<T> resume_state(const fs::path& path, const nn::ModelConfig& mcfg, train::Phase phase) {
  require_file(path, "checkpoint");
  auto state = train::load_checkpoint<T>(path, mcfg);
  if (state.phase != phase) {
    throw UsageError("checkpoint " + path.string() + " is from the " + train::to_string(state.phase) + " phase");
  }
  return state;
}

template <class T>
fs::path pretrain_impl(const ExperimentConfig& cfg, const fs::path& resume, std::ostream& log) {
  const auto data = load_data(cfg);
  const auto mcfg = resolved_model(cfg, data);
  const auto tc = phase_config(cfg, train::Phase::Pretrain);
  const fs::path dir = cfg.out_path() / "pretrain";
  fs::create_directories(dir);
  write_resolved(cfg, dir);

  std::optional<train::TrainState<T>> state;
  if (!resume.empty()) {
    state.emplace(resume_state<T>(resume, mcfg, train::Phase::Pretrain));
  } else {
    Rng init(mix_seed(cfg.seed, 0x696e6974));
    state.emplace(train::make_state(nn::Model<T>::init(mcfg, init), tc));
  }
  log << "pretrain: " << state->model.parameter_count() << " parameters, " << tc.steps << " steps\n";

  train::JsonlSink file(dir / "metrics.jsonl", !resume.empty());
  ProgressSink sink(file, log, "pretrain", nullptr);
  const auto hooks = make_hooks<T>(&sink, cfg, data, tc, dir);
  train::pretrain(*state, all_datasets(data), tc, hooks);
  const fs::path final_path = dir / "final.ckpt";
  train::save_checkpoint(*state, final_path);
  log << "pretrain: wrote " << final_path.string() << "\n";
  return final_path;
}

template <class T>
FinetuneOutcome finetune_impl(const ExperimentConfig& cfg, const fs::path& run_dir, const fs::path& resume,
                              std::ostream& log, train::MemorySink* capture) {
  const auto data = load_data(cfg);
  const auto mcfg = resolved_model(cfg, data);
  const auto tc = phase_config(cfg, train::Phase::Finetune);
  fs::create_directories(run_dir);
  write_resolved(cfg, run_dir);

  std::optional<train::TrainState<T>> state;
  if (!resume.empty()) {
    state.emplace(resume_state<T>(resume, mcfg, train::Phase::Finetune));
  } else if (cfg.finetune_from_scratch) {
    Rng init(mix_seed(cfg.seed, 0x696e6974));
    state.emplace(train::make_state(nn::Model<T>::init(mcfg, init), tc));
  } else {
    const fs::path init = cfg.finetune_init.empty() ? cfg.out_path() / "pretrain" / "final.ckpt" : fs::path(cfg.finetune_init);
    require_file(init, "pre-trained checkpoint");
    state.emplace(train::make_state(train::load_checkpoint<T>(init, mcfg).model, tc));
  }
  const std::string label = "finetune[" + train::to_string(tc.ablation) + "]";
  log << label << ": " << tc.steps << " steps\n";

  train::JsonlSink file(run_dir / "metrics.jsonl", !resume.empty());
  ProgressSink sink(file, log, label, capture);
  const auto hooks = make_hooks<T>(&sink, cfg, data, tc, run_dir);
  train::finetune(*state, all_datasets(data), tc, hooks);
  train::save_checkpoint(*state, run_dir / "final.ckpt");

  FinetuneOutcome out;
  out.run_dir = run_dir;
  out.steps = state->step;
  out.stopped_early = state->early_stop.stopped;
  out.scores = score(state->model, cfg, data, cfg.eval.directions, 0, run_dir);
  write_text(run_dir / "bleu.json", scores_json(out.scores).dump(2) + "\n");
  for (const auto& s : out.scores) {
    log << label << ": final " << eval::direction_name(s.src, s.tgt) << " BLEU " << fixed2(s.report.score) << "\n";
  }
  return out;
}

template <class T>
std::vector<DirectionScore> evaluate_impl(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                                          std::ostream& log) {
  const auto data = load_data(cfg);
  const auto mcfg = resolved_model(cfg, data);
  require_file(checkpoint, "checkpoint");
  const auto state = train::load_checkpoint<T>(checkpoint, mcfg);
  fs::create_directories(out_dir);
  write_resolved(cfg, out_dir);
  auto scores = score(state.model, cfg, data, cfg.eval.directions, 0, out_dir);
  json j = scores_json(scores);
  j["checkpoint"] = checkpoint.string();
  write_text(out_dir / "bleu.json", j.dump(2) + "\n");
  for (const auto& s : scores) log << eval::direction_name(s.src, s.tgt) << " BLEU " << fixed2(s.report.score) << "\n";
  return scores;
}

template <class T>
AblationSummary ablate_impl(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path pre = cfg.finetune_init.empty() ? cfg.out_path() / "pretrain" / "final.ckpt" : fs::path(cfg.finetune_init);
  require_file(pre, "pre-trained checkpoint");
  const fs::path root = cfg.out_path() / "ablate";
  fs::create_directories(root);
  write_resolved(cfg, root);

  const auto [cs, ct] = cfg.eval.curve_direction;
  const std::string curve_name = eval::direction_name(cs, ct);
  AblationSummary summary;
  double baseline_dev = 0;
  {
    const auto data = load_data(cfg);
    const auto mcfg = resolved_model(cfg, data);
    const auto state = train::load_checkpoint<T>(pre, mcfg);
    const fs::path dir = root / "only_pretrain";
    fs::create_directories(dir);
    summary.final_scores["only_pretrain"] = score(state.model, cfg, data, cfg.eval.directions, 0, dir);
    write_text(dir / "bleu.json", scores_json(summary.final_scores["only_pretrain"]).dump(2) + "\n");
    baseline_dev = score(state.model, cfg, data, {cfg.eval.curve_direction},
                         static_cast<std::size_t>(cfg.eval.dev_sentences), {})[0].report.score;
    log << "only_pretrain: " << curve_name << " BLEU " << fixed2(baseline_dev) << " (dev)\n";
  }

  std::map<std::string, std::map<std::int64_t, double>> points;
  std::set<std::int64_t> steps = {0};
  for (const auto ablation : {train::Ablation::Bt, train::Ablation::MBt, train::Ablation::Full}) {
    const std::string name = train::to_string(ablation);
    ExperimentConfig run = cfg;
    run.finetune.ablation = ablation;
    run.finetune_init = pre.string();
    run.finetune_from_scratch = false;
    train::MemorySink capture;
    const auto outcome = finetune_impl<T>(run, root / name, {}, log, &capture);
    summary.final_scores[name] = outcome.scores;
    auto& curve = points[name];
    curve[0] = baseline_dev;
    for (const auto& e : capture.evals) {
      if (e.row.direction != curve_name) continue;
      curve[e.step] = e.row.bleu;
      steps.insert(e.step);
    }
  }

  summary.steps.assign(steps.begin(), steps.end());
  std::string csv = "config";
  for (const auto s : summary.steps) csv += "," + std::to_string(s);
  csv += "\n";
  for (const std::string name : {"bt", "m_bt", "full"}) {
    auto& row = summary.curves[name];
    csv += name;
    for (const auto s : summary.steps) {
      const auto it = points[name].find(s);
      row.push_back(it == points[name].end() ? std::nullopt : std::optional<double>(it->second));
      csv += "," + (row.back() ? fixed2(*row.back()) : std::string());
    }
    csv += "\n";
  }
  write_text(root / "ablation.csv", csv);

  json j;
  j["curve_direction"] = curve_name;
  j["steps"] = summary.steps;
  for (const auto& [name, scores] : summary.final_scores) j["final"][name] = scores_json(scores);
  for (const auto& [name, row] : summary.curves) {
    json r = json::array();
    for (const auto& v : row) r.push_back(v ? json(*v) : json(nullptr));
    j["curves"][name] = r;
  }
  write_text(root / "ablation_summary.json", j.dump(2) + "\n");
  log << "ablate: wrote " << (root / "ablation.csv").string() << "\n";
  return summary;
}

template <class F>
decltype(auto) by_precision(const ExperimentConfig& cfg, F&& f) {
  if (cfg.model.precision == 64) return f(double{});
  return f(float{});
}

}  // namespace

fs::path vocab_file(const fs::path& dir) { return dir / "vocab.txt"; }
fs::path mono_file(const fs::path& dir, int lang) { return dir / ("mono." + lang_name(lang) + ".txt"); }
fs::path parallel_file(const fs::path& dir, int a, int b, int side) {
  return dir / ("parallel." + pair_tag(a, b) + "." + lang_name(side) + ".txt");
}
fs::path test_file(const fs::path& dir, int src, int tgt, int side) {
  return dir / ("test." + pair_tag(src, tgt) + "." + lang_name(side) + ".txt");
}

const lingua::GoldTestSet& CorpusData::test(int src, int tgt) const {
  for (const auto& t : tests) {
    if (t.src == src && t.tgt == tgt) return t;
  }
  throw std::out_of_range("no test set for " + eval::direction_name(src, tgt));
}

double AblationSummary::final_bleu(const std::string& config, int src, int tgt) const {
  for (const auto& s : final_scores.at(config)) {
    if (s.src == src && s.tgt == tgt) return s.report.score;
  }
  throw std::out_of_range("no final score for " + config + " " + eval::direction_name(src, tgt));
}

void write_world(const lingua::SyntheticWorld& world, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  world.vocab.save(vocab_file(dir));
  for (const auto& m : world.mono) lingua::save_lines(mono_file(dir, m.language.id), m.lines, world.vocab);
  const auto& par = world.parallel;
  std::vector<lingua::TokenSeq> left, right;
  for (const auto& [a, b] : par.pairs) {
    left.push_back(a);
    right.push_back(b);
  }
  const int a = par.src_language.id, b = par.tgt_language.id;
  lingua::save_lines(parallel_file(dir, a, b, a), left, world.vocab);
  lingua::save_lines(parallel_file(dir, a, b, b), right, world.vocab);
  for (const auto& t : world.tests) {
    std::vector<lingua::TokenSeq> src, tgt;
    for (const auto& [x, y] : t.pairs) {
      src.push_back(x);
      tgt.push_back(y);
    }
    lingua::save_lines(test_file(dir, t.src, t.tgt, t.src), src, world.vocab);
    lingua::save_lines(test_file(dir, t.src, t.tgt, t.tgt), tgt, world.vocab);
  }
  const auto& c = world.config;
  json j = {{"seed", seed},
            {"num_languages", c.num_languages},
            {"concepts", c.concepts},
            {"min_len", c.min_len},
            {"max_len", c.max_len},
            {"mono_lines", c.mono_lines},
            {"parallel_pairs", c.parallel_pairs},
            {"test_pairs", c.test_pairs},
            {"parallel", {c.parallel_src, c.parallel_tgt}},
            {"target", {c.target_src, c.target_tgt}},
            {"reordered_language", c.reordered_language},
            {"latent", lingua::to_string(c.latent)},
            {"markov_successors", c.markov_successors},
            {"shared_concepts", c.shared_concepts},
            {"vocab_size", world.vocab.size()}};
  write_text(dir / "world.json", j.dump(2) + "\n");
}

CorpusData load_data(const ExperimentConfig& cfg) {
  const fs::path dir = cfg.data_path();
  require_file(vocab_file(dir), "vocabulary (run gen-data first)");
  CorpusData data{lingua::Vocabulary::load(vocab_file(dir)), {}, {}, {}};
  const auto langs = lingua::make_languages(cfg.world.num_languages);
  // Sources get EOS appended, so the longest usable line is one short of the model limit.
  const auto cap = static_cast<std::size_t>(cfg.model.max_len - 1);
  for (const auto& l : langs) {
    require_file(mono_file(dir, l.id), "monolingual corpus");
    data.mono.push_back(lingua::load_mono(mono_file(dir, l.id), l, data.vocab, cap));
  }
  const int a = cfg.world.parallel_src, b = cfg.world.parallel_tgt;
  if (fs::exists(parallel_file(dir, a, b, a)) && fs::exists(parallel_file(dir, a, b, b))) {
    auto p = lingua::load_parallel(parallel_file(dir, a, b, a), parallel_file(dir, a, b, b), langs.at(a), langs.at(b),
                                   data.vocab, cap);
    if (!p.pairs.empty()) data.parallel.push_back(std::move(p));
  }
  for (const auto& [s, t] : scored_directions(cfg)) {
    require_file(test_file(dir, s, t, s), "test set");
    require_file(test_file(dir, s, t, t), "test set");
    auto p = lingua::load_parallel(test_file(dir, s, t, s), test_file(dir, s, t, t), langs.at(s), langs.at(t), data.vocab, cap);
    if (p.pairs.empty()) throw UsageError("empty test set for " + eval::direction_name(s, t));
    data.tests.push_back({s, t, std::move(p.pairs)});
  }
  return data;
}

nn::ModelConfig resolved_model(const ExperimentConfig& cfg, const CorpusData& data) {
  auto m = cfg.model;
  m.vocab_size = static_cast<int>(data.vocab.size());
  m.num_languages = cfg.world.num_languages;
  m.validate();
  return m;
}

fs::path finetune_dir(const ExperimentConfig& cfg, train::Ablation ablation) {
  return cfg.out_path() / ("finetune-" + train::to_string(ablation));
}

void gen_data(const ExperimentConfig& cfg, std::ostream& log) {
  const auto world = lingua::gen_synthetic_world(cfg.seed, cfg.world);
  const fs::path dir = cfg.data_path();
  write_world(world, cfg.seed, dir);
  write_resolved(cfg, dir);
  log << "gen-data: " << world.vocab.size() << " tokens, " << world.mono.size() << " languages, "
      << world.parallel.pairs.size() << " parallel pairs -> " << dir.string() << "\n";
}

fs::path run_pretrain(const ExperimentConfig& cfg, const fs::path& resume, std::ostream& log) {
  return by_precision(cfg, [&](auto t) { return pretrain_impl<decltype(t)>(cfg, resume, log); });
}

FinetuneOutcome run_finetune(const ExperimentConfig& cfg, const fs::path& run_dir, const fs::path& resume,
                             std::ostream& log) {
  return by_precision(cfg, [&](auto t) { return finetune_impl<decltype(t)>(cfg, run_dir, resume, log, nullptr); });
}

std::vector<DirectionScore> run_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path ckpt =
      cfg.eval.checkpoint.empty() ? finetune_dir(cfg, cfg.finetune.ablation) / "final.ckpt" : fs::path(cfg.eval.checkpoint);
  return by_precision(cfg, [&](auto t) { return evaluate_impl<decltype(t)>(cfg, ckpt, cfg.out_path() / "evaluate", log); });
}

AblationSummary run_ablate(const ExperimentConfig& cfg, std::ostream& log) {
  return by_precision(cfg, [&](auto t) { return ablate_impl<decltype(t)>(cfg, log); });
}

bool oracle_check(std::ostream& out, int trials, std::uint64_t seed) {
  oracle::SuiteConfig sc;
  sc.trials = trials;
  sc.seed = seed;
  bool ok = true;
  for (const auto& r : oracle::run_suite(sc)) {
    out << r.to_json() << "\n";
    ok = ok && r.passed;
  }
  return ok;
}

namespace {

// Turns leftover "--key=value" / "--key value" tokens into assignments. Keys
// that are not full dotted names are looked up under the subcommand's sections.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& extras,
                     const std::vector<std::string>& sections) {
  const auto& docs = key_docs();
  auto resolve = [&](const std::string& key) {
    if (docs.count(key)) return key;
    for (const auto& s : sections) {
      if (docs.count(s + "." + key)) return s + "." + key;
    }
    throw ConfigError("unknown config key: " + key);
  };
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) throw UsageError("unexpected argument: " + tok);
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      apply(cfg, resolve(tok.substr(2, eq - 2)), tok.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw UsageError("missing value for " + tok);
      apply(cfg, resolve(tok.substr(2)), extras[++i]);
    }
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multilingual unsupervised translation at desk scale"};
  app.require_subcommand(1);
  app.add_flag("--list-keys", "print every config key with its default and exit");

  std::string config_path, resume;
  int trials = 1000;
  std::uint64_t oracle_seed = oracle::SuiteConfig{}.seed;
  struct Sub {
    CLI::App* app;
    std::vector<std::string> sections;
  };
  std::vector<Sub> subs;
  auto add = [&](const std::string& name, const std::string& desc, std::vector<std::string> sections) {
    auto* s = app.add_subcommand(name, desc);
    s->add_option("-c,--config", config_path, "flat key = value config file");
    s->allow_extras();
    subs.push_back({s, std::move(sections)});
    return s;
  };
  add("gen-data", "write the synthetic corpora", {"world"});
  add("pretrain", "MASS and supervised pre-training", {"pretrain"})->add_option("--resume", resume, "checkpoint to continue");
  add("finetune", "EM fine-tuning under one ablation", {"finetune"})->add_option("--resume", resume, "checkpoint to continue");
  add("evaluate", "BLEU of a checkpoint on the test sets", {"eval"});
  add("ablate", "fine-tune bt, m_bt and full from one pre-trained checkpoint", {"finetune", "eval"});
  auto* oc = app.add_subcommand("oracle-check", "exact checks of the EM bounds on toy joints");
  oc->add_option("--trials", trials, "random joints per check")->check(CLI::PositiveNumber);
  oc->add_option("--seed", oracle_seed, "suite seed");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    // --list-keys needs no subcommand.
    if (std::find(args.begin(), args.end(), "--list-keys") != args.end()) {
      for (const auto& [k, v] : to_flat(ExperimentConfig{})) out << k << " = " << v << "    # " << key_docs().at(k) << "\n";
      return kExitOk;
    }
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (oc->parsed()) {
      const bool ok = oracle_check(out, trials, oracle_seed);
      if (!ok) err << "oracle-check: at least one check failed\n";
      return ok ? kExitOk : kExitFailure;
    }
    const Sub* sub = nullptr;
    for (const auto& s : subs) {
      if (s.app->parsed()) sub = &s;
    }
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    apply_overrides(cfg, sub->app->remaining(), sub->sections);
    cfg.validate();
    const std::string name = sub->app->get_name();
    if (name == "gen-data") {
      gen_data(cfg, err);
    } else if (name == "pretrain") {
      out << run_pretrain(cfg, resume, err).string() << "\n";
    } else if (name == "finetune") {
      const auto r = run_finetune(cfg, finetune_dir(cfg, cfg.finetune.ablation), resume, err);
      out << scores_json(r.scores).dump() << "\n";
    } else if (name == "evaluate") {
      out << scores_json(run_evaluate(cfg, err)).dump() << "\n";
    } else if (name == "ablate") {
      run_ablate(cfg, err);
      out << (cfg.out_path() / "ablate" / "ablation.csv").string() << "\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace munmt::cli
