#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "munmt/common/rng.hpp"
#include "munmt/lingua/corpus.hpp"
#include "munmt/objectives/objectives.hpp"

namespace munmt::train {

enum class Phase { Pretrain, Finetune };
enum class Ablation { Bt, MBt, Full };
enum class OptimizerKind { Adam, Adamax };

std::string to_string(Phase p);
std::string to_string(Ablation a);
std::string to_string(OptimizerKind o);
Phase parse_phase(const std::string& text);
Ablation parse_ablation(const std::string& text);  // "bt", "m_bt" (or "m-bt"), "full"
OptimizerKind parse_optimizer(const std::string& text);

struct LossWeights {
  double mass = 1, sup = 1, bt = 1, ct = 1;
  double of(obj::LossKind kind) const;
};

struct TrainConfig {
  Phase phase = Phase::Pretrain;
  Ablation ablation = Ablation::Full;  // fine-tune only
  std::int64_t steps = 2000;
  int batch_size = 32;  // sentences when pre-training, tokens when fine-tuning
  double base_lr = 2e-4;
  std::int64_t warmup_steps = 4000;
  std::int64_t total_decay_steps = 1200000;
  double weight_decay = 0.01;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  std::int64_t eval_every = 0;        // 0 disables periodic evaluation
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  int patience = 5;                   // evals without improvement before stopping; 0 disables
  LossWeights weights;
  std::vector<double> dataset_weights;  // pre-training pick weights; empty means uniform
  int target_src = 0;                   // the unsupervised pair trained under ablation BT
  int target_tgt = 2;
  obj::EStepConfig estep;

  // Pre-training: Adam, weight decay 0.01, 32-sentence batches.
  static TrainConfig pretrain_defaults();
  // Fine-tuning: Adamax, no weight decay, 512-token batches.
  static TrainConfig finetune_defaults();
  void validate() const;
};

// Linear warmup from 0 to base_lr over warmup_steps, then linear decay to 0
// at total_decay_steps, and 0 afterwards.
double lr_at(std::int64_t step, const TrainConfig& cfg);

template <class T>
struct OptimizerState {
  std::int64_t t = 0;                 // updates applied
  std::vector<nn::Matrix<T>> first;   // m
  std::vector<nn::Matrix<T>> second;  // v (Adam) or u (Adamax)
};

template <class T>
OptimizerState<T> zero_optimizer(const nn::Model<T>& model);

// One Adam or Adamax step with bias correction and decoupled weight decay
// (theta *= 1 - lr * wd before the adaptive step). Adamax keeps
// u = max(beta2 * u, |g| + eps). Throws std::domain_error and leaves every
// argument untouched when a gradient is non-finite.
template <class T>
void optimizer_update(nn::Model<T>& model, OptimizerState<T>& opt, const nn::Gradients<T>& grads, double lr,
                      const TrainConfig& cfg);

// A training corpus. Fine-tuning visits datasets in list order.
struct Dataset {
  const lingua::MonoCorpus* mono = nullptr;
  const lingua::ParallelCorpus* parallel = nullptr;

  static Dataset of(const lingua::MonoCorpus& c) { return {&c, nullptr}; }
  static Dataset of(const lingua::ParallelCorpus& c) { return {nullptr, &c}; }
  bool is_parallel() const { return parallel != nullptr; }
  std::string name() const;
};

// A fine-tuning loss term waiting for its update. Terms are produced batch by
// batch and consumed one per step, so a checkpoint can fall between them.
struct PendingTerm {
  obj::LossKind kind = obj::LossKind::Bt;
  int src_lang = 0;  // language of sources
  int tgt_lang = 0;  // language of targets
  int via = 0;       // decode language
  int pivot = -1;    // CT only
  std::vector<lingua::TokenSeq> sources;
  std::vector<lingua::TokenSeq> targets;

  friend bool operator==(const PendingTerm&, const PendingTerm&) = default;
};

struct FinetuneCursor {
  std::size_t next_dataset = 0;  // index into the ablation-filtered dataset list
  std::vector<PendingTerm> pending;

  friend bool operator==(const FinetuneCursor&, const FinetuneCursor&) = default;
};

struct EarlyStop {
  double best = -1;
  int stale = 0;
  bool stopped = false;

  friend bool operator==(const EarlyStop&, const EarlyStop&) = default;
};

template <class T>
struct TrainState {
  Phase phase = Phase::Pretrain;
  std::int64_t step = 0;
  nn::Model<T> model;
  OptimizerState<T> optimizer;
  Rng rng;
  FinetuneCursor cursor;
  EarlyStop early_stop;
};

// Fresh state around a model: zero moments, rng seeded from cfg.seed.
template <class T>
TrainState<T> make_state(nn::Model<T> model, const TrainConfig& cfg);

struct EvalRow {
  std::string direction;  // "L0->L2"
  double bleu = 0;
};

// Receives the metrics stream in step order.
class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void record(std::int64_t step, const obj::LossRecord& r) = 0;
  virtual void eval(std::int64_t step, const EvalRow& row) = 0;
};

// Appends JSON lines: loss records, and {"step", "direction", "bleu"} rows.
class JsonlSink final : public MetricsSink {
 public:
  explicit JsonlSink(const std::filesystem::path& path, bool append = false);
  void record(std::int64_t step, const obj::LossRecord& r) override;
  void eval(std::int64_t step, const EvalRow& row) override;

 private:
  std::ofstream out_;
};

// Keeps everything in memory.
class MemorySink final : public MetricsSink {
 public:
  struct Eval {
    std::int64_t step;
    EvalRow row;
  };
  void record(std::int64_t step, const obj::LossRecord& r) override { records.emplace_back(step, r); }
  void eval(std::int64_t step, const EvalRow& row) override { evals.push_back({step, row}); }

  std::vector<std::pair<std::int64_t, obj::LossRecord>> records;
  std::vector<Eval> evals;
};

template <class T>
struct Hooks {
  Hooks() = default;
  Hooks(MetricsSink* sink) : metrics(sink) {}  // NOLINT(google-explicit-constructor)

  MetricsSink* metrics = nullptr;
  // Called every cfg.eval_every steps; the mean BLEU drives early stopping.
  std::function<std::vector<EvalRow>(const nn::Model<T>&, std::int64_t step)> evaluate;
  // Called every cfg.checkpoint_every steps.
  std::function<void(const TrainState<T>&)> checkpoint;
  // E-step decoder; defaults to decode_translator(cfg.estep).
  obj::Translator<T> translate;
};

// Index of the dataset a pre-training step uses: uniform when weights is
// empty, otherwise proportional to weights.
std::size_t pick_dataset(Rng& rng, std::size_t n, const std::vector<double>& weights);

// Runs pre-training updates until state.step reaches cfg.steps. Each step picks
// one dataset at random: monolingual data gives a MASS update, parallel data one
// update on the sum of both supervised directions.
template <class T>
void pretrain(TrainState<T>& state, const std::vector<Dataset>& datasets, const TrainConfig& cfg,
              const Hooks<T>& hooks = {});

// Runs fine-tuning updates until state.step reaches cfg.steps or early stopping
// fires. Datasets are visited cyclically in order; every BT or CT term gets its
// own update. Ablations: BT keeps the target pair's monolingual corpora and
// back-translates only between them; M_BT keeps every monolingual corpus and
// direction; FULL adds cross-translation on parallel corpora through each
// remaining language.
template <class T>
void finetune(TrainState<T>& state, const std::vector<Dataset>& datasets, const TrainConfig& cfg,
              const Hooks<T>& hooks = {});

// Datasets fine-tuning would visit under cfg's ablation, in order.
std::vector<Dataset> finetune_datasets(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                                       int num_languages);

// Checkpoint layout (little-endian): char[8] "MUNMTTRN", u32 version,
// u32 precision, u8 phase, i64 step, rng state string, early-stop state,
// optimizer (i64 t, then first and second moments per tensor), the model
// section, then the fine-tune cursor.
template <class T>
void save_checkpoint(const TrainState<T>& state, const std::filesystem::path& path);

template <class T>
TrainState<T> load_checkpoint(const std::filesystem::path& path);

// Also checks the stored model configuration; throws "config mismatch".
template <class T>
TrainState<T> load_checkpoint(const std::filesystem::path& path, const nn::ModelConfig& expected);

}  // namespace munmt::train
