#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "munmt/cli/config.hpp"
#include "munmt/eval/bleu.hpp"
#include "munmt/lingua/synthetic.hpp"

namespace munmt::cli {

// Missing input file or checkpoint, or a bad command line. Exits with 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Corpus file names inside the data directory.
std::filesystem::path vocab_file(const std::filesystem::path& dir);
std::filesystem::path mono_file(const std::filesystem::path& dir, int lang);
std::filesystem::path parallel_file(const std::filesystem::path& dir, int a, int b, int side);
std::filesystem::path test_file(const std::filesystem::path& dir, int src, int tgt, int side);

struct CorpusData {
  lingua::Vocabulary vocab;
  std::vector<lingua::MonoCorpus> mono;          // one per language, in order
  std::vector<lingua::ParallelCorpus> parallel;  // empty when the pair has no files
  std::vector<lingua::GoldTestSet> tests;        // the directions listed in eval.directions and the curve direction

  const lingua::GoldTestSet& test(int src, int tgt) const;
};

// Writes vocab, corpora, every directed test set, and world.json.
void write_world(const lingua::SyntheticWorld& world, std::uint64_t seed, const std::filesystem::path& dir);

// Reads the data directory. Lines longer than the model allows are dropped.
CorpusData load_data(const ExperimentConfig& cfg);

// cfg.model with vocabulary size and language count filled in.
nn::ModelConfig resolved_model(const ExperimentConfig& cfg, const CorpusData& data);

struct DirectionScore {
  int src = 0;
  int tgt = 0;
  eval::BleuReport report;
};

struct FinetuneOutcome {
  std::filesystem::path run_dir;
  std::int64_t steps = 0;
  bool stopped_early = false;
  std::vector<DirectionScore> scores;  // full test sets, at the final step
};

struct AblationSummary {
  std::vector<std::int64_t> steps;  // CSV columns; 0 is the pre-trained model
  std::map<std::string, std::vector<std::optional<double>>> curves;  // "bt", "m_bt", "full"
  std::map<std::string, std::vector<DirectionScore>> final_scores;   // plus "only_pretrain"

  double final_bleu(const std::string& config, int src, int tgt) const;
};

// Subcommand bodies. Progress goes to log; artifacts land under cfg.output_dir.
void gen_data(const ExperimentConfig& cfg, std::ostream& log);
std::filesystem::path run_pretrain(const ExperimentConfig& cfg, const std::filesystem::path& resume, std::ostream& log);
FinetuneOutcome run_finetune(const ExperimentConfig& cfg, const std::filesystem::path& run_dir,
                             const std::filesystem::path& resume, std::ostream& log);
std::vector<DirectionScore> run_evaluate(const ExperimentConfig& cfg, std::ostream& log);
AblationSummary run_ablate(const ExperimentConfig& cfg, std::ostream& log);
// Prints one JSON line per check; true when all pass.
bool oracle_check(std::ostream& out, int trials, std::uint64_t seed);

// Where the finetune subcommand writes for a given ablation.
std::filesystem::path finetune_dir(const ExperimentConfig& cfg, train::Ablation ablation);

// Entry point of the munmt executable. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace munmt::cli
