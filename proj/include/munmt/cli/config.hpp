#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "munmt/eval/bleu.hpp"
#include "munmt/lingua/synthetic.hpp"
#include "munmt/model/model.hpp"
#include "munmt/trainer/trainer.hpp"

namespace munmt::cli {

// Bad config text, unknown key, or unparsable value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  int beam = 1;
  std::vector<std::pair<int, int>> directions = {{0, 2}, {2, 0}};
  std::pair<int, int> curve_direction = {2, 0};  // the ablation CSV direction
  int dev_sentences = 200;  // test pairs decoded at periodic evals; 0 means all
  std::string checkpoint;   // evaluate: empty means the finetune run of finetune.ablation
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs/desk";
  std::string data_dir;  // empty means <output_dir>/data
  lingua::WorldConfig world;
  nn::ModelConfig model;
  train::TrainConfig pretrain = train::TrainConfig::pretrain_defaults();
  train::TrainConfig finetune = train::TrainConfig::finetune_defaults();
  std::string finetune_init;        // empty means <output_dir>/pretrain/final.ckpt
  bool finetune_from_scratch = false;
  EvalSettings eval;

  std::filesystem::path data_path() const;
  std::filesystem::path out_path() const { return output_dir; }

  // Cross-section checks: language counts and pairs agree, paths are set.
  void validate() const;
};

// Every recognised key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> to_flat(const ExperimentConfig& cfg);
// One-line description per key.
const std::map<std::string, std::string>& key_docs();

// Applies "key = value" assignments; throws ConfigError on an unknown key or a
// bad value.
void apply(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Parses the flat format: one "key = value" per line, '#' starts a comment,
// blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_flat(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string render_config(const ExperimentConfig& cfg);

}  // namespace munmt::cli
