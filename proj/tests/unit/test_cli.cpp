#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "munmt/cli/app.hpp"
#include "munmt/cli/config.hpp"

using namespace munmt;
using namespace munmt::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("munmt_cli_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// A world and model small enough for a few seconds of end-to-end work.
std::vector<std::string> tiny(const fs::path& out) {
  return {"--output_dir=" + out.string(),
          "--world.concepts=12",
          "--world.min_len=3",
          "--world.max_len=6",
          "--world.mono_lines=60",
          "--world.parallel_pairs=30",
          "--world.test_pairs=8",
          "--model.num_layers=1",
          "--model.hidden_dim=16",
          "--model.ffn_dim=32",
          "--model.num_heads=2",
          "--model.max_len=12",
          "--pretrain.steps=6",
          "--pretrain.batch_size=4",
          "--pretrain.warmup_steps=2",
          "--finetune.steps=8",
          "--finetune.batch_size=40",
          "--finetune.warmup_steps=2",
          "--finetune.eval_every=4",
          "--eval.dev_sentences=4"};
}

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args, const std::vector<std::string>& extra = {}) {
  args.insert(args.end(), extra.begin(), extra.end());
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> with(std::string sub, const std::vector<std::string>& flags) {
  std::vector<std::string> a{std::move(sub)};
  a.insert(a.end(), flags.begin(), flags.end());
  return a;
}

}  // namespace

TEST(ConfigParse, CommentsAndBlankLines) {
  const auto kv = parse_flat("# header\n\nseed = 7  # trailing\n  model.hidden_dim=32\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv[0], std::make_pair(std::string("seed"), std::string("7")));
  EXPECT_EQ(kv[1], std::make_pair(std::string("model.hidden_dim"), std::string("32")));
  EXPECT_THROW(parse_flat("no equals sign\n"), ConfigError);
  EXPECT_THROW(parse_flat(" = 3\n"), ConfigError);
}

TEST(ConfigParse, ApplyAndErrors) {
  ExperimentConfig cfg;
  apply(cfg, "finetune.ablation", "m-bt");
  EXPECT_EQ(cfg.finetune.ablation, train::Ablation::MBt);
  apply(cfg, "pretrain.optimizer", "adamax");
  EXPECT_EQ(cfg.pretrain.optimizer, train::OptimizerKind::Adamax);
  apply(cfg, "eval.directions", "L1->L2, 2-1");
  ASSERT_EQ(cfg.eval.directions.size(), 2u);
  EXPECT_EQ(cfg.eval.directions[1], std::make_pair(2, 1));
  apply(cfg, "world.target_tgt", "1");
  EXPECT_EQ(cfg.finetune.target_tgt, 1);
  EXPECT_THROW(apply(cfg, "no.such.key", "1"), ConfigError);
  EXPECT_THROW(apply(cfg, "seed", "abc"), ConfigError);
  EXPECT_THROW(apply(cfg, "pretrain.lr", "1e-3x"), ConfigError);
  EXPECT_THROW(apply(cfg, "finetune.ablation", "most"), ConfigError);
  EXPECT_THROW(apply(cfg, "finetune.from_scratch", "maybe"), ConfigError);
  EXPECT_THROW(apply(cfg, "eval.directions", "L0"), ConfigError);
}

TEST(ConfigParse, RenderRoundTrips) {
  ExperimentConfig cfg;
  apply(cfg, "pretrain.lr", "0.00123");
  apply(cfg, "pretrain.dataset_weights", "1,2,3,0.5");
  apply(cfg, "world.latent", "markov");
  apply(cfg, "finetune.init", "some/where.ckpt");
  const auto text = render_config(cfg);
  ExperimentConfig back;
  for (const auto& [k, v] : parse_flat(text)) apply(back, k, v);
  EXPECT_EQ(render_config(back), text);
  EXPECT_EQ(back.pretrain.base_lr, 0.00123);
  EXPECT_EQ(back.pretrain.dataset_weights.size(), 4u);
}

TEST(ConfigParse, EveryKeyDocumentedAndSettable) {
  const ExperimentConfig cfg;
  const auto flat = to_flat(cfg);
  EXPECT_EQ(flat.size(), key_docs().size());
  ExperimentConfig copy;
  for (const auto& [k, v] : flat) {
    EXPECT_FALSE(key_docs().at(k).empty()) << k;
    EXPECT_NO_THROW(apply(copy, k, v)) << k;
  }
  EXPECT_EQ(render_config(copy), render_config(cfg));
}

TEST(ConfigValidate, CrossSectionChecks) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.eval.directions = {{0, 3}};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.pretrain.dataset_weights = {1, 2};
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.pretrain.warmup_steps = bad.pretrain.total_decay_steps + 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = cfg;
  bad.world.num_languages = 2;
  bad.world.target_tgt = 1;
  bad.finetune.target_tgt = 1;
  bad.world.parallel_tgt = 1;
  bad.eval.directions = {{0, 1}};
  bad.eval.curve_direction = {1, 0};
  EXPECT_NO_THROW(bad.validate());
}

TEST(ConfigFile, LoadMissingAndMalformed) {
  TempDir dir("cfg");
  EXPECT_THROW(load_config(dir.path / "absent.conf"), ConfigError);
  std::ofstream(dir.path / "bad.conf") << "seed = 1\nmodel.hidden = 3\n";
  EXPECT_THROW(load_config(dir.path / "bad.conf"), ConfigError);
  std::ofstream(dir.path / "ok.conf") << "seed = 9\n";
  EXPECT_EQ(load_config(dir.path / "ok.conf").seed, 9u);
}

TEST(CliExit, UsageErrors) {
  TempDir dir("usage");
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({"pretrain", "--bogus=1"}).code, kExitUsage);
  EXPECT_EQ(invoke({"pretrain", "--pretrain.steps=zero"}).code, kExitUsage);
  EXPECT_EQ(invoke({"pretrain", "--config", (dir.path / "none.conf").string()}).code, kExitUsage);
  const auto r = invoke({"finetune", "--output_dir=" + (dir.path / "empty").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("missing"), std::string::npos);
  EXPECT_EQ(invoke({"--help"}).code, kExitOk);
  const auto keys = invoke({"--list-keys"});
  EXPECT_EQ(keys.code, kExitOk);
  EXPECT_EQ(lines_of(keys.out).size(), key_docs().size());
}

TEST(CliExit, OracleCheckPasses) {
  const auto r = invoke({"oracle-check", "--trials=50"});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const auto ls = lines_of(r.out);
  ASSERT_FALSE(ls.empty());
  for (const auto& l : ls) {
    const auto j = nlohmann::json::parse(l);
    EXPECT_TRUE(j["pass"].get<bool>()) << l;
    EXPECT_EQ(j["trials"].get<std::int64_t>() % 50, 0) << l;
  }
}

TEST(CliPipeline, GenPretrainFinetuneEvaluate) {
  TempDir dir("pipe");
  const auto flags = tiny(dir.path / "run");
  ASSERT_EQ(invoke(with("gen-data", flags)).code, kExitOk);
  for (const auto* f : {"vocab.txt", "mono.L2.txt", "parallel.L0-L1.L1.txt", "test.L2-L0.L0.txt", "world.json",
                        "config.resolved"}) {
    EXPECT_TRUE(fs::exists(dir.path / "run" / "data" / f)) << f;
  }
  const auto pre = invoke(with("pretrain", flags));
  ASSERT_EQ(pre.code, kExitOk) << pre.err;
  EXPECT_TRUE(fs::exists(dir.path / "run" / "pretrain" / "final.ckpt"));
  EXPECT_EQ(lines_of(slurp(dir.path / "run" / "pretrain" / "metrics.jsonl")).size() >= 6, true);

  const auto ft = invoke(with("finetune", flags), {"--ablation", "full"});
  ASSERT_EQ(ft.code, kExitOk) << ft.err;
  const fs::path run = dir.path / "run" / "finetune-full";
  for (const auto* f : {"final.ckpt", "metrics.jsonl", "bleu.json", "hyp.L0-L2.txt", "hyp.L2-L0.txt", "config.resolved"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const auto resolved = load_config(run / "config.resolved");
  EXPECT_EQ(resolved.finetune.ablation, train::Ablation::Full);
  EXPECT_EQ(resolved.model.hidden_dim, 16);
  std::int64_t evals = 0;
  for (const auto& l : lines_of(slurp(run / "metrics.jsonl"))) evals += nlohmann::json::parse(l).contains("bleu");
  EXPECT_EQ(evals, 4);  // two directions at steps 4 and 8

  const auto ev = invoke(with("evaluate", flags), {"--finetune.ablation=full"});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  const auto j = nlohmann::json::parse(ev.out);
  EXPECT_TRUE(j.contains("L0->L2"));
  EXPECT_EQ(slurp(dir.path / "run" / "evaluate" / "hyp.L0-L2.txt"), slurp(run / "hyp.L0-L2.txt"));
  EXPECT_EQ(invoke(with("evaluate", flags), {"--eval.checkpoint=" + (dir.path / "nope.ckpt").string()}).code, kExitUsage);

  // Resuming the finished run with a larger budget continues the same log.
  const auto resumed = invoke(with("finetune", flags), {"--ablation=full", "--steps=10", "--resume", (run / "final.ckpt").string()});
  ASSERT_EQ(resumed.code, kExitOk) << resumed.err;
  EXPECT_NE(slurp(run / "metrics.jsonl").find("\"step\":10"), std::string::npos);
  EXPECT_EQ(invoke(with("finetune", flags), {"--resume", (dir.path / "run" / "pretrain" / "final.ckpt").string()}).code,
            kExitUsage);
}

TEST(CliPipeline, SameSeedSameArtifacts) {
  TempDir dir("det");
  auto a = tiny(dir.path / "a");
  auto b = tiny(dir.path / "b");
  for (const auto* sub : {"gen-data", "pretrain"}) {
    ASSERT_EQ(invoke(with(sub, a)).code, kExitOk);
    ASSERT_EQ(invoke(with(sub, b)).code, kExitOk);
  }
  EXPECT_EQ(slurp(dir.path / "a" / "data" / "mono.L1.txt"), slurp(dir.path / "b" / "data" / "mono.L1.txt"));
  EXPECT_EQ(slurp(dir.path / "a" / "pretrain" / "metrics.jsonl"), slurp(dir.path / "b" / "pretrain" / "metrics.jsonl"));
  EXPECT_EQ(slurp(dir.path / "a" / "pretrain" / "final.ckpt"), slurp(dir.path / "b" / "pretrain" / "final.ckpt"));
}

TEST(CliPipeline, AblateTable) {
  TempDir dir("ablate");
  const auto flags = tiny(dir.path / "run");
  ASSERT_EQ(invoke(with("ablate", flags)).code, kExitUsage);  // no pre-trained checkpoint yet
  ASSERT_EQ(invoke(with("gen-data", flags)).code, kExitOk);
  ASSERT_EQ(invoke(with("pretrain", flags)).code, kExitOk);
  const auto r = invoke(with("ablate", flags));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto rows = lines_of(slurp(dir.path / "run" / "ablate" / "ablation.csv"));
  ASSERT_EQ(rows.size(), 4u);  // header and three configurations
  EXPECT_EQ(rows[0], "config,0,4,8");
  EXPECT_EQ(rows[1].rfind("bt,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("m_bt,", 0), 0u);
  EXPECT_EQ(rows[3].rfind("full,", 0), 0u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::count(rows[i].begin(), rows[i].end(), ','), 3) << rows[i];
  }
  const auto summary = nlohmann::json::parse(slurp(dir.path / "run" / "ablate" / "ablation_summary.json"));
  for (const auto* k : {"only_pretrain", "bt", "m_bt", "full"}) EXPECT_TRUE(summary["final"].contains(k)) << k;
}

// Last-100-step MASS mean on the desk config measured 1.61 nats/token; pinned
// with 20% slack.
TEST(DeskPretrain, MassLossSettles) {
  TempDir dir("desk_mass");
  const std::vector<std::string> flags{"-c", MUNMT_DESK_CONFIG, "--output_dir=" + (dir.path / "run").string()};
  ASSERT_EQ(invoke(with("gen-data", flags)).code, kExitOk);
  const auto r = invoke(with("pretrain", flags));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  double sum = 0;
  int n = 0;
  for (const auto& line : lines_of(slurp(dir.path / "run" / "pretrain" / "metrics.jsonl"))) {
    const auto j = nlohmann::json::parse(line);
    if (j.value("kind", "") != "MASS" || j["step"].get<int>() <= 1900) continue;
    sum += j["value"].get<double>();
    ++n;
  }
  ASSERT_GT(n, 0);
  EXPECT_LT(sum / n, 1.95);
}
