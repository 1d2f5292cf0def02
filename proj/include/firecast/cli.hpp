#pragma once
// Command-line harness: cube generation/inspection, training, evaluation,
// ablation sweeps, and prediction-map export. Command implementations are
// exposed so tests can drive them in-process.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "firecast/sampling.hpp"
#include "firecast/training.hpp"

namespace firecast::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// "2002-2017", "2018" or "2002,2004" -> year set.
std::set<int> parse_years(const std::string& text);

struct GenArgs {
  std::filesystem::path config;  // optional JSON config; defaults when empty
  uint64_t seed = 0;
  std::filesystem::path out;
};
int cmd_gen_synthetic(const GenArgs& args, std::ostream& log);

int cmd_cube_info(const std::filesystem::path& cube_dir, std::ostream& log);

struct TrainArgs {
  std::filesystem::path cube_dir;
  std::string model = "gru";
  int ts = 12;
  int horizon = 1;
  int radius = 0;
  int k = 9;
  uint64_t seed = 0;
  int epochs = 100;
  std::vector<int> cycles;  // empty: {25,75} when epochs==100, else {epochs}
  int batch_size = 64;
  double base_lr = 0.01;
  double weight_decay = 0.001;
  int val_every = 1;
  std::string negative_policy = "ratio";  // ratio | keep-all
  double negative_ratio = 1.0;
  long long max_train_positives = -1;
  std::vector<int> mlp_hidden = {256, 64};
  std::string target = "burned_area";
  std::string train_years = "2000-2003";
  std::string val_years = "2004";
  std::string test_years = "2005";
  std::filesystem::path out;
};
int cmd_train(const TrainArgs& args, std::ostream& log);

struct EvalArgs {
  std::filesystem::path checkpoint;  // exclusive with baseline
  std::string baseline;              // naive-any | naive-majority
  std::filesystem::path cube_dir;
  std::string split = "test";
  std::filesystem::path results;  // CSV, appended
  // Baseline-only settings (models carry them in the checkpoint):
  int ts = 12;
  int horizon = 1;
  std::string target = "burned_area";
  std::string train_years = "2000-2003";
  std::string val_years = "2004";
  std::string test_years = "2005";
  uint64_t seed = 0;
};
int cmd_evaluate(const EvalArgs& args, std::ostream& log);

struct AblateArgs {
  std::filesystem::path cube_dir;
  std::filesystem::path config;  // sweep grid JSON
  std::filesystem::path out;     // output directory
  int workers = 1;
};
int cmd_ablate(const AblateArgs& args, std::ostream& log);

struct PredictMapArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path cube_dir;
  int t_idx = 0;
  std::filesystem::path out;  // prefix: writes <out>.csv and <out>.pgm
};
int cmd_predict_map(const PredictMapArgs& args, std::ostream& log);

// Full argv entry point used by the binary; maps exceptions to exit codes.
int run_cli(int argc, const char* const* argv);

}  // namespace firecast::cli
