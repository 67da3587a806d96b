#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "metarecon/metrics.hpp"
#include "metarecon/synth.hpp"
#include "run_config.hpp"

namespace metarecon::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,      // command ran but its check failed (gradcheck)
  kUsage = 2,        // bad flags or unknown subcommand
  kBadConfig = 3,
  kMissingFile = 4,
  kBadFile = 5,      // malformed checkpoint or dataset
  kIoFailure = 6,
  kInternal = 7,
};

/// Full command line (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Standard contrast names of the first `cfg.tasks` tasks.
std::vector<std::string> task_names(const RunConfig& cfg);

std::filesystem::path dataset_path(const RunConfig& cfg, const std::string& task, bool test);

/// Writes the train and test split of every task under cfg.dataset_dir().
void synth_command(const RunConfig& cfg, std::ostream& out);

/// Reads the splits written by synth_command; MissingFileError if absent.
std::vector<TaskSplit> load_datasets(const RunConfig& cfg);

struct TrainSummary {
  std::vector<double> epoch_losses;
  std::filesystem::path last_checkpoint;
};

/// Trains from scratch into cfg.out_dir: config.json, metrics.csv and one
/// checkpoint per epoch.
TrainSummary train_command(const RunConfig& cfg, std::ostream& out);

/// Highest-numbered checkpoint under <run>/checkpoints.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

/// Writes recon/<task>_sliceNN.{mrds,png} and recon/metrics.csv for every test
/// slice. The MRDS slice holds x_T as coils and the final image as target.
void reconstruct_command(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                         std::ostream& out);

struct EvalRow {
  std::string method;  // "Zero-filled", "STL" or "MTML"
  double ar = 0.0;
  std::vector<std::string> tasks;
  std::vector<MetricReport> reports;  // test-split means, one per task
};

/// Zero-filled baseline row and the trained model's row on the test split.
std::vector<EvalRow> evaluate_run(const RunConfig& cfg, const std::filesystem::path& checkpoint);

/// Table with one PSNR/SSIM/NMSE cell per task, rows ordered by AR then method.
void print_table(std::vector<EvalRow> rows, std::ostream& out);
void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path);

struct GradcheckSummary {
  double max_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
  std::vector<std::string> groups;  // e.g. "meta.H", "task1.rho"
};

/// Finite-difference check of the total training loss on the m=2, c=2,
/// 16x16, T=1, r=1 instance, at biases jittered off the ReLU kinks.
GradcheckSummary gradcheck_command(const RunConfig& cfg, std::size_t coordinates,
                                   std::ostream& out);

}  // namespace metarecon::cli
