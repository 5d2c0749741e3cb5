#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mncd/config.hpp"
#include "mncd/data.hpp"
#include "mncd/gradcheck.hpp"
#include "mncd/metrics.hpp"
#include "mncd/model.hpp"

namespace mncd {

// Process exit statuses of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
  kExitGradcheck = 5,
  kExitCheckpoint = 6,
};

// Maps the exception currently being handled to an exit status.
int exit_code_for_current_exception();

// Thresholded predictions for every sample, in input order.
std::vector<BinaryMap> predict_maps(ChangeDetector& model, const std::vector<SamplePair>& samples,
                                    std::int64_t batch_size);

// Micro-averaged confusion over samples.
ConfusionCounts evaluate_counts(ChangeDetector& model, const std::vector<SamplePair>& samples,
                                std::int64_t batch_size);

struct CommandOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::string split = "test";
};

// output_dir/{checkpoint.bin, train_log.jsonl, config.json}. A checkpoint
// option resumes from it.
int run_train(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
// Prints the report and writes output_dir/metrics_<split>.json.
int run_eval(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
// output_dir/predictions/<site>/<patch>.png, 0 or 255 per pixel.
int run_predict(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
// output_dir/renders/<site>/<patch>.png in the TP/TN/FP/FN palette.
int run_render(const ExperimentConfig& config, const CommandOptions& options, std::ostream& out);
// Needs no config.
int run_gradcheck(const gradcheck::Options& options, std::ostream& out);

}  // namespace mncd
