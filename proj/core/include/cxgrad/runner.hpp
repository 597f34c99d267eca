#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cxgrad/checkpoint.hpp"
#include "cxgrad/config.hpp"

namespace cxgrad::runner {

inline constexpr const char* kVersion = "0.1.0";

/// Environment variable that, when set, replaces the configured output
/// directory root.
inline constexpr const char* kOutputDirEnv = "CXGRAD_OUTPUT_DIR";

struct RunManifest {
    std::string run_dir;
    std::string manifest_path;
    std::string metrics_csv;
    std::string gradnorm_csv;
    std::string best_checkpoint;
    std::string final_checkpoint;
    double best_val_accuracy = 0.0;
    long long iterations = 0;
};

/// Meta-trains per the config, logging per-iteration metrics, periodically
/// evaluating on the validation split, and checkpointing both the best-by-
/// validation and the final model. Returns the written artifact paths.
RunManifest cmd_train(const config::RunConfig& cfg, std::ostream& log);

struct EvalOutcome {
    meta::EvalResult result;
    std::string split;
    bool split_warning = false;  // evaluated on the training split
};

EvalOutcome cmd_eval(const std::string& checkpoint_path, const std::string& split, int n_tasks,
                     std::ostream& log);

struct AnalyzeOptions {
    std::string metric;        // gradnorm | cka | landscape | embeddings
    std::string split = "test";
    int episodes = 100;
    int layer = 0;             // cka: 0 = all backbone blocks
    bool after_adaptation = true;  // embeddings
    std::string output_dir;    // defaults to the run dir next to the checkpoint
};

/// Runs one diagnostic over freshly sampled episodes and writes
/// {run-id}.{metric}.csv. Returns the written file paths.
std::vector<std::string> cmd_analyze(const std::string& checkpoint_path,
                                     const AnalyzeOptions& opts, std::ostream& log);

}  // namespace cxgrad::runner
