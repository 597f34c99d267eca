#pragma once

#include <iosfwd>
#include <string>

#include "cxgrad/meta.hpp"
#include "cxgrad/tasks.hpp"

namespace cxgrad::config {

struct ConfigError : TensorError {
    explicit ConfigError(const std::string& msg) : TensorError(msg) {}
};

/// Full run description. Serialized as flat key = value text grouped into
/// sections; every key is also settable from the command line, which wins
/// over the file.
struct RunConfig {
    // [run]
    std::string learner = "cxgrad";  // maml | cxgrad
    uint64_t seed = 0;
    long long iterations = 2000;
    std::string output_dir = "runs";
    std::string run_id = "run";
    int parallelism = 1;

    // [task]
    std::string source = "pattern";  // pattern | gaussian | cross-domain | directory
    std::string dataset_path;        // directory source only
    int n_way = 5;
    int k_shot = 1;
    int q_queries = 15;
    int channels = 1;
    int height = 32, width = 32;
    double noise_scale = 1.0;

    // [model]
    int backbone_width = 16;
    int nu_dim = 100;

    // [inner]
    double alpha = 0.01;
    double beta = 1.0;
    double eta = 0.001;
    int steps = 5;
    bool second_order = true;
    std::string context_update = "task-wise";  // task-wise | step-wise
    double bn_eps = 1e-5;

    // [train]
    int batch_size = 4;
    long long eval_every = 100;
    int eval_tasks = 100;

    // [eval]
    int final_eval_tasks = 600;

    void validate() const;  // throws ConfigError naming the offending field
    meta::LearnerKind learner_kind() const;
    meta::InnerLoopConfig inner() const;
    tasks::TaskSource make_source() const;

    std::string serialize() const;
    /// Assigns one "section.key" (or bare "key", unique across sections).
    void set(const std::string& key, const std::string& value);
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Named presets: "desk" (the default above) and "paper" (width-64 backbone,
/// 84x84 3-channel tasks, 60k iterations, batch 4).
RunConfig preset(const std::string& name);

}  // namespace cxgrad::config
