#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cxgrad/runner.hpp"

namespace {

// Exit codes: 0 success, 1 usage error, 2 runtime failure.
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

void apply_overrides(cxgrad::config::RunConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw cxgrad::config::ConfigError("--set expects key=value, got '" + s + "'");
        cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-based meta-learning toolkit (MAML and contextual gradient scaling)"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Meta-train a model");
    std::string config_path, preset_name = "desk";
    std::vector<std::string> overrides;
    train->add_option("--config", config_path, "Config file (key = value sections)");
    train->add_option("--preset", preset_name, "Base preset: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    train->add_option("--set", overrides, "Override a config key, e.g. --set inner.alpha=0.02")
        ->take_all();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string ckpt_path, split = "test";
    int n_tasks = 0;
    eval->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
    eval->add_option("--split", split, "Split to evaluate: train, val or test");
    eval->add_option("--tasks", n_tasks, "Episode count (0 = configured default, 600)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Run a diagnostic and write CSVs");
    cxgrad::runner::AnalyzeOptions aopts;
    std::string a_ckpt;
    analyze->add_option("checkpoint", a_ckpt, "Checkpoint file")->required();
    analyze->add_option("metric", aopts.metric, "gradnorm, cka, landscape or embeddings")
        ->required();
    analyze->add_option("--split", aopts.split, "Episode split (default test)");
    analyze->add_option("--episodes", aopts.episodes, "Episode count");
    analyze->add_option("--layer", aopts.layer, "Backbone block for cka (0 = all)");
    analyze->add_flag("--before", [&aopts](int64_t) { aopts.after_adaptation = false; },
                      "Export pre-adaptation embeddings");
    analyze->add_option("--output-dir", aopts.output_dir, "Where to write CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*train) {
            cxgrad::config::RunConfig cfg = cxgrad::config::preset(preset_name);
            if (!config_path.empty()) cfg = cxgrad::config::load_config(config_path);
            apply_overrides(cfg, overrides);
            cxgrad::runner::cmd_train(cfg, std::cout);
        } else if (*eval) {
            cxgrad::runner::cmd_eval(ckpt_path, split, n_tasks, std::cout);
        } else if (*analyze) {
            cxgrad::runner::cmd_analyze(a_ckpt, aopts, std::cout);
        }
    } catch (const cxgrad::config::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
