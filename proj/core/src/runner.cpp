#include "cxgrad/runner.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cxgrad/analysis.hpp"
#include "json.hpp"

namespace cxgrad::runner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string output_root(const config::RunConfig& cfg) {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return cfg.output_dir;
}

checkpoint::Checkpoint make_checkpoint(const config::RunConfig& cfg, const meta::MetaKnowledge& mk,
                                       const meta::AdamState& opt) {
    checkpoint::Checkpoint ck;
    ck.kind = cfg.learner_kind();
    ck.n_way = cfg.n_way;
    ck.width = cfg.backbone_width;
    ck.in_channels = cfg.channels;
    ck.image_h = cfg.height;
    ck.image_w = cfg.width;
    ck.mk = mk;
    ck.opt = opt;
    ck.config_text = cfg.serialize();
    return ck;
}

config::RunConfig config_of(const checkpoint::Checkpoint& ck) {
    std::istringstream ss(ck.config_text);
    return config::parse_config(ss);
}

std::vector<tasks::Episode> sample_batch(const tasks::TaskSource& source, tasks::Split split,
                                         const config::RunConfig& cfg, int count, Rng& rng) {
    std::vector<tasks::Episode> batch;
    batch.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        batch.push_back(source.sample_episode(split, cfg.n_way, cfg.k_shot, cfg.q_queries, rng));
    return batch;
}

}  // namespace

RunManifest cmd_train(const config::RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const meta::LearnerKind kind = cfg.learner_kind();
    const meta::InnerLoopConfig inner = cfg.inner();
    const tasks::TaskSource source = cfg.make_source();

    const fs::path run_dir = fs::path(output_root(cfg)) / cfg.run_id;
    fs::create_directories(run_dir);

    Rng init_rng(derive_seed(cfg.seed, "init"));
    meta::MetaKnowledge mk =
        meta::make_meta_knowledge(kind, cfg.n_way, cfg.backbone_width, cfg.channels, cfg.height,
                                  cfg.width, cfg.nu_dim, init_rng);
    meta::AdamState opt;
    Rng episode_rng(derive_seed(cfg.seed, "train-episodes"));

    RunManifest man;
    man.run_dir = run_dir.string();
    man.iterations = cfg.iterations;
    man.metrics_csv = (run_dir / (cfg.run_id + ".metrics.csv")).string();
    man.gradnorm_csv = (run_dir / (cfg.run_id + ".gradnorm.csv")).string();
    man.best_checkpoint = (run_dir / (cfg.run_id + ".best.ckpt")).string();
    man.final_checkpoint = (run_dir / (cfg.run_id + ".final.ckpt")).string();
    man.manifest_path = (run_dir / (cfg.run_id + ".manifest.json")).string();
    const std::string val_csv = (run_dir / (cfg.run_id + ".val.csv")).string();

    std::ofstream metrics(man.metrics_csv, std::ios::trunc);
    if (!metrics) throw config::ConfigError("cannot write metrics CSV: " + man.metrics_csv);
    metrics << "iteration,query_loss,query_accuracy,conv1,conv2,conv3,conv4,classifier\n";
    std::ofstream val_log(val_csv, std::ios::trunc);
    val_log << "iteration,accuracy,ci95\n";

    std::vector<analysis::GradNormRecord> gradnorms;
    double best_val = -1.0;
    bool have_best = false;

    auto run_validation = [&](long long iter) {
        Rng val_rng(derive_seed(derive_seed(cfg.seed, "val-eval"), std::to_string(iter)));
        meta::EvalResult r = meta::evaluate(mk, kind, source, tasks::Split::Val, cfg.n_way,
                                            cfg.k_shot, cfg.q_queries, inner, cfg.eval_tasks,
                                            val_rng);
        val_log << iter << ',' << fmt(r.mean_accuracy) << ',' << fmt(r.ci95) << '\n';
        log << "iter " << iter << " val accuracy " << r.mean_accuracy << " +/- " << r.ci95 << '\n';
        if (r.mean_accuracy > best_val) {
            best_val = r.mean_accuracy;
            checkpoint::save_checkpoint(man.best_checkpoint, make_checkpoint(cfg, mk, opt));
            have_best = true;
        }
        return r;
    };

    for (long long iter = 1; iter <= cfg.iterations; ++iter) {
        auto batch = sample_batch(source, tasks::Split::Train, cfg, cfg.batch_size, episode_rng);
        meta::OuterMetrics m = meta::outer_step(mk, batch, inner, kind, opt, cfg.parallelism);
        metrics << iter << ',' << fmt(m.query_loss) << ',' << fmt(m.query_accuracy);
        for (double v : m.mean_layer_grad_norms) metrics << ',' << fmt(v);
        metrics << '\n';
        analysis::GradNormRecord rec;
        rec.iteration = iter;
        rec.layer_norms = m.mean_layer_grad_norms;
        gradnorms.push_back(std::move(rec));
        if (iter % cfg.eval_every == 0) run_validation(iter);
    }

    checkpoint::save_checkpoint(man.final_checkpoint, make_checkpoint(cfg, mk, opt));
    if (!have_best) {
        // No validation pass happened (e.g. iterations=0): the final state is
        // also the best-so-far.
        checkpoint::save_checkpoint(man.best_checkpoint, make_checkpoint(cfg, mk, opt));
        best_val = 0.0;
    }
    man.best_val_accuracy = best_val;

    {
        std::ofstream gn(man.gradnorm_csv, std::ios::trunc);
        analysis::write_gradnorm_csv(gn, gradnorms);
    }

    json j;
    j["tool_version"] = kVersion;
    j["seed"] = cfg.seed;
    j["iterations"] = cfg.iterations;
    j["config"] = cfg.serialize();
    j["best_val_accuracy"] = man.best_val_accuracy;
    j["metrics_csv"] = man.metrics_csv;
    j["gradnorm_csv"] = man.gradnorm_csv;
    j["val_csv"] = val_csv;
    j["best_checkpoint"] = man.best_checkpoint;
    j["final_checkpoint"] = man.final_checkpoint;
    std::ofstream mf(man.manifest_path, std::ios::trunc);
    mf << j.dump(2) << '\n';

    log << "run complete: " << man.run_dir << '\n';
    return man;
}

EvalOutcome cmd_eval(const std::string& checkpoint_path, const std::string& split, int n_tasks,
                     std::ostream& log) {
    checkpoint::Checkpoint ck = checkpoint::load_checkpoint(checkpoint_path);
    config::RunConfig cfg = config_of(ck);
    tasks::Split sp = tasks::split_from_name(split);

    EvalOutcome out;
    out.split = split;
    if (sp == tasks::Split::Train) {
        out.split_warning = true;
        log << "warning: evaluating on the training split; accuracies are not "
               "a generalization measure\n";
    }
    if (n_tasks <= 0) n_tasks = cfg.final_eval_tasks;

    tasks::TaskSource source = cfg.make_source();
    Rng rng(derive_seed(cfg.seed, "eval:" + split));
    out.result = meta::evaluate(ck.mk, ck.kind, source, sp, cfg.n_way, cfg.k_shot, cfg.q_queries,
                                cfg.inner(), n_tasks, rng);
    log << "accuracy " << out.result.mean_accuracy << " +/- " << out.result.ci95 << " over "
        << out.result.n_tasks << " tasks\n";
    return out;
}

std::vector<std::string> cmd_analyze(const std::string& checkpoint_path,
                                     const AnalyzeOptions& opts, std::ostream& log) {
    checkpoint::Checkpoint ck = checkpoint::load_checkpoint(checkpoint_path);
    config::RunConfig cfg = config_of(ck);
    const meta::InnerLoopConfig inner = cfg.inner();
    const tasks::Split sp = tasks::split_from_name(opts.split);
    tasks::TaskSource source = cfg.make_source();
    Rng rng(derive_seed(cfg.seed, "analyze:" + opts.metric + ":" + opts.split));

    const fs::path out_dir = opts.output_dir.empty()
                                 ? fs::path(checkpoint_path).parent_path()
                                 : fs::path(opts.output_dir);
    if (!out_dir.empty()) fs::create_directories(out_dir);
    auto out_path = [&](const std::string& metric) {
        return (out_dir / (cfg.run_id + "." + metric + ".csv")).string();
    };

    if (opts.episodes < 1)
        throw config::ConfigError("analyze: episode count must be >= 1, got " +
                                  std::to_string(opts.episodes));

    std::vector<std::string> written;
    if (opts.metric == "gradnorm") {
        std::vector<meta::AdaptResult> results;
        for (int i = 0; i < opts.episodes; ++i) {
            tasks::Episode ep =
                source.sample_episode(sp, cfg.n_way, cfg.k_shot, cfg.q_queries, rng);
            Graph g;
            meta::GraphModel gm = meta::to_graph(g, ck.mk);
            results.push_back(meta::adapt(g, gm, ep, inner, ck.kind));
        }
        std::vector<analysis::GradNormRecord> recs{
            analysis::layer_grad_norms(results, ck.opt.t)};
        std::ofstream out(out_path("gradnorm"), std::ios::trunc);
        analysis::write_gradnorm_csv(out, recs);
        written.push_back(out_path("gradnorm"));
    } else if (opts.metric == "cka") {
        std::vector<analysis::CKARecord> recs;
        const int lo = opts.layer == 0 ? 1 : opts.layer;
        const int hi = opts.layer == 0 ? nn::kNumBlocks : opts.layer;
        for (int layer = lo; layer <= hi; ++layer)
            recs.push_back(analysis::cka_before_after(ck.mk, ck.kind, source, sp, cfg.n_way,
                                                      cfg.k_shot, cfg.q_queries, inner, layer,
                                                      opts.episodes, rng));
        std::ofstream out(out_path("cka"), std::ios::trunc);
        analysis::write_cka_csv(out, recs);
        written.push_back(out_path("cka"));
    } else if (opts.metric == "landscape") {
        auto batch = sample_batch(source, sp, cfg, opts.episodes, rng);
        std::vector<analysis::LandscapeRecord> recs{
            analysis::landscape_metrics(ck.mk, ck.kind, batch, inner, ck.opt.t)};
        std::ofstream out(out_path("landscape"), std::ios::trunc);
        analysis::write_landscape_csv(out, recs);
        written.push_back(out_path("landscape"));
    } else if (opts.metric == "embeddings") {
        tasks::Episode ep = source.sample_episode(sp, cfg.n_way, cfg.k_shot, cfg.q_queries, rng);
        auto rows =
            analysis::export_embeddings(ck.mk, ck.kind, ep, inner, opts.after_adaptation);
        std::ofstream out(out_path("embeddings"), std::ios::trunc);
        analysis::write_embeddings_csv(out, rows);
        written.push_back(out_path("embeddings"));
    } else {
        throw config::ConfigError("unknown analysis metric '" + opts.metric +
                                  "' (expected gradnorm, cka, landscape or embeddings)");
    }

    for (const auto& p : written) log << "wrote " << p << '\n';
    return written;
}

}  // namespace cxgrad::runner
