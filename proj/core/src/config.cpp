#include "cxgrad/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cxgrad::config {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Field {
    std::string section;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_num(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T v{};
    ss >> v;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ConfigError("config field '" + key + "': cannot parse '" + value + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config field '" + key + "': expected true/false, got '" + value + "'");
}

// Declaration order defines the serialized layout.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> f = [] {
        std::vector<std::pair<std::string, Field>> v;
        auto str = [&](const char* sec, const char* key, std::string RunConfig::* mem) {
            v.push_back({key, Field{sec, [mem](const RunConfig& c) { return c.*mem; },
                                    [mem](RunConfig& c, const std::string& s) { c.*mem = s; }}});
        };
        auto num = [&](const char* sec, const char* key, auto RunConfig::* mem) {
            v.push_back({key, Field{sec,
                                    [mem](const RunConfig& c) {
                                        using T = std::decay_t<decltype(c.*mem)>;
                                        if constexpr (std::is_floating_point_v<T>)
                                            return fmt(c.*mem);
                                        else
                                            return std::to_string(c.*mem);
                                    },
                                    [mem, key = std::string(key)](RunConfig& c, const std::string& s) {
                                        using T = std::decay_t<decltype(c.*mem)>;
                                        c.*mem = parse_num<T>(key, s);
                                    }}});
        };
        auto boolean = [&](const char* sec, const char* key, bool RunConfig::* mem) {
            v.push_back({key, Field{sec,
                                    [mem](const RunConfig& c) {
                                        return std::string(c.*mem ? "true" : "false");
                                    },
                                    [mem, key = std::string(key)](RunConfig& c, const std::string& s) {
                                        c.*mem = parse_bool(key, s);
                                    }}});
        };
        str("run", "learner", &RunConfig::learner);
        num("run", "seed", &RunConfig::seed);
        num("run", "iterations", &RunConfig::iterations);
        str("run", "output_dir", &RunConfig::output_dir);
        str("run", "run_id", &RunConfig::run_id);
        num("run", "parallelism", &RunConfig::parallelism);
        str("task", "source", &RunConfig::source);
        str("task", "dataset_path", &RunConfig::dataset_path);
        num("task", "n_way", &RunConfig::n_way);
        num("task", "k_shot", &RunConfig::k_shot);
        num("task", "q_queries", &RunConfig::q_queries);
        num("task", "channels", &RunConfig::channels);
        num("task", "height", &RunConfig::height);
        num("task", "width", &RunConfig::width);
        num("task", "noise_scale", &RunConfig::noise_scale);
        num("model", "backbone_width", &RunConfig::backbone_width);
        num("model", "nu_dim", &RunConfig::nu_dim);
        num("inner", "alpha", &RunConfig::alpha);
        num("inner", "beta", &RunConfig::beta);
        num("inner", "eta", &RunConfig::eta);
        num("inner", "steps", &RunConfig::steps);
        boolean("inner", "second_order", &RunConfig::second_order);
        str("inner", "context_update", &RunConfig::context_update);
        num("inner", "bn_eps", &RunConfig::bn_eps);
        num("train", "batch_size", &RunConfig::batch_size);
        num("train", "eval_every", &RunConfig::eval_every);
        num("train", "eval_tasks", &RunConfig::eval_tasks);
        num("eval", "final_eval_tasks", &RunConfig::final_eval_tasks);
        return v;
    }();
    return f;
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("config field '" + field + "': " + why);
    };
    if (learner != "maml" && learner != "cxgrad") fail("run.learner", "must be maml or cxgrad");
    if (iterations < 0) fail("run.iterations", "must be >= 0");
    if (parallelism < 1) fail("run.parallelism", "must be >= 1");
    if (source != "pattern" && source != "gaussian" && source != "cross-domain" &&
        source != "directory")
        fail("task.source", "must be pattern, gaussian, cross-domain or directory");
    if (source == "directory" && dataset_path.empty())
        fail("task.dataset_path", "required for the directory source");
    if (n_way < 2) fail("task.n_way", "must be >= 2");
    if (k_shot < 1) fail("task.k_shot", "must be >= 1");
    if (q_queries < 1) fail("task.q_queries", "must be >= 1");
    if (channels != 1 && channels != 3) fail("task.channels", "must be 1 or 3");
    if (height < 16 || width < 16) fail("task.height/width", "must be at least 16");
    if (noise_scale < 0.0) fail("task.noise_scale", "must be >= 0");
    if (backbone_width < 1) fail("model.backbone_width", "must be >= 1");
    if (nu_dim < 1) fail("model.nu_dim", "must be >= 1");
    if (alpha <= 0.0) fail("inner.alpha", "must be > 0");
    if (beta < 0.0) fail("inner.beta", "must be >= 0");
    if (eta < 0.0) fail("inner.eta", "must be >= 0");
    if (steps < 1) fail("inner.steps", "must be >= 1");
    if (context_update != "task-wise" && context_update != "step-wise")
        fail("inner.context_update", "must be task-wise or step-wise");
    if (bn_eps < 0.0) fail("inner.bn_eps", "must be >= 0");
    if (batch_size < 1) fail("train.batch_size", "must be >= 1");
    if (eval_every < 1) fail("train.eval_every", "must be >= 1");
    if (eval_tasks < 1) fail("train.eval_tasks", "must be >= 1");
    if (final_eval_tasks < 1) fail("eval.final_eval_tasks", "must be >= 1");
}

meta::LearnerKind RunConfig::learner_kind() const { return meta::learner_from_name(learner); }

meta::InnerLoopConfig RunConfig::inner() const {
    meta::InnerLoopConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.eta = eta;
    c.steps = steps;
    c.second_order = second_order;
    c.stepwise_context = context_update == "step-wise";
    c.bn_eps = bn_eps;
    return c;
}

tasks::TaskSource RunConfig::make_source() const {
    if (source == "directory")
        return tasks::TaskSource::from_directory(dataset_path, channels, height, width);
    return tasks::TaskSource::synthetic(tasks::variant_from_name(source),
                                        derive_seed(seed, "task-source"), channels, height, width,
                                        noise_scale);
}

std::string RunConfig::serialize() const {
    std::ostringstream out;
    std::string section;
    for (const auto& [key, field] : fields()) {
        if (field.section != section) {
            if (!section.empty()) out << '\n';
            section = field.section;
            out << '[' << section << "]\n";
        }
        out << key << " = " << field.get(*this) << '\n';
    }
    return out.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
    std::string section, bare = key;
    if (auto dot = key.find('.'); dot != std::string::npos) {
        section = key.substr(0, dot);
        bare = key.substr(dot + 1);
    }
    for (const auto& [k, field] : fields()) {
        if (k == bare && (section.empty() || section == field.section)) {
            field.set(*this, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        cfg.set(section.empty() ? key : section + "." + key, value);
    }
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

RunConfig preset(const std::string& name) {
    RunConfig cfg;  // defaults are the desk-scale preset
    if (name == "desk") return cfg;
    if (name == "paper") {
        cfg.backbone_width = 64;
        cfg.channels = 3;
        cfg.height = 84;
        cfg.width = 84;
        cfg.iterations = 60000;
        cfg.eval_every = 500;
        return cfg;
    }
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

}  // namespace cxgrad::config
