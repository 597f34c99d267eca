#include "cxgrad/meta.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace cxgrad::meta {

LearnerKind learner_from_name(const std::string& name) {
    if (name == "maml") return LearnerKind::Maml;
    if (name == "cxgrad") return LearnerKind::CxGrad;
    throw std::invalid_argument("unknown learner '" + name + "' (expected maml or cxgrad)");
}

const char* learner_name(LearnerKind k) { return k == LearnerKind::Maml ? "maml" : "cxgrad"; }

void InnerLoopConfig::validate() const {
    if (alpha <= 0.0) throw std::invalid_argument("inner lr alpha must be > 0");
    if (beta < 0.0) throw std::invalid_argument("context lr beta must be >= 0");
    if (eta < 0.0) throw std::invalid_argument("outer lr eta must be >= 0");
    if (steps < 1) throw std::invalid_argument("inner steps must be >= 1");
}

MetaKnowledge make_meta_knowledge(LearnerKind kind, int n_way, int width, int in_channels,
                                  int image_h, int image_w, int nu_dim, Rng& rng) {
    MetaKnowledge mk;
    mk.backbone = nn::make_backbone(width, in_channels, rng);
    mk.classifier = nn::make_classifier(n_way, nn::feature_dim(mk.backbone, image_h, image_w), rng);
    mk.nu_dim = nu_dim;
    if (kind == LearnerKind::CxGrad) mk.subnet = nn::make_subnetwork(nu_dim, nu_dim, rng);
    return mk;
}

std::vector<std::pair<std::string, Tensor*>> named_params(MetaKnowledge& mk) {
    auto out = nn::named_params(mk.backbone);
    for (auto& p : nn::named_params(mk.classifier)) out.push_back(p);
    if (mk.subnet)
        for (auto& p : nn::named_params(*mk.subnet)) out.push_back(p);
    return out;
}

GraphModel to_graph(Graph& g, const MetaKnowledge& mk) {
    GraphModel gm;
    gm.theta.backbone = nn::to_graph(g, mk.backbone);
    gm.theta.classifier = nn::to_graph(g, mk.classifier);
    if (mk.subnet) gm.subnet = nn::to_graph(g, *mk.subnet);
    return gm;
}

Tensor support_loss(const Model& m, const tasks::Episode& ep, double bn_eps) {
    Tensor logits = nn::classifier_forward(m.classifier, nn::backbone_forward(m.backbone, ep.support_x, bn_eps));
    return ops::softmax_cross_entropy(logits, ep.support_y);
}

Tensor query_loss(const Model& m, const tasks::Episode& ep, double bn_eps) {
    Tensor logits = nn::classifier_forward(m.classifier, nn::backbone_forward(m.backbone, ep.query_x, bn_eps));
    return ops::softmax_cross_entropy(logits, ep.query_y);
}

double query_accuracy(const Model& m, const tasks::Episode& ep, double bn_eps) {
    Tensor logits = nn::classifier_forward(m.classifier, nn::backbone_forward(m.backbone, ep.query_x, bn_eps));
    const int B = logits.dim(0), N = logits.dim(1);
    int correct = 0;
    for (int b = 0; b < B; ++b) {
        int best = 0;  // lowest index wins exact ties
        for (int j = 1; j < N; ++j)
            if (logits[static_cast<size_t>(b) * N + j] > logits[static_cast<size_t>(b) * N + best]) best = j;
        if (best == ep.query_y[static_cast<size_t>(b)]) ++correct;
    }
    return static_cast<double>(correct) / B;
}

Model igs(const Model& theta, const Tensor& nu, const nn::SubNetwork& phi) {
    Tensor gammas = nn::generate_scaling_factors(phi, nu);
    Model out = theta;
    for (int ell = 0; ell < nn::kNumBlocks; ++ell) {
        Tensor& w = out.backbone.blocks[static_cast<size_t>(ell)].conv_w;
        Tensor norm = ops::l2_norm(w);
        if (norm.item() == 0.0)
            throw TensorError("igs: backbone layer " + std::to_string(ell + 1) +
                              " has zero norm; normalization undefined");
        Tensor factor = ops::div(ops::slice_scalar(gammas, ell), norm);
        w = ops::mul(w, ops::expand(ops::reshape(factor, {1, 1, 1, 1}), w.shape()));
    }
    return out;
}

Tensor update_context(Graph& g, const Model& theta_after_igs, const Tensor& nu,
                      const tasks::Episode& ep, const InnerLoopConfig& cfg) {
    Tensor loss = support_loss(theta_after_igs, ep, cfg.bn_eps);
    GradMap grads = g.backward(loss, cfg.second_order);
    if (!grads.contains(nu))
        throw GraphError("update_context: nu has no gradient path into the loss (igs not applied?)");
    return ops::sub(nu, ops::scale(grads.at(nu), cfg.beta));
}

namespace {

std::vector<Tensor*> theta_tensors(Model& m) {
    std::vector<Tensor*> out;
    for (auto& blk : m.backbone.blocks) {
        out.push_back(&blk.conv_w);
        out.push_back(&blk.bn_gamma);
        out.push_back(&blk.bn_beta);
    }
    out.push_back(&m.classifier.weight);
    out.push_back(&m.classifier.bias);
    return out;
}

double tensor_norm(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

/// Gradient norms of the 4 conv layers plus the classifier (weight and bias
/// combined).
std::vector<double> record_layer_norms(Model& m, GradMap& grads) {
    std::vector<double> norms;
    for (auto& blk : m.backbone.blocks) {
        double n = grads.contains(blk.conv_w) ? tensor_norm(grads.at(blk.conv_w)) : 0.0;
        norms.push_back(n);
    }
    double cw = grads.contains(m.classifier.weight) ? tensor_norm(grads.at(m.classifier.weight)) : 0.0;
    double cb = grads.contains(m.classifier.bias) ? tensor_norm(grads.at(m.classifier.bias)) : 0.0;
    norms.push_back(std::sqrt(cw * cw + cb * cb));
    return norms;
}

Model sgd_update(Model m, GradMap& grads, double alpha) {
    for (Tensor* p : theta_tensors(m)) {
        if (!grads.contains(*p)) continue;
        *p = ops::sub(*p, ops::scale(grads.at(*p), alpha));
    }
    return m;
}

std::vector<double> tensor_values(const Tensor& t) { return t.data(); }

}  // namespace

AdaptResult maml_adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                       const InnerLoopConfig& cfg) {
    if (ep.support_y.empty()) throw TensorError("maml_adapt: episode has empty support set");
    AdaptResult res;
    res.theta = model.theta;
    for (int s = 0; s < cfg.steps; ++s) {
        res.step_models.push_back(res.theta);
        Tensor loss = support_loss(res.theta, ep, cfg.bn_eps);
        GradMap grads = g.backward(loss, cfg.second_order);
        res.support_losses.push_back(loss.item());
        res.layer_grad_norms.push_back(record_layer_norms(res.theta, grads));
        res.theta = sgd_update(res.theta, grads, cfg.alpha);
    }
    return res;
}

AdaptResult cxgrad_adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                         const InnerLoopConfig& cfg) {
    if (ep.support_y.empty()) throw TensorError("cxgrad_adapt: episode has empty support set");
    if (!model.subnet) throw TensorError("cxgrad_adapt: meta-knowledge has no sub-network");
    AdaptResult res;
    res.theta = model.theta;

    // Context reset, then the warm-up context update: one extra
    // forward/backward through IGS before the first real step.
    Tensor nu = g.leaf(Tensor::zeros({model.subnet->w1.dim(1)}), true);
    auto warmup = [&](const Model& th) {
        Model scaled = igs(th, nu, *model.subnet);
        res.gamma_history.push_back(tensor_values(nn::generate_scaling_factors(*model.subnet, nu)));
        Tensor loss = support_loss(scaled, ep, cfg.bn_eps);
        GradMap grads = g.backward(loss, cfg.second_order);
        res.support_losses.push_back(loss.item());
        if (grads.contains(nu)) nu = ops::sub(nu, ops::scale(grads.at(nu), cfg.beta));
    };

    if (!cfg.stepwise_context) warmup(res.theta);

    for (int s = 0; s < cfg.steps; ++s) {
        if (cfg.stepwise_context) {
            nu = g.leaf(Tensor::zeros({model.subnet->w1.dim(1)}), true);
            warmup(res.theta);
        }
        res.theta = igs(res.theta, nu, *model.subnet);
        res.gamma_history.push_back(tensor_values(nn::generate_scaling_factors(*model.subnet, nu)));
        res.step_models.push_back(res.theta);
        Tensor loss = support_loss(res.theta, ep, cfg.bn_eps);
        GradMap grads = g.backward(loss, cfg.second_order);
        res.support_losses.push_back(loss.item());
        res.layer_grad_norms.push_back(record_layer_norms(res.theta, grads));
        res.theta = sgd_update(res.theta, grads, cfg.alpha);
        if (grads.contains(nu)) nu = ops::sub(nu, ops::scale(grads.at(nu), cfg.beta));
    }
    res.nu = nu;
    return res;
}

AdaptResult adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                  const InnerLoopConfig& cfg, LearnerKind kind) {
    return kind == LearnerKind::Maml ? maml_adapt(g, model, ep, cfg) : cxgrad_adapt(g, model, ep, cfg);
}

namespace {

struct EpisodeOutcome {
    std::unordered_map<std::string, Tensor> grads;
    double query_loss = 0.0;
    double query_accuracy = 0.0;
    std::vector<double> step_mean_layer_norms;  // averaged over this task's steps
};

EpisodeOutcome run_episode(const MetaKnowledge& mk, const tasks::Episode& ep,
                           const InnerLoopConfig& cfg, LearnerKind kind) {
    Graph g;
    GraphModel gm = to_graph(g, mk);
    AdaptResult ar = adapt(g, gm, ep, cfg, kind);
    Tensor ql = query_loss(ar.theta, ep, cfg.bn_eps);

    EpisodeOutcome out;
    out.query_loss = ql.item();
    out.query_accuracy = query_accuracy(ar.theta, ep, cfg.bn_eps);

    GradMap grads = g.backward(ql, false);
    MetaKnowledge names_view = mk;  // shallow copy, for the name list only
    auto names = named_params(names_view);
    // Leaves were created from mk in named_params order by to_graph.
    std::vector<Tensor*> leaves;
    for (auto& blk : gm.theta.backbone.blocks) {
        leaves.push_back(&blk.conv_w);
        leaves.push_back(&blk.bn_gamma);
        leaves.push_back(&blk.bn_beta);
    }
    leaves.push_back(&gm.theta.classifier.weight);
    leaves.push_back(&gm.theta.classifier.bias);
    if (gm.subnet) {
        leaves.push_back(&gm.subnet->w1);
        leaves.push_back(&gm.subnet->b1);
        leaves.push_back(&gm.subnet->w2);
        leaves.push_back(&gm.subnet->b2);
    }
    for (size_t i = 0; i < names.size(); ++i) {
        const Tensor& leaf = *leaves[i];
        out.grads[names[i].first] =
            grads.contains(leaf) ? grads.at(leaf).detached() : Tensor::zeros(leaf.shape());
    }

    if (!ar.layer_grad_norms.empty()) {
        out.step_mean_layer_norms.assign(ar.layer_grad_norms.front().size(), 0.0);
        for (const auto& step : ar.layer_grad_norms)
            for (size_t i = 0; i < step.size(); ++i) out.step_mean_layer_norms[i] += step[i];
        for (auto& v : out.step_mean_layer_norms)
            v /= static_cast<double>(ar.layer_grad_norms.size());
    }
    return out;
}

void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long long t,
                 double eta, const AdamState& st) {
    auto& pd = param.mutable_data();
    const auto& gd = grad.data();
    auto& md = m.mutable_data();
    auto& vd = v.mutable_data();
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(t));
    for (size_t i = 0; i < pd.size(); ++i) {
        md[i] = st.beta1 * md[i] + (1.0 - st.beta1) * gd[i];
        vd[i] = st.beta2 * vd[i] + (1.0 - st.beta2) * gd[i] * gd[i];
        const double mhat = md[i] / bc1;
        const double vhat = vd[i] / bc2;
        pd[i] -= eta * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace

OuterMetrics outer_step(MetaKnowledge& mk, const std::vector<tasks::Episode>& batch,
                        const InnerLoopConfig& cfg, LearnerKind kind, AdamState& opt,
                        int parallelism) {
    cfg.validate();
    if (batch.empty()) throw TensorError("outer_step: empty episode batch");

    std::vector<EpisodeOutcome> outcomes(batch.size());
    if (parallelism <= 1 || batch.size() == 1) {
        for (size_t i = 0; i < batch.size(); ++i) outcomes[i] = run_episode(mk, batch[i], cfg, kind);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(batch.size());
        std::atomic<size_t> next{0};
        const int n_workers = std::min<int>(parallelism, static_cast<int>(batch.size()));
        for (int w = 0; w < n_workers; ++w) {
            threads.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1)) {
                    try {
                        outcomes[i] = run_episode(mk, batch[i], cfg, kind);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Deterministic reduction in episode order; Eq-style sum over the batch.
    std::unordered_map<std::string, Tensor> total;
    OuterMetrics metrics;
    for (const auto& out : outcomes) {
        metrics.query_loss += out.query_loss;
        metrics.query_accuracy += out.query_accuracy;
        for (const auto& [name, g] : out.grads) {
            auto it = total.find(name);
            if (it == total.end()) {
                total.emplace(name, Tensor(g.shape(), g.data()));
            } else {
                auto& acc = it->second.mutable_data();
                for (size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
            }
        }
        if (!out.step_mean_layer_norms.empty()) {
            if (metrics.mean_layer_grad_norms.empty())
                metrics.mean_layer_grad_norms.assign(out.step_mean_layer_norms.size(), 0.0);
            for (size_t i = 0; i < out.step_mean_layer_norms.size(); ++i)
                metrics.mean_layer_grad_norms[i] += out.step_mean_layer_norms[i];
        }
    }
    metrics.query_loss /= static_cast<double>(batch.size());
    metrics.query_accuracy /= static_cast<double>(batch.size());
    for (auto& v : metrics.mean_layer_grad_norms) v /= static_cast<double>(batch.size());

    opt.t += 1;
    for (auto& [name, param] : named_params(mk)) {
        auto it = total.find(name);
        if (it == total.end()) continue;
        if (opt.m.find(name) == opt.m.end()) {
            opt.m.emplace(name, Tensor::zeros(param->shape()));
            opt.v.emplace(name, Tensor::zeros(param->shape()));
        }
        // Params are updated in place on fresh storage so stale graph leaves
        // elsewhere keep their values.
        Tensor updated(param->shape(), param->data());
        adam_update(updated, it->second, opt.m.at(name), opt.v.at(name), opt.t, cfg.eta, opt);
        *param = updated;
    }
    return metrics;
}

EvalResult evaluate(const MetaKnowledge& mk, LearnerKind kind, const tasks::TaskSource& source,
                    tasks::Split split, int n_way, int k_shot, int q_queries,
                    const InnerLoopConfig& cfg, int n_tasks, Rng& rng) {
    if (n_tasks < 1) throw TensorError("evaluate: n_tasks must be >= 1");
    InnerLoopConfig eval_cfg = cfg;
    eval_cfg.second_order = false;  // adaptation values are unaffected
    double sum = 0.0, sumsq = 0.0;
    for (int t = 0; t < n_tasks; ++t) {
        tasks::Episode ep = source.sample_episode(split, n_way, k_shot, q_queries, rng);
        Graph g;
        GraphModel gm = to_graph(g, mk);
        AdaptResult ar = adapt(g, gm, ep, eval_cfg, kind);
        const double acc = query_accuracy(ar.theta, ep, eval_cfg.bn_eps);
        sum += acc;
        sumsq += acc * acc;
    }
    EvalResult res;
    res.n_tasks = n_tasks;
    res.mean_accuracy = sum / n_tasks;
    if (n_tasks > 1) {
        const double var = (sumsq - sum * sum / n_tasks) / (n_tasks - 1);
        res.ci95 = 1.96 * std::sqrt(std::max(var, 0.0) / n_tasks);
    }
    return res;
}

}  // namespace cxgrad::meta
