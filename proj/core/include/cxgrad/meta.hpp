#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxgrad/nn.hpp"
#include "cxgrad/tasks.hpp"

namespace cxgrad::meta {

enum class LearnerKind { Maml, CxGrad };

LearnerKind learner_from_name(const std::string& name);
const char* learner_name(LearnerKind k);

struct InnerLoopConfig {
    double alpha = 0.01;  // inner-loop lr
    double beta = 1.0;    // context lr
    double eta = 0.001;   // outer-loop lr
    int steps = 5;
    bool second_order = true;
    /// Table-3 ablation: reset and re-learn the context at every inner step
    /// instead of accumulating it across the whole task.
    bool stepwise_context = false;
    double bn_eps = 1e-5;

    void validate() const;
};

/// The meta-learned state: backbone + classifier, plus the scaling
/// sub-network for the CxGrad learner.
struct MetaKnowledge {
    nn::Backbone backbone;
    nn::Classifier classifier;
    std::optional<nn::SubNetwork> subnet;
    int nu_dim = 100;
};

MetaKnowledge make_meta_knowledge(LearnerKind kind, int n_way, int width, int in_channels,
                                  int image_h, int image_w, int nu_dim, Rng& rng);

std::vector<std::pair<std::string, Tensor*>> named_params(MetaKnowledge& mk);

/// Adaptable parameters (theta); the sub-network is meta-level only.
struct Model {
    nn::Backbone backbone;
    nn::Classifier classifier;
};

/// Episode-graph registration of all meta parameters.
struct GraphModel {
    Model theta;
    std::optional<nn::SubNetwork> subnet;
};

GraphModel to_graph(Graph& g, const MetaKnowledge& mk);

Tensor support_loss(const Model& m, const tasks::Episode& ep, double bn_eps);
Tensor query_loss(const Model& m, const tasks::Episode& ep, double bn_eps);
double query_accuracy(const Model& m, const tasks::Episode& ep, double bn_eps);

/// Implicit gradient scaling: replaces every backbone conv weight by
/// gamma_l * w_l / ||w_l||, recorded on the graph so gradients flow into the
/// sub-network and the context. Classifier and BN affine params untouched.
/// Forward loss is unchanged (up to BN-epsilon effects); backward gradient
/// norms are scaled by ||w_l|| / gamma_l.
Model igs(const Model& theta, const Tensor& nu, const nn::SubNetwork& phi);

/// One context update: nu <- nu - beta * grad_nu L(theta'; support). theta'
/// must come from an igs() call on the same graph, otherwise nu has no
/// gradient path and this throws.
Tensor update_context(Graph& g, const Model& theta_after_igs, const Tensor& nu,
                      const tasks::Episode& ep, const InnerLoopConfig& cfg);

struct AdaptResult {
    Model theta;  // adapted parameters, on the episode graph
    Tensor nu;    // final context (undefined for MAML)
    /// Per inner step: gradient norms for the 4 backbone conv layers plus
    /// the classifier (support loss, at the evaluated parameters).
    std::vector<std::vector<double>> layer_grad_norms;
    std::vector<double> support_losses;
    std::vector<std::vector<double>> gamma_history;  // CxGrad only
    /// Parameters at which each step's support gradient was evaluated
    /// (post-IGS for CxGrad); used by the landscape diagnostics.
    std::vector<Model> step_models;
};

AdaptResult maml_adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                       const InnerLoopConfig& cfg);
AdaptResult cxgrad_adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                         const InnerLoopConfig& cfg);
AdaptResult adapt(Graph& g, const GraphModel& model, const tasks::Episode& ep,
                  const InnerLoopConfig& cfg, LearnerKind kind);

struct AdamState {
    std::unordered_map<std::string, Tensor> m, v;
    long long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct OuterMetrics {
    double query_loss = 0.0;
    double query_accuracy = 0.0;
    /// Per-layer gradient norms averaged over inner steps and tasks
    /// (4 backbone layers + classifier).
    std::vector<double> mean_layer_grad_norms;
};

/// Sums query losses over the batch, backpropagates through all inner steps
/// and applies one Adam update to the meta parameters.
OuterMetrics outer_step(MetaKnowledge& mk, const std::vector<tasks::Episode>& batch,
                        const InnerLoopConfig& cfg, LearnerKind kind, AdamState& opt,
                        int parallelism = 1);

struct EvalResult {
    double mean_accuracy = 0.0;
    double ci95 = 0.0;
    int n_tasks = 0;
};

EvalResult evaluate(const MetaKnowledge& mk, LearnerKind kind, const tasks::TaskSource& source,
                    tasks::Split split, int n_way, int k_shot, int q_queries,
                    const InnerLoopConfig& cfg, int n_tasks, Rng& rng);

}  // namespace cxgrad::meta
