#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cxgrad/meta.hpp"

namespace cxgrad::analysis {

struct GradNormRecord {
    long long iteration = 0;
    /// Mean gradient norm per layer (4 backbone conv layers + classifier),
    /// averaged over inner-loop steps and tasks.
    std::vector<double> layer_norms;
};

/// Aggregates the per-step per-layer norms of a batch of adaptations.
GradNormRecord layer_grad_norms(const std::vector<meta::AdaptResult>& batch, long long iteration = 0);

/// Linear CKA between feature matrices X (n,p) and Y (n,q): columns are
/// centered, then ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F). In [0,1].
double linear_cka(const Tensor& x, const Tensor& y);

struct CKARecord {
    int layer = 0;  // 1-based backbone block index
    double mean_cka = 0.0;
    double ci95 = 0.0;
    int n_tasks = 0;
};

/// CKA between the chosen block's query-set features before and after
/// adaptation, averaged over episodes.
CKARecord cka_before_after(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                           const tasks::TaskSource& source, tasks::Split split, int n_way,
                           int k_shot, int q_queries, const meta::InnerLoopConfig& cfg, int layer,
                           int n_episodes, Rng& rng);

struct EmbeddingRow {
    int sample_id = 0;
    int label = 0;
    std::vector<double> feature;
};

/// Last-conv-block features of every episode sample (support rows first,
/// then query rows), before or after adaptation, in deterministic order.
std::vector<EmbeddingRow> export_embeddings(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                                            const tasks::Episode& ep,
                                            const meta::InnerLoopConfig& cfg, bool after_adaptation);

struct LandscapeRecord {
    long long iteration = 0;
    double loss_min = 0.0, loss_max = 0.0;          // envelope over the rate sweep
    double gradpred_min = 0.0, gradpred_max = 0.0;  // envelope over the rate sweep
    double effective_beta = 0.0;
    bool valid = true;  // false when a zero support gradient was hit
    /// Mean loss per swept rate (8 points, 0.5*alpha .. 4*alpha).
    std::vector<double> loss_per_rate;
};

inline constexpr int kLandscapeSweepPoints = 8;

/// Smoothness ratio ||h(theta^a*) - h(theta)|| / ||a* h(theta)|| where a* is
/// the rate maximizing the numerator. Throws when h0_norm is zero.
double effective_beta(const std::vector<double>& rates, const std::vector<double>& grad_deltas,
                      double h0_norm);

/// Optimization-landscape probe: from every inner step, re-steps with rates
/// {0.5*alpha*j : j=1..8} and measures loss variation, gradient
/// predictiveness and effective-beta smoothness.
LandscapeRecord landscape_metrics(const meta::MetaKnowledge& mk, meta::LearnerKind kind,
                                  const std::vector<tasks::Episode>& batch,
                                  const meta::InnerLoopConfig& cfg, long long iteration = 0);

// CSV serialization ({run-id}.{metric}.csv files; headers documented in the
// writers). Doubles are written round-trip exact.
void write_gradnorm_csv(std::ostream& out, const std::vector<GradNormRecord>& records);
std::vector<GradNormRecord> read_gradnorm_csv(std::istream& in);
void write_cka_csv(std::ostream& out, const std::vector<CKARecord>& records);
std::vector<CKARecord> read_cka_csv(std::istream& in);
void write_landscape_csv(std::ostream& out, const std::vector<LandscapeRecord>& records);
std::vector<LandscapeRecord> read_landscape_csv(std::istream& in);
void write_embeddings_csv(std::ostream& out, const std::vector<EmbeddingRow>& rows);

}  // namespace cxgrad::analysis
