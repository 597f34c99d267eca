#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cxgrad/graph.hpp"
#include "cxgrad/ops.hpp"
#include "cxgrad/rng.hpp"
#include "cxgrad/tensor.hpp"

namespace cxgrad::nn {

/// Number of scalable conv layers in the backbone.
inline constexpr int kNumBlocks = 4;

/// conv(3x3, pad 1, no bias) -> batchnorm -> relu -> maxpool(2x2)
struct ConvBlock {
    Tensor conv_w;    // (out,in,3,3)
    Tensor bn_gamma;  // (out)
    Tensor bn_beta;   // (out)
};

struct Backbone {
    int width = 64;
    int in_channels = 3;
    std::array<ConvBlock, kNumBlocks> blocks;
};

struct Classifier {
    Tensor weight;  // (n_way, feature_dim)
    Tensor bias;    // (n_way)
};

/// Two-layer MLP producing one positive scaling factor per backbone layer:
/// softplus(W2 relu(W1 nu + b1) + b2).
struct SubNetwork {
    Tensor w1;  // (hidden, nu_dim)
    Tensor b1;  // (hidden)
    Tensor w2;  // (kNumBlocks, hidden)
    Tensor b2;  // (kNumBlocks)
};

struct ContextParams {
    Tensor nu;  // (nu_dim)
};

/// softplus(b2)=1 at this bias makes the sub-network start at gamma == 1.
inline double identity_gamma_bias() { return std::log(std::exp(1.0) - 1.0); }

Backbone make_backbone(int width, int in_channels, Rng& rng);
Classifier make_classifier(int n_way, int feature_dim, Rng& rng);
SubNetwork make_subnetwork(int nu_dim, int hidden, Rng& rng);
ContextParams make_context(int nu_dim);

int feature_dim(const Backbone& bb, int height, int width);

/// Runs the four conv blocks and flattens. images is (B,C,H,W) with H,W at
/// least 16; odd dims floor under pooling. When block_acts is given, the
/// post-pool activation of each block is retained (for feature-similarity
/// analysis).
Tensor backbone_forward(const Backbone& bb, const Tensor& images, double bn_eps,
                        std::vector<Tensor>* block_acts = nullptr);

Tensor classifier_forward(const Classifier& cls, const Tensor& features);

/// gamma = g_phi(nu), a strictly positive vector of length kNumBlocks,
/// differentiable w.r.t. both the sub-network and nu.
Tensor generate_scaling_factors(const SubNetwork& sn, const Tensor& nu);

/// Frobenius norm of the conv weight of block ell (1-based), excluding the
/// batchnorm affine params. Differentiable.
Tensor layer_param_norm(const Backbone& bb, int ell);

// Deep copies (fresh storage, detached from any graph).
Backbone clone(const Backbone& bb);
Classifier clone(const Classifier& cls);
SubNetwork clone(const SubNetwork& sn);

// Re-registration of parameter values as leaves on an episode graph.
Backbone to_graph(Graph& g, const Backbone& bb, bool requires_grad = true);
Classifier to_graph(Graph& g, const Classifier& cls, bool requires_grad = true);
SubNetwork to_graph(Graph& g, const SubNetwork& sn, bool requires_grad = true);

// Named views over all parameter tensors, in a fixed order.
std::vector<std::pair<std::string, Tensor*>> named_params(Backbone& bb);
std::vector<std::pair<std::string, Tensor*>> named_params(Classifier& cls);
std::vector<std::pair<std::string, Tensor*>> named_params(SubNetwork& sn);

}  // namespace cxgrad::nn
