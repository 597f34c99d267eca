#include "cxgrad/nn.hpp"

#include <cmath>

namespace cxgrad::nn {

namespace {

Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> data(static_cast<size_t>(numel(shape)));
    for (auto& v : data) v = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(data));
}

Tensor bias_row(const Tensor& bias, int batch) {
    Shape row{1, bias.dim(0)};
    return ops::expand(ops::reshape(bias, row), Shape{batch, bias.dim(0)});
}

}  // namespace

Backbone make_backbone(int width, int in_channels, Rng& rng) {
    Backbone bb;
    bb.width = width;
    bb.in_channels = in_channels;
    int in_ch = in_channels;
    for (auto& blk : bb.blocks) {
        blk.conv_w = kaiming_uniform({width, in_ch, 3, 3}, in_ch * 9, rng);
        blk.bn_gamma = Tensor::full({width}, 1.0);
        blk.bn_beta = Tensor::zeros({width});
        in_ch = width;
    }
    return bb;
}

Classifier make_classifier(int n_way, int feature_dim, Rng& rng) {
    Classifier cls;
    cls.weight = kaiming_uniform({n_way, feature_dim}, feature_dim, rng);
    cls.bias = Tensor::zeros({n_way});
    return cls;
}

SubNetwork make_subnetwork(int nu_dim, int hidden, Rng& rng) {
    SubNetwork sn;
    sn.w1 = kaiming_uniform({hidden, nu_dim}, nu_dim, rng);
    // Non-zero first bias keeps the hidden layer active at nu = 0; with an
    // all-zero hidden activation the final-layer weight would never receive
    // gradient and the context pathway could not be learned.
    const double b1_bound = 1.0 / std::sqrt(static_cast<double>(nu_dim));
    sn.b1 = Tensor::zeros({hidden});
    for (auto& v : sn.b1.mutable_data()) v = rng.uniform(-b1_bound, b1_bound);
    // Zero final weight plus softplus^{-1}(1) bias: training starts at the
    // identity scaling, where the scaled update coincides with MAML's.
    sn.w2 = Tensor::zeros({kNumBlocks, hidden});
    sn.b2 = Tensor::full({kNumBlocks}, identity_gamma_bias());
    return sn;
}

ContextParams make_context(int nu_dim) { return ContextParams{Tensor::zeros({nu_dim})}; }

int feature_dim(const Backbone& bb, int height, int width) {
    if (height < 16 || width < 16)
        throw ShapeError("backbone: spatial dims must be at least 16, got (" +
                         std::to_string(height) + "," + std::to_string(width) + ")");
    // Four floor-halving pools.
    for (int i = 0; i < kNumBlocks; ++i) {
        height /= 2;
        width /= 2;
    }
    return bb.width * height * width;
}

Tensor backbone_forward(const Backbone& bb, const Tensor& images, double bn_eps,
                        std::vector<Tensor>* block_acts) {
    if (images.ndim() != 4)
        throw ShapeError("backbone_forward: images must be 4-D NCHW, got " + shape_str(images.shape()));
    if (images.dim(2) < 16 || images.dim(3) < 16)
        throw ShapeError("backbone_forward: spatial dims must be at least 16, got " +
                         shape_str(images.shape()));
    Tensor h = images;
    for (const auto& blk : bb.blocks) {
        h = ops::conv2d(h, blk.conv_w);
        h = ops::batchnorm(h, blk.bn_gamma, blk.bn_beta, bn_eps);
        h = ops::relu(h);
        h = ops::maxpool2d(h);
        if (block_acts) block_acts->push_back(h);
    }
    const int batch = h.dim(0);
    return ops::reshape(h, {batch, static_cast<int>(h.size() / batch)});
}

Tensor classifier_forward(const Classifier& cls, const Tensor& features) {
    Tensor logits = ops::matmul(features, ops::transpose(cls.weight));
    return ops::add(logits, bias_row(cls.bias, features.dim(0)));
}

Tensor generate_scaling_factors(const SubNetwork& sn, const Tensor& nu) {
    Tensor row = ops::reshape(nu, {1, nu.dim(0)});
    Tensor h = ops::relu(ops::add(ops::matmul(row, ops::transpose(sn.w1)), bias_row(sn.b1, 1)));
    Tensor out = ops::softplus(ops::add(ops::matmul(h, ops::transpose(sn.w2)), bias_row(sn.b2, 1)));
    return ops::reshape(out, {sn.w2.dim(0)});
}

Tensor layer_param_norm(const Backbone& bb, int ell) {
    if (ell < 1 || ell > kNumBlocks)
        throw ShapeError("layer_param_norm: layer index " + std::to_string(ell) +
                         " out of range [1," + std::to_string(kNumBlocks) + "]");
    return ops::l2_norm(bb.blocks[static_cast<size_t>(ell - 1)].conv_w);
}

namespace {
Tensor copy_values(const Tensor& t) { return Tensor(t.shape(), t.data()); }
}  // namespace

Backbone clone(const Backbone& bb) {
    Backbone out;
    out.width = bb.width;
    out.in_channels = bb.in_channels;
    for (int i = 0; i < kNumBlocks; ++i) {
        out.blocks[static_cast<size_t>(i)].conv_w = copy_values(bb.blocks[static_cast<size_t>(i)].conv_w);
        out.blocks[static_cast<size_t>(i)].bn_gamma = copy_values(bb.blocks[static_cast<size_t>(i)].bn_gamma);
        out.blocks[static_cast<size_t>(i)].bn_beta = copy_values(bb.blocks[static_cast<size_t>(i)].bn_beta);
    }
    return out;
}

Classifier clone(const Classifier& cls) { return Classifier{copy_values(cls.weight), copy_values(cls.bias)}; }

SubNetwork clone(const SubNetwork& sn) {
    return SubNetwork{copy_values(sn.w1), copy_values(sn.b1), copy_values(sn.w2), copy_values(sn.b2)};
}

Backbone to_graph(Graph& g, const Backbone& bb, bool requires_grad) {
    Backbone out = bb;
    for (auto& blk : out.blocks) {
        blk.conv_w = g.leaf(blk.conv_w, requires_grad);
        blk.bn_gamma = g.leaf(blk.bn_gamma, requires_grad);
        blk.bn_beta = g.leaf(blk.bn_beta, requires_grad);
    }
    return out;
}

Classifier to_graph(Graph& g, const Classifier& cls, bool requires_grad) {
    return Classifier{g.leaf(cls.weight, requires_grad), g.leaf(cls.bias, requires_grad)};
}

SubNetwork to_graph(Graph& g, const SubNetwork& sn, bool requires_grad) {
    return SubNetwork{g.leaf(sn.w1, requires_grad), g.leaf(sn.b1, requires_grad),
                      g.leaf(sn.w2, requires_grad), g.leaf(sn.b2, requires_grad)};
}

std::vector<std::pair<std::string, Tensor*>> named_params(Backbone& bb) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (int i = 0; i < kNumBlocks; ++i) {
        auto& blk = bb.blocks[static_cast<size_t>(i)];
        const std::string p = "backbone.block" + std::to_string(i + 1) + ".";
        out.emplace_back(p + "conv_w", &blk.conv_w);
        out.emplace_back(p + "bn_gamma", &blk.bn_gamma);
        out.emplace_back(p + "bn_beta", &blk.bn_beta);
    }
    return out;
}

std::vector<std::pair<std::string, Tensor*>> named_params(Classifier& cls) {
    return {{"classifier.weight", &cls.weight}, {"classifier.bias", &cls.bias}};
}

std::vector<std::pair<std::string, Tensor*>> named_params(SubNetwork& sn) {
    return {{"subnet.w1", &sn.w1}, {"subnet.b1", &sn.b1}, {"subnet.w2", &sn.w2}, {"subnet.b2", &sn.b2}};
}

}  // namespace cxgrad::nn
