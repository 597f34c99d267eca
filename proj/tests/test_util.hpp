#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cxgrad/graph.hpp"
#include "cxgrad/ops.hpp"
#include "cxgrad/rng.hpp"
#include "cxgrad/tensor.hpp"

namespace testutil {

using cxgrad::Graph;
using cxgrad::GradMap;
using cxgrad::Rng;
using cxgrad::Shape;
using cxgrad::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> data(static_cast<size_t>(cxgrad::numel(shape)));
    for (auto& v : data) v = rng.uniform(lo, hi);
    return Tensor(shape, std::move(data));
}

/// Builds a scalar loss from input tensors (which may be graph leaves or
/// plain constants).
using LossBuilder = std::function<Tensor(const std::vector<Tensor>&)>;

struct FdReport {
    double max_rel_err = 0.0;
    size_t n_checked = 0;
};

inline double rel_err(double analytic, double reference) {
    return std::abs(analytic - reference) / std::max({std::abs(reference), std::abs(analytic), 1e-4});
}

/// Central-difference check of first-order gradients for every element of
/// every input.
inline FdReport fd_gradient_check(const LossBuilder& build, const std::vector<Tensor>& values,
                                  double eps = 1e-5) {
    Graph g;
    std::vector<Tensor> leaves;
    for (const auto& v : values) leaves.push_back(g.leaf(v, true));
    Tensor loss = build(leaves);
    GradMap grads = g.backward(loss, false);

    FdReport rep;
    for (size_t i = 0; i < values.size(); ++i) {
        Tensor analytic = grads.contains(leaves[i]) ? grads.at(leaves[i])
                                                    : Tensor::zeros(values[i].shape());
        for (size_t e = 0; e < values[i].data().size(); ++e) {
            auto probe = [&](double delta) {
                std::vector<Tensor> shifted = values;
                Tensor t(values[i].shape(), values[i].data());  // fresh storage
                t.mutable_data()[e] += delta;
                shifted[i] = t;
                return build(shifted).item();
            };
            const double fd = (probe(eps) - probe(-eps)) / (2 * eps);
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[e], fd));
            ++rep.n_checked;
        }
    }
    return rep;
}

/// Compares a Hessian-vector product from backward-of-backward against
/// finite differences of first-order gradients along the same direction.
inline FdReport hvp_check(const LossBuilder& build, const std::vector<Tensor>& values,
                          const std::vector<Tensor>& direction, double eps = 1e-4) {
    // Analytic: d/dx [sum_i <grad_i, u_i>] via create_graph.
    Graph g;
    std::vector<Tensor> leaves;
    for (const auto& v : values) leaves.push_back(g.leaf(v, true));
    Tensor loss = build(leaves);
    GradMap grads = g.backward(loss, true);
    Tensor dot;
    for (size_t i = 0; i < values.size(); ++i) {
        if (!grads.contains(leaves[i])) continue;
        Tensor term = cxgrad::ops::sum_all(cxgrad::ops::mul(grads.at(leaves[i]), direction[i]));
        dot = dot.defined() ? cxgrad::ops::add(dot, term) : term;
    }
    GradMap hvp = g.backward(dot, false);

    // Reference: (grad(x + eps u) - grad(x - eps u)) / 2eps.
    auto grads_at = [&](double delta) {
        std::vector<Tensor> shifted;
        for (size_t i = 0; i < values.size(); ++i) {
            Tensor t(values[i].shape(), values[i].data());
            for (size_t e = 0; e < t.data().size(); ++e)
                t.mutable_data()[e] += delta * direction[i][e];
            shifted.push_back(t);
        }
        Graph g2;
        std::vector<Tensor> l2;
        for (const auto& v : shifted) l2.push_back(g2.leaf(v, true));
        Tensor loss2 = build(l2);
        GradMap gm = g2.backward(loss2, false);
        std::vector<Tensor> out;
        for (size_t i = 0; i < l2.size(); ++i)
            out.push_back(gm.contains(l2[i]) ? gm.at(l2[i]) : Tensor::zeros(values[i].shape()));
        return out;
    };
    auto plus = grads_at(eps), minus = grads_at(-eps);

    FdReport rep;
    for (size_t i = 0; i < values.size(); ++i) {
        Tensor analytic = hvp.contains(leaves[i]) ? hvp.at(leaves[i])
                                                  : Tensor::zeros(values[i].shape());
        for (size_t e = 0; e < values[i].data().size(); ++e) {
            const double fd = (plus[i][e] - minus[i][e]) / (2 * eps);
            rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[e], fd));
            ++rep.n_checked;
        }
    }
    return rep;
}

}  // namespace testutil
