#include "cxgrad/graph.hpp"

#include <optional>

#include "cxgrad/ops.hpp"

namespace cxgrad {

Graph* common_graph(std::initializer_list<const Tensor*> inputs) {
    Graph* g = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->on_graph()) continue;
        if (g && t->graph() != g) throw GraphError("op inputs belong to different graphs");
        g = t->graph();
    }
    return g;
}

GradMap Graph::backward(const Tensor& loss, bool create_graph) {
    if (!loss.on_graph() || loss.graph() != this)
        throw GraphError("backward: loss is detached from this graph");
    if (!loss.is_scalar())
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));

    GradMap grads;
    grads.set(loss.node(), Tensor::full(loss.shape(), 1.0));

    std::optional<NoGradGuard> guard;
    if (!create_graph) guard.emplace(*this);

    const int start = loss.node();
    for (int i = start; i >= 0; --i) {
        // VJP calls may append nodes and reallocate the tape, so copy what
        // we need before invoking it.
        if (!nodes_[static_cast<size_t>(i)].needs_grad) continue;
        Tensor* found = grads.find(i);
        if (!found) continue;
        Tensor upstream = *found;
        VjpFn vjp = nodes_[static_cast<size_t>(i)].vjp;
        if (!vjp) continue;  // leaf
        std::vector<int> inputs = nodes_[static_cast<size_t>(i)].inputs;

        std::vector<Tensor> input_grads = vjp(upstream);
        for (size_t slot = 0; slot < inputs.size(); ++slot) {
            int h = inputs[slot];
            if (h < 0) continue;
            if (!nodes_[static_cast<size_t>(h)].needs_grad) continue;
            if (slot >= input_grads.size() || !input_grads[slot].defined()) continue;
            if (Tensor* acc = grads.find(h)) {
                *acc = ops::add(*acc, input_grads[slot]);
            } else {
                grads.set(h, input_grads[slot]);
            }
        }
    }
    return grads;
}

}  // namespace cxgrad
