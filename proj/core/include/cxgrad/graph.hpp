#pragma once

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxgrad/tensor.hpp"

namespace cxgrad {

struct GraphError : TensorError {
    explicit GraphError(const std::string& msg) : TensorError(msg) {}
};

/// Gradients keyed by node handle, as returned by backward().
class GradMap {
  public:
    bool contains(const Tensor& t) const {
        return t.on_graph() && grads_.count(t.node()) > 0;
    }
    const Tensor& at(const Tensor& t) const {
        if (!t.on_graph()) throw GraphError("GradMap::at: tensor is not on a graph");
        auto it = grads_.find(t.node());
        if (it == grads_.end())
            throw GraphError("GradMap::at: no gradient was computed for node " + std::to_string(t.node()));
        return it->second;
    }
    void set(int node, Tensor grad) { grads_[node] = std::move(grad); }
    Tensor* find(int node) {
        auto it = grads_.find(node);
        return it == grads_.end() ? nullptr : &it->second;
    }
    size_t size() const { return grads_.size(); }

  private:
    std::unordered_map<int, Tensor> grads_;
};

/// Tape of recorded operations. Node inputs always reference earlier nodes,
/// so a reverse index walk is a valid reverse topological order. Gradients
/// produced by backward(create_graph=true) are themselves recorded, which is
/// what makes second-order differentiation work.
class Graph {
  public:
    /// One grad per input slot; an undefined Tensor means "input did not
    /// need a gradient".
    using VjpFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

    struct Node {
        const char* op;
        std::vector<int> inputs;
        bool needs_grad = false;
        VjpFn vjp;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Tensor leaf(Tensor value, bool requires_grad) {
        Tensor t = value.detached();
        t.graph_ = this;
        t.node_ = add_node("leaf", {}, requires_grad, nullptr);
        t.requires_grad_ = requires_grad;
        return t;
    }

    /// Records an op result. `inputs` lists the graph inputs that can
    /// receive gradients (constants are simply not listed).
    Tensor record(const char* op, Tensor value, const std::vector<Tensor>& inputs, VjpFn vjp) {
        bool needs = false;
        std::vector<int> handles;
        handles.reserve(inputs.size());
        for (const auto& in : inputs) {
            if (in.on_graph()) {
                if (in.graph() != this)
                    throw GraphError(std::string(op) + ": inputs belong to different graphs");
                handles.push_back(in.node());
                needs = needs || nodes_[static_cast<size_t>(in.node())].needs_grad;
            } else {
                handles.push_back(-1);
            }
        }
        Tensor t = value.detached();
        t.graph_ = this;
        t.node_ = add_node(op, std::move(handles), needs, needs ? std::move(vjp) : nullptr);
        return t;
    }

    bool recording() const { return recording_; }
    size_t num_nodes() const { return nodes_.size(); }
    long long generation() const { return generation_; }

    /// Drops all recorded nodes; leaves handed out earlier become stale.
    void reset() {
        nodes_.clear();
        ++generation_;
    }

    GradMap backward(const Tensor& loss, bool create_graph);

    class NoGradGuard {
      public:
        explicit NoGradGuard(Graph& g) : g_(g), prev_(g.recording_) { g_.recording_ = false; }
        ~NoGradGuard() { g_.recording_ = prev_; }

      private:
        Graph& g_;
        bool prev_;
    };

  private:
    int add_node(const char* op, std::vector<int> inputs, bool needs_grad, VjpFn vjp) {
        nodes_.push_back(Node{op, std::move(inputs), needs_grad, std::move(vjp)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::vector<Node> nodes_;
    bool recording_ = true;
    long long generation_ = 0;
};

/// Finds the common graph of a set of op inputs (nullptr if all constants).
Graph* common_graph(std::initializer_list<const Tensor*> inputs);

}  // namespace cxgrad
