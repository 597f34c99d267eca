#pragma once

#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cxgrad {

class Graph;

struct TensorError : std::runtime_error {
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : TensorError {
    explicit ShapeError(const std::string& msg) : TensorError(msg) {}
};

using Shape = std::vector<int>;

inline long long numel(const Shape& shape) {
    long long n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

/// N-dimensional array of doubles, optionally attached to a computation
/// graph. Copies are shallow; the payload is shared.
class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::shared_ptr<std::vector<double>> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_consistent();
    }
    Tensor(Shape shape, std::vector<double> data)
        : Tensor(std::move(shape), std::make_shared<std::vector<double>>(std::move(data))) {}

    static Tensor zeros(Shape shape) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
    }
    static Tensor full(Shape shape, double value) {
        auto n = numel(shape);
        return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
    }
    static Tensor scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    long long size() const { return numel(shape_); }
    bool is_scalar() const { return size() == 1; }

    const std::vector<double>& data() const { return *data_; }
    std::vector<double>& mutable_data() { return *data_; }
    const std::shared_ptr<std::vector<double>>& storage() const { return data_; }

    double operator[](size_t i) const { return (*data_)[i]; }
    double item() const {
        if (!is_scalar()) throw ShapeError("item(): tensor " + shape_str(shape_) + " is not scalar");
        return (*data_)[0];
    }

    bool on_graph() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    int node() const { return node_; }
    bool requires_grad() const { return requires_grad_; }

    /// Value-only view of this tensor, detached from any graph.
    Tensor detached() const {
        Tensor t(shape_, data_);
        return t;
    }

  private:
    friend class Graph;
    void check_consistent() const {
        if (data_ && numel(shape_) != static_cast<long long>(data_->size()))
            throw ShapeError("tensor shape " + shape_str(shape_) + " does not match data length " +
                             std::to_string(data_->size()));
    }

    Shape shape_;
    std::shared_ptr<std::vector<double>> data_;
    Graph* graph_ = nullptr;
    int node_ = -1;
    bool requires_grad_ = false;
};

}  // namespace cxgrad
