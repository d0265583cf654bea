// Dense-tensor reverse-mode differentiation on an append-only graph.
// Doubles everywhere; every public operation checks shapes and finiteness.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace rts::diffcore {

// ---------------------------------------------------------------------------
// Tensor: row-major dense array of 64-bit reals.
// ---------------------------------------------------------------------------
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d);

    static Tensor zeros(std::vector<int> shape);
    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(int rows, int cols, std::vector<double> v);
    static Tensor one_hot(int n, int index, double on = 1.0, double off = 0.0);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return numel() == 1; }

    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;
    double norm2() const;
};

using NodeId = int;

enum class Op {
    Leaf,          // parameter (gradients reported for these)
    Constant,      // data / frozen noise draws (no gradient tracked)
    Add,           // componentwise; either side may be a scalar broadcast
    Mul,           // componentwise; either side may be a scalar broadcast
    MatMul,        // [m,k]x[k,n] -> [m,n], or [m,k]x[k] -> [m]
    Scale,         // x * alpha, alpha a fixed real attribute
    Exp,
    Log,
    Tanh,
    Acos,          // input clamped to [-1+1e-7, 1-1e-7] before evaluation
    Cos,
    Reciprocal,
    Sum,           // all elements -> scalar
    Mean,          // all elements -> scalar
    L2Normalize,   // vector -> unit vector
    LogSumExp,     // vector -> scalar, max-shifted
    SelectIndex,   // vector, fixed index attribute -> scalar
    Clamp,         // [lo, hi] attributes; pass-through gradient inside
    Slice,         // contiguous [offset, offset+len) of a vector
    Reshape,       // same data, new shape
};

const char* op_name(Op op);

struct Node {
    Op op;
    Tensor value;
    std::array<NodeId, 2> parents{-1, -1};
    double attr0 = 0.0;  // Scale: alpha; Clamp: lo; SelectIndex: index
    double attr1 = 0.0;  // Clamp: hi
};

// Gradient of a scalar loss w.r.t. every node, indexed by node id.
// Shapes mirror the node values; zero where the loss does not reach.
struct GradMap {
    std::vector<Tensor> grads;
    const Tensor& grad(NodeId id) const { return grads[static_cast<std::size_t>(id)]; }
};

// ---------------------------------------------------------------------------
// Graph: append-only, eagerly evaluated. Parents always precede children,
// so one reverse sweep visits each node exactly once.
// ---------------------------------------------------------------------------
class Graph {
public:
    NodeId leaf(Tensor value);
    NodeId constant(Tensor value);
    NodeId constant_scalar(double v) { return constant(Tensor::scalar(v)); }

    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId scale(NodeId x, double alpha);
    NodeId exp(NodeId x);
    NodeId log(NodeId x);
    NodeId tanh(NodeId x);
    NodeId acos(NodeId x);
    NodeId cos(NodeId x);
    NodeId reciprocal(NodeId x);
    NodeId sum(NodeId x);
    NodeId mean(NodeId x);
    NodeId l2_normalize(NodeId x);
    NodeId log_sum_exp(NodeId x);
    NodeId select_index(NodeId x, int index);
    NodeId clamp(NodeId x, double lo, double hi);
    NodeId slice(NodeId x, int offset, int len);
    NodeId reshape(NodeId x, std::vector<int> new_shape);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Node& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Reverse-mode sweep from a scalar loss node.
    GradMap backward(NodeId loss) const;

private:
    NodeId push(Node n);
    std::vector<Node> nodes_;
};

// Builds the scalar function on a fresh graph; `point` enters as the single
// leaf. Returns the loss node id.
using ScalarFn = std::function<NodeId(Graph&, NodeId)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double finite_diff_check(const ScalarFn& fn, const Tensor& point, double step);

}  // namespace rts::diffcore
