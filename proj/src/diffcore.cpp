#include "rts/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rts::diffcore {

namespace {

constexpr double kAcosClamp = 1.0 - 1e-7;

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimension must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

[[noreturn]] void shape_error(const char* what, const Tensor& a) {
    std::string msg = std::string(what) + " (shape [";
    for (std::size_t i = 0; i < a.shape.size(); ++i) {
        if (i) msg += ",";
        msg += std::to_string(a.shape[i]);
    }
    msg += "])";
    throw std::invalid_argument(msg);
}

}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
        throw std::invalid_argument("tensor data length does not match shape");
}

Tensor Tensor::zeros(std::vector<int> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

Tensor Tensor::one_hot(int n, int index, double on, double off) {
    if (index < 0 || index >= n) throw std::invalid_argument("one_hot index out of range");
    std::vector<double> v(static_cast<std::size_t>(n), off);
    v[static_cast<std::size_t>(index)] = on;
    return Tensor({n}, std::move(v));
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double x) { return std::isfinite(x); });
}

double Tensor::norm2() const {
    double s = 0.0;
    for (double x : data) s += x * x;
    return std::sqrt(s);
}

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Constant: return "constant";
        case Op::Add: return "add";
        case Op::Mul: return "mul";
        case Op::MatMul: return "matmul";
        case Op::Scale: return "scale";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Tanh: return "tanh";
        case Op::Acos: return "acos";
        case Op::Cos: return "cos";
        case Op::Reciprocal: return "reciprocal";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::L2Normalize: return "l2-normalize";
        case Op::LogSumExp: return "log-sum-exp";
        case Op::SelectIndex: return "select-index";
        case Op::Clamp: return "clamp";
        case Op::Slice: return "slice";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

NodeId Graph::push(Node n) {
    if (!n.value.all_finite())
        throw std::domain_error(std::string("non-finite value produced by op ") + op_name(n.op));
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor value) {
    if (!value.all_finite()) throw std::domain_error("non-finite leaf value");
    return push(Node{Op::Leaf, std::move(value), {-1, -1}});
}

NodeId Graph::constant(Tensor value) {
    if (!value.all_finite()) throw std::domain_error("non-finite constant value");
    return push(Node{Op::Constant, std::move(value), {-1, -1}});
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.same_shape(tb)) {
        Tensor out = ta;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
        return push(Node{Op::Add, std::move(out), {a, b}});
    }
    if (tb.is_scalar()) {
        Tensor out = ta;
        for (double& x : out.data) x += tb.data[0];
        return push(Node{Op::Add, std::move(out), {a, b}});
    }
    if (ta.is_scalar()) {
        Tensor out = tb;
        for (double& x : out.data) x += ta.data[0];
        return push(Node{Op::Add, std::move(out), {a, b}});
    }
    shape_error("add: shape mismatch", ta);
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.same_shape(tb)) {
        Tensor out = ta;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
        return push(Node{Op::Mul, std::move(out), {a, b}});
    }
    if (tb.is_scalar()) {
        Tensor out = ta;
        for (double& x : out.data) x *= tb.data[0];
        return push(Node{Op::Mul, std::move(out), {a, b}});
    }
    if (ta.is_scalar()) {
        Tensor out = tb;
        for (double& x : out.data) x *= ta.data[0];
        return push(Node{Op::Mul, std::move(out), {a, b}});
    }
    shape_error("mul: shape mismatch", ta);
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.rank() != 2) shape_error("matmul: left operand must be a matrix", ta);
    int m = ta.shape[0], k = ta.shape[1];
    if (tb.rank() == 1) {
        if (tb.shape[0] != k) shape_error("matmul: inner dimensions disagree", tb);
        Tensor out = Tensor::zeros({m});
        for (int i = 0; i < m; ++i) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) acc += ta.at(i, j) * tb.at(j);
            out.at(i) = acc;
        }
        return push(Node{Op::MatMul, std::move(out), {a, b}});
    }
    if (tb.rank() == 2) {
        if (tb.shape[0] != k) shape_error("matmul: inner dimensions disagree", tb);
        int n = tb.shape[1];
        Tensor out = Tensor::zeros({m, n});
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j) {
                double aij = ta.at(i, j);
                for (int c = 0; c < n; ++c) out.at(i, c) += aij * tb.at(j, c);
            }
        return push(Node{Op::MatMul, std::move(out), {a, b}});
    }
    shape_error("matmul: right operand must be vector or matrix", tb);
}

NodeId Graph::scale(NodeId x, double alpha) {
    if (!std::isfinite(alpha)) throw std::invalid_argument("scale: non-finite alpha");
    Tensor out = value(x);
    for (double& v : out.data) v *= alpha;
    Node n{Op::Scale, std::move(out), {x, -1}};
    n.attr0 = alpha;
    return push(std::move(n));
}

NodeId Graph::exp(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::exp(v);
    return push(Node{Op::Exp, std::move(out), {x, -1}});
}

NodeId Graph::log(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) {
        if (v <= 0.0) throw std::domain_error("log: nonpositive input");
        v = std::log(v);
    }
    return push(Node{Op::Log, std::move(out), {x, -1}});
}

NodeId Graph::tanh(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::tanh(v);
    return push(Node{Op::Tanh, std::move(out), {x, -1}});
}

NodeId Graph::acos(NodeId x) {
    // Value is exact on [-1, 1] (out-of-range roundoff snapped back);
    // only the derivative uses the tighter clamp, so it stays bounded
    // by 1/sqrt(2e-7) instead of diverging at +-1.
    Tensor out = value(x);
    for (double& v : out.data) v = std::acos(std::clamp(v, -1.0, 1.0));
    return push(Node{Op::Acos, std::move(out), {x, -1}});
}

NodeId Graph::cos(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = std::cos(v);
    return push(Node{Op::Cos, std::move(out), {x, -1}});
}

NodeId Graph::reciprocal(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) {
        if (v == 0.0) throw std::domain_error("reciprocal: zero input");
        v = 1.0 / v;
    }
    return push(Node{Op::Reciprocal, std::move(out), {x, -1}});
}

NodeId Graph::sum(NodeId x) {
    const Tensor& t = value(x);
    double acc = std::accumulate(t.data.begin(), t.data.end(), 0.0);
    return push(Node{Op::Sum, Tensor::scalar(acc), {x, -1}});
}

NodeId Graph::mean(NodeId x) {
    const Tensor& t = value(x);
    double acc = std::accumulate(t.data.begin(), t.data.end(), 0.0);
    return push(Node{Op::Mean, Tensor::scalar(acc / static_cast<double>(t.numel())), {x, -1}});
}

NodeId Graph::l2_normalize(NodeId x) {
    const Tensor& t = value(x);
    if (t.rank() != 1) shape_error("l2-normalize: expects a vector", t);
    double n = t.norm2();
    if (n == 0.0) throw std::domain_error("l2-normalize: zero vector");
    Tensor out = t;
    for (double& v : out.data) v /= n;
    return push(Node{Op::L2Normalize, std::move(out), {x, -1}});
}

NodeId Graph::log_sum_exp(NodeId x) {
    const Tensor& t = value(x);
    double mx = *std::max_element(t.data.begin(), t.data.end());
    double acc = 0.0;
    for (double v : t.data) acc += std::exp(v - mx);
    return push(Node{Op::LogSumExp, Tensor::scalar(mx + std::log(acc)), {x, -1}});
}

NodeId Graph::select_index(NodeId x, int index) {
    const Tensor& t = value(x);
    if (t.rank() != 1) shape_error("select-index: expects a vector", t);
    if (index < 0 || index >= t.shape[0]) throw std::out_of_range("select-index: index out of range");
    Node n{Op::SelectIndex, Tensor::scalar(t.at(index)), {x, -1}};
    n.attr0 = static_cast<double>(index);
    return push(std::move(n));
}

NodeId Graph::clamp(NodeId x, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
    Tensor out = value(x);
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    Node n{Op::Clamp, std::move(out), {x, -1}};
    n.attr0 = lo;
    n.attr1 = hi;
    return push(std::move(n));
}

NodeId Graph::slice(NodeId x, int offset, int len) {
    const Tensor& t = value(x);
    if (t.rank() != 1) shape_error("slice: expects a vector", t);
    if (offset < 0 || len <= 0 || offset + len > t.shape[0])
        throw std::out_of_range("slice: range out of bounds");
    Tensor out(std::vector<int>{len},
               std::vector<double>(t.data.begin() + offset, t.data.begin() + offset + len));
    Node n{Op::Slice, std::move(out), {x, -1}};
    n.attr0 = static_cast<double>(offset);
    return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::vector<int> new_shape) {
    const Tensor& t = value(x);
    Tensor out(std::move(new_shape), t.data);
    return push(Node{Op::Reshape, std::move(out), {x, -1}});
}

GradMap Graph::backward(NodeId loss) const {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
        throw std::out_of_range("backward: bad loss node");
    if (!value(loss).is_scalar()) throw std::invalid_argument("backward: loss node must be scalar");

    GradMap gm;
    gm.grads.reserve(nodes_.size());
    for (const Node& n : nodes_) gm.grads.push_back(Tensor::zeros(n.value.shape));
    gm.grads[static_cast<std::size_t>(loss)].data[0] = 1.0;

    for (NodeId id = loss; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = gm.grads[static_cast<std::size_t>(id)];
        bool live = std::any_of(g.data.begin(), g.data.end(), [](double x) { return x != 0.0; });
        if (!live || n.op == Op::Leaf || n.op == Op::Constant) continue;

        NodeId pa = n.parents[0];
        NodeId pb = n.parents[1];
        const Tensor& va = nodes_[static_cast<std::size_t>(pa)].value;
        Tensor& ga = gm.grads[static_cast<std::size_t>(pa)];

        switch (n.op) {
            case Op::Add: {
                Tensor& gb = gm.grads[static_cast<std::size_t>(pb)];
                const Tensor& vb = nodes_[static_cast<std::size_t>(pb)].value;
                if (va.same_shape(n.value)) {
                    for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                } else {  // a is the broadcast scalar
                    ga.data[0] += std::accumulate(g.data.begin(), g.data.end(), 0.0);
                }
                if (vb.same_shape(n.value)) {
                    for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
                } else {
                    gb.data[0] += std::accumulate(g.data.begin(), g.data.end(), 0.0);
                }
                break;
            }
            case Op::Mul: {
                Tensor& gb = gm.grads[static_cast<std::size_t>(pb)];
                const Tensor& vb = nodes_[static_cast<std::size_t>(pb)].value;
                if (va.same_shape(vb)) {
                    for (std::size_t i = 0; i < g.data.size(); ++i) {
                        ga.data[i] += g.data[i] * vb.data[i];
                        gb.data[i] += g.data[i] * va.data[i];
                    }
                } else if (vb.is_scalar()) {
                    for (std::size_t i = 0; i < g.data.size(); ++i) {
                        ga.data[i] += g.data[i] * vb.data[0];
                        gb.data[0] += g.data[i] * va.data[i];
                    }
                } else {  // a scalar
                    for (std::size_t i = 0; i < g.data.size(); ++i) {
                        gb.data[i] += g.data[i] * va.data[0];
                        ga.data[0] += g.data[i] * vb.data[i];
                    }
                }
                break;
            }
            case Op::MatMul: {
                Tensor& gb = gm.grads[static_cast<std::size_t>(pb)];
                const Tensor& vb = nodes_[static_cast<std::size_t>(pb)].value;
                int m = va.shape[0], k = va.shape[1];
                if (vb.rank() == 1) {
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < k; ++j) {
                            ga.at(i, j) += g.at(i) * vb.at(j);
                            gb.at(j) += g.at(i) * va.at(i, j);
                        }
                } else {
                    int c = vb.shape[1];
                    for (int i = 0; i < m; ++i)
                        for (int j = 0; j < k; ++j) {
                            double aij = va.at(i, j);
                            double acc = 0.0;
                            for (int q = 0; q < c; ++q) {
                                acc += g.at(i, q) * vb.at(j, q);
                                gb.at(j, q) += g.at(i, q) * aij;
                            }
                            ga.at(i, j) += acc;
                        }
                }
                break;
            }
            case Op::Scale:
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * n.attr0;
                break;
            case Op::Exp:
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * n.value.data[i];
                break;
            case Op::Log:
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / va.data[i];
                break;
            case Op::Tanh:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += g.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
                break;
            case Op::Acos:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    double u = va.data[i];
                    if (u < -1.0 || u > 1.0) continue;  // snapped region is flat
                    u = std::clamp(u, -kAcosClamp, kAcosClamp);
                    ga.data[i] += -g.data[i] / std::sqrt(1.0 - u * u);
                }
                break;
            case Op::Cos:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += -g.data[i] * std::sin(va.data[i]);
                break;
            case Op::Reciprocal:
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += -g.data[i] * n.value.data[i] * n.value.data[i];
                break;
            case Op::Sum:
                for (double& x : ga.data) x += g.data[0];
                break;
            case Op::Mean: {
                double inv = 1.0 / static_cast<double>(va.numel());
                for (double& x : ga.data) x += g.data[0] * inv;
                break;
            }
            case Op::L2Normalize: {
                double nrm = va.norm2();
                double dot = 0.0;
                for (std::size_t i = 0; i < g.data.size(); ++i) dot += g.data[i] * n.value.data[i];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    ga.data[i] += (g.data[i] - n.value.data[i] * dot) / nrm;
                break;
            }
            case Op::LogSumExp: {
                for (std::size_t i = 0; i < va.data.size(); ++i)
                    ga.data[i] += g.data[0] * std::exp(va.data[i] - n.value.data[0]);
                break;
            }
            case Op::SelectIndex:
                ga.data[static_cast<std::size_t>(n.attr0)] += g.data[0];
                break;
            case Op::Slice: {
                std::size_t off = static_cast<std::size_t>(n.attr0);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[off + i] += g.data[i];
                break;
            }
            case Op::Reshape:
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
                break;
            case Op::Clamp:
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    double u = va.data[i];
                    if (u >= n.attr0 && u <= n.attr1) ga.data[i] += g.data[i];
                }
                break;
            case Op::Leaf:
            case Op::Constant:
                break;
        }
    }
    return gm;
}

double finite_diff_check(const ScalarFn& fn, const Tensor& point, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");

    auto eval = [&fn](const Tensor& p) {
        Graph g;
        NodeId x = g.leaf(p);
        NodeId loss = fn(g, x);
        double v = g.value(loss).data[0];
        if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite function value");
        return v;
    };

    Graph g;
    NodeId x = g.leaf(point);
    NodeId loss = fn(g, x);
    if (!g.value(loss).is_scalar()) throw std::invalid_argument("finite_diff_check: function is not scalar");
    GradMap gm = g.backward(loss);
    const Tensor& analytic = gm.grad(x);

    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.data.size(); ++i) {
        probe.data[i] = point.data[i] + step;
        double fp = eval(probe);
        probe.data[i] = point.data[i] - step;
        double fm = eval(probe);
        probe.data[i] = point.data[i];
        double numeric = (fp - fm) / (2.0 * step);
        double denom = std::max(1.0, std::abs(analytic.data[i]));
        worst = std::max(worst, std::abs(analytic.data[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace rts::diffcore
