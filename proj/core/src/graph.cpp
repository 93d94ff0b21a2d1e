#include "sip/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sip/errors.hpp"
#include "sip/linalg.hpp"

namespace sip {

namespace {

// b broadcasts over a when b is one element, or a row matching a's columns.
bool is_row_of(const Tensor& row, const Tensor& m) {
    if (m.rank() != 2) return false;
    if (row.rank() == 1) return row.numel() == m.cols();
    if (row.rank() == 2) return row.rows() == 1 && row.cols() == m.cols();
    return false;
}

Tensor tril_copy(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j <= i && j < a.cols(); ++j) out.at(i, j) = a.at(i, j);
    return out;
}

// Column sums of g shaped like target (a row: [C] or [1,C]).
Tensor colsum_like(const Tensor& g, const Tensor& target) {
    Tensor out = Tensor::zeros(target.shape());
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) out[j] += g.at(i, j);
    return out;
}

Tensor scalar_like(const Tensor& target, double v) {
    Tensor out = Tensor::zeros(target.shape());
    out[0] = v;
    return out;
}

double sum_all(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

Tensor as_matrix(const Tensor& a) {
    if (a.rank() == 2) return a;
    Tensor out({a.numel(), 1});
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i];
    return out;
}

Tensor reshaped_like(const Tensor& src, const Tensor& target) {
    Tensor out(target.shape(), src.vec());
    return out;
}

}  // namespace

Graph::Graph(ParamStore* store) : store_(store) {}

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::check_id(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw ContractError("graph: node id " + std::to_string(id) + " out of range");
    }
}

const Node& Graph::node(NodeId id) const {
    check_id(id);
    return nodes_[static_cast<std::size_t>(id)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

NodeId Graph::constant(Tensor v) {
    Node n;
    n.op = Op::kConst;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Graph::param(const std::string& name) {
    if (store_ == nullptr) {
        throw ContractError("graph: param('" + name + "') without a bound store");
    }
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.op = Op::kParam;
    n.value = store_->value(name);
    n.param_name = name;
    NodeId id = push(std::move(n));
    param_nodes_.emplace(name, id);
    return id;
}

NodeId Graph::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    Node n;
    n.op = Op::kAdd;
    n.inputs = {a, b};
    if (va.same_shape(vb)) {
        n.value = va;
        for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] += vb[i];
    } else if (vb.numel() == 1) {
        n.value = va;
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] += vb[0];
    } else if (va.numel() == 1) {
        n.value = vb;
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] += va[0];
    } else {
        throw ShapeError("add: shapes " + va.shape_str() + " and " + vb.shape_str());
    }
    return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    Node n;
    n.op = Op::kSub;
    n.inputs = {a, b};
    if (va.same_shape(vb)) {
        n.value = va;
        for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] -= vb[i];
    } else if (vb.numel() == 1) {
        n.value = va;
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] -= vb[0];
    } else if (va.numel() == 1) {
        n.value = Tensor::zeros(vb.shape());
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = va[0] - vb[i];
    } else {
        throw ShapeError("sub: shapes " + va.shape_str() + " and " + vb.shape_str());
    }
    return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    Node n;
    n.op = Op::kMul;
    n.inputs = {a, b};
    if (va.same_shape(vb)) {
        n.value = va;
        for (std::size_t i = 0; i < vb.numel(); ++i) n.value[i] *= vb[i];
    } else if (vb.numel() == 1) {
        n.value = va;
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= vb[0];
    } else if (va.numel() == 1) {
        n.value = vb;
        for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= va[0];
    } else if (is_row_of(vb, va)) {
        n.value = va;
        for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < va.cols(); ++j) n.value.at(i, j) *= vb[j];
    } else if (is_row_of(va, vb)) {
        n.value = vb;
        for (std::size_t i = 0; i < vb.rows(); ++i)
            for (std::size_t j = 0; j < vb.cols(); ++j) n.value.at(i, j) *= va[j];
    } else {
        throw ShapeError("mul_elementwise: shapes " + va.shape_str() + " and " +
                         vb.shape_str());
    }
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    Node n;
    n.op = Op::kMatmul;
    n.inputs = {a, b};
    n.value = linalg::matmul(value(a), value(b));
    return push(std::move(n));
}

NodeId Graph::scalar_scale(NodeId a, double c) {
    Node n;
    n.op = Op::kScalarScale;
    n.inputs = {a};
    n.scalar = c;
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= c;
    return push(std::move(n));
}

NodeId Graph::shift(NodeId a, double c) {
    return add(a, constant(Tensor::full(value(a).shape(), c)));
}

NodeId Graph::cos(NodeId a) {
    Node n;
    n.op = Op::kCos;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = std::cos(n.value[i]);
    return push(std::move(n));
}

NodeId Graph::sin(NodeId a) {
    Node n;
    n.op = Op::kSin;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = std::sin(n.value[i]);
    return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
    Node n;
    n.op = Op::kExp;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = std::exp(n.value[i]);
    return push(std::move(n));
}

NodeId Graph::log(NodeId a) {
    Node n;
    n.op = Op::kLog;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        if (n.value[i] <= 0.0) {
            throw DomainError("log: non-positive argument " +
                              std::to_string(n.value[i]));
        }
        n.value[i] = std::log(n.value[i]);
    }
    return push(std::move(n));
}

NodeId Graph::leaky_relu(NodeId a, double slope) {
    Node n;
    n.op = Op::kLeakyRelu;
    n.inputs = {a};
    n.scalar = slope;
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        if (n.value[i] < 0.0) n.value[i] *= slope;
    }
    return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
    Node n;
    n.op = Op::kSigmoid;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        const double x = n.value[i];
        if (x >= 0.0) {
            n.value[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            n.value[i] = e / (1.0 + e);
        }
    }
    return push(std::move(n));
}

NodeId Graph::softplus(NodeId a) {
    Node n;
    n.op = Op::kSoftplus;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        const double x = n.value[i];
        if (x > 30.0) {
            // already x to double precision
        } else if (x < -30.0) {
            n.value[i] = std::exp(x);
        } else {
            n.value[i] = std::log1p(std::exp(x));
        }
    }
    return push(std::move(n));
}

NodeId Graph::square(NodeId a) {
    Node n;
    n.op = Op::kSquare;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= n.value[i];
    return push(std::move(n));
}

NodeId Graph::sqrt(NodeId a) {
    Node n;
    n.op = Op::kSqrt;
    n.inputs = {a};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        if (n.value[i] < 0.0) {
            throw DomainError("sqrt: negative argument " + std::to_string(n.value[i]));
        }
        n.value[i] = std::sqrt(n.value[i]);
    }
    return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
    Node n;
    n.op = Op::kSum;
    n.inputs = {a};
    n.value = Tensor::scalar(sum_all(value(a)));
    return push(std::move(n));
}

NodeId Graph::sum_axis(NodeId a, int axis) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || (axis != 0 && axis != 1)) {
        throw ShapeError("sum_axis: need rank-2 input and axis 0/1, got " +
                         va.shape_str() + " axis " + std::to_string(axis));
    }
    Node n;
    n.op = Op::kSumAxis;
    n.inputs = {a};
    n.axis = axis;
    n.value = Tensor::zeros({axis == 0 ? va.cols() : va.rows()});
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j)
            n.value[axis == 0 ? j : i] += va.at(i, j);
    return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
    const Tensor& va = value(a);
    if (va.numel() == 0) throw ContractError("mean: empty tensor");
    Node n;
    n.op = Op::kMean;
    n.inputs = {a};
    n.value = Tensor::scalar(sum_all(va) / static_cast<double>(va.numel()));
    return push(std::move(n));
}

NodeId Graph::mean_axis(NodeId a, int axis) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || (axis != 0 && axis != 1)) {
        throw ShapeError("mean_axis: need rank-2 input and axis 0/1, got " +
                         va.shape_str() + " axis " + std::to_string(axis));
    }
    const double denom = static_cast<double>(axis == 0 ? va.rows() : va.cols());
    if (denom == 0.0) throw ContractError("mean_axis: empty reduction");
    Node n;
    n.op = Op::kMeanAxis;
    n.inputs = {a};
    n.axis = axis;
    n.value = Tensor::zeros({axis == 0 ? va.cols() : va.rows()});
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j)
            n.value[axis == 0 ? j : i] += va.at(i, j);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] /= denom;
    return push(std::move(n));
}

NodeId Graph::logsumexp(NodeId a, int axis) {
    const Tensor& va = value(a);
    Node n;
    n.op = Op::kLogsumexp;
    n.inputs = {a};
    n.axis = axis;
    if (axis == -1) {
        if (va.numel() == 0) throw ContractError("logsumexp: empty tensor");
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < va.numel(); ++i) m = std::max(m, va[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < va.numel(); ++i) s += std::exp(va[i] - m);
        n.value = Tensor::scalar(m + std::log(s));
    } else {
        if (va.rank() != 2 || (axis != 0 && axis != 1)) {
            throw ShapeError("logsumexp: need rank-2 input for axis 0/1, got " +
                             va.shape_str());
        }
        const std::size_t out_n = axis == 0 ? va.cols() : va.rows();
        const std::size_t red_n = axis == 0 ? va.rows() : va.cols();
        if (red_n == 0) throw ContractError("logsumexp: empty reduction");
        n.value = Tensor::zeros({out_n});
        for (std::size_t k = 0; k < out_n; ++k) {
            double m = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < red_n; ++r) {
                const double x = axis == 0 ? va.at(r, k) : va.at(k, r);
                m = std::max(m, x);
            }
            double s = 0.0;
            for (std::size_t r = 0; r < red_n; ++r) {
                const double x = axis == 0 ? va.at(r, k) : va.at(k, r);
                s += std::exp(x - m);
            }
            n.value[k] = m + std::log(s);
        }
    }
    return push(std::move(n));
}

NodeId Graph::broadcast_add_row(NodeId a, NodeId row) {
    const Tensor& va = value(a);
    const Tensor& vr = value(row);
    if (!is_row_of(vr, va)) {
        throw ShapeError("broadcast_add_row: shapes " + va.shape_str() + " and " +
                         vr.shape_str());
    }
    Node n;
    n.op = Op::kBroadcastAddRow;
    n.inputs = {a, row};
    n.value = va;
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j) n.value.at(i, j) += vr[j];
    return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
    Node n;
    n.op = Op::kTranspose;
    n.inputs = {a};
    n.value = linalg::transpose(value(a));
    return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts, int axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    if (axis != 0 && axis != 1) {
        throw ContractError("concat: axis must be 0 or 1, got " + std::to_string(axis));
    }
    const bool vec_mode = value(parts[0]).rank() == 1;
    Node n;
    n.op = Op::kConcat;
    n.inputs = parts;
    n.axis = axis;
    if (vec_mode) {
        if (axis != 0) throw ShapeError("concat: rank-1 inputs need axis 0");
        std::size_t total = 0;
        for (NodeId p : parts) {
            if (value(p).rank() != 1)
                throw ShapeError("concat: mixed ranks, got " + value(p).shape_str());
            total += value(p).numel();
        }
        n.value = Tensor::zeros({total});
        std::size_t off = 0;
        for (NodeId p : parts) {
            const Tensor& v = value(p);
            for (std::size_t i = 0; i < v.numel(); ++i) n.value[off + i] = v[i];
            off += v.numel();
        }
    } else {
        std::size_t rows = value(parts[0]).rows();
        std::size_t cols = value(parts[0]).cols();
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const Tensor& v = value(parts[k]);
            if (v.rank() != 2)
                throw ShapeError("concat: expected rank-2, got " + v.shape_str());
            if (k == 0) continue;
            if (axis == 0) {
                if (v.cols() != cols)
                    throw ShapeError("concat axis 0: column mismatch, " +
                                     v.shape_str());
                rows += v.rows();
            } else {
                if (v.rows() != rows)
                    throw ShapeError("concat axis 1: row mismatch, " + v.shape_str());
                cols += v.cols();
            }
        }
        n.value = Tensor::zeros({rows, cols});
        if (axis == 0) {
            std::size_t r = 0;
            for (NodeId p : parts) {
                const Tensor& v = value(p);
                for (std::size_t i = 0; i < v.rows(); ++i)
                    for (std::size_t j = 0; j < v.cols(); ++j)
                        n.value.at(r + i, j) = v.at(i, j);
                r += v.rows();
            }
        } else {
            std::size_t c = 0;
            for (NodeId p : parts) {
                const Tensor& v = value(p);
                for (std::size_t i = 0; i < v.rows(); ++i)
                    for (std::size_t j = 0; j < v.cols(); ++j)
                        n.value.at(i, c + j) = v.at(i, j);
                c += v.cols();
            }
        }
    }
    return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t r0, std::size_t r1, std::size_t c0,
                    std::size_t c1) {
    const Tensor& va = value(a);
    Node n;
    n.op = Op::kSlice;
    n.inputs = {a};
    n.region = {r0, r1, c0, c1};
    if (va.rank() == 1) {
        if (r1 > va.numel() || r0 > r1 || c0 != 0 || c1 != 1) {
            throw ShapeError("slice: bad bounds for rank-1 input " + va.shape_str());
        }
        n.value = Tensor::zeros({r1 - r0});
        for (std::size_t i = r0; i < r1; ++i) n.value[i - r0] = va[i];
    } else if (va.rank() == 2) {
        if (r1 > va.rows() || c1 > va.cols() || r0 > r1 || c0 > c1) {
            throw ShapeError("slice: bad bounds for input " + va.shape_str());
        }
        n.value = Tensor::zeros({r1 - r0, c1 - c0});
        for (std::size_t i = r0; i < r1; ++i)
            for (std::size_t j = c0; j < c1; ++j) n.value.at(i - r0, j - c0) = va.at(i, j);
    } else {
        throw ShapeError("slice: expected rank-1 or rank-2, got " + va.shape_str());
    }
    return push(std::move(n));
}

NodeId Graph::diag_part(NodeId a) {
    const Tensor& va = value(a);
    if (va.rank() != 2 || va.rows() != va.cols()) {
        throw ShapeError("diag_part: expected square matrix, got " + va.shape_str());
    }
    Node n;
    n.op = Op::kDiagPart;
    n.inputs = {a};
    n.value = Tensor::zeros({va.rows()});
    for (std::size_t i = 0; i < va.rows(); ++i) n.value[i] = va.at(i, i);
    return push(std::move(n));
}

NodeId Graph::cholesky(NodeId a) {
    Node n;
    n.op = Op::kCholesky;
    n.inputs = {a};
    n.value = linalg::cholesky(value(a));
    return push(std::move(n));
}

NodeId Graph::triangular_solve(NodeId l, NodeId b, bool transposed) {
    Node n;
    n.op = Op::kTriSolve;
    n.inputs = {l, b};
    n.flag = transposed;
    n.value = linalg::solve_triangular(value(l), value(b), transposed);
    return push(std::move(n));
}

void Graph::accum(NodeId id, const Tensor& contrib) {
    Tensor& adj = adjoints_[static_cast<std::size_t>(id)];
    if (!adj.same_shape(contrib)) {
        throw ShapeError("graph backward: adjoint shape " + adj.shape_str() +
                         " vs contribution " + contrib.shape_str());
    }
    for (std::size_t i = 0; i < contrib.numel(); ++i) adj[i] += contrib[i];
}

const Tensor& Graph::adjoint(NodeId id) const {
    check_id(id);
    if (adjoints_.size() != nodes_.size()) {
        throw ContractError("graph: adjoint() before backward()");
    }
    return adjoints_[static_cast<std::size_t>(id)];
}

void Graph::backward(NodeId root, const std::set<std::string>& groups) {
    check_id(root);
    if (value(root).numel() != 1) {
        throw ContractError("backward: root must be scalar-shaped, got " +
                            value(root).shape_str());
    }
    adjoints_.assign(nodes_.size(), Tensor());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        adjoints_[i] = Tensor::zeros(nodes_[i].value.shape());
    }
    adjoints_[static_cast<std::size_t>(root)][0] = 1.0;

    for (std::size_t ii = nodes_.size(); ii > 0; --ii) {
        const std::size_t idx = ii - 1;
        const Node& n = nodes_[idx];
        const Tensor& g = adjoints_[idx];
        bool live = false;
        for (std::size_t i = 0; i < g.numel() && !live; ++i) live = g[i] != 0.0;
        if (!live) continue;

        switch (n.op) {
            case Op::kConst:
                break;
            case Op::kParam: {
                if (store_ == nullptr) break;
                if (groups.empty() || groups.count(store_->group_of(n.param_name))) {
                    store_->accumulate_grad(n.param_name, g);
                }
                break;
            }
            case Op::kAdd:
            case Op::kSub: {
                const Tensor& va = value(n.inputs[0]);
                const Tensor& vb = value(n.inputs[1]);
                const double sgn = n.op == Op::kSub ? -1.0 : 1.0;
                if (va.same_shape(vb)) {
                    accum(n.inputs[0], g);
                    Tensor gb = g;
                    if (sgn < 0) {
                        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
                    }
                    accum(n.inputs[1], gb);
                } else if (vb.numel() == 1) {
                    accum(n.inputs[0], g);
                    accum(n.inputs[1], scalar_like(vb, sgn * sum_all(g)));
                } else {
                    Tensor gb = g;
                    if (sgn < 0) {
                        for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] = -gb[i];
                    }
                    accum(n.inputs[1], gb);
                    accum(n.inputs[0], scalar_like(va, sum_all(g)));
                }
                break;
            }
            case Op::kMul: {
                const Tensor& va = value(n.inputs[0]);
                const Tensor& vb = value(n.inputs[1]);
                if (va.same_shape(vb)) {
                    Tensor ga = g, gb = g;
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        ga[i] *= vb[i];
                        gb[i] *= va[i];
                    }
                    accum(n.inputs[0], ga);
                    accum(n.inputs[1], gb);
                } else if (vb.numel() == 1) {
                    Tensor ga = g;
                    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= vb[0];
                    accum(n.inputs[0], ga);
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.numel(); ++i) s += g[i] * va[i];
                    accum(n.inputs[1], scalar_like(vb, s));
                } else if (va.numel() == 1) {
                    Tensor gb = g;
                    for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] *= va[0];
                    accum(n.inputs[1], gb);
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.numel(); ++i) s += g[i] * vb[i];
                    accum(n.inputs[0], scalar_like(va, s));
                } else if (is_row_of(vb, va)) {
                    Tensor ga = g;
                    Tensor gb = Tensor::zeros(vb.shape());
                    for (std::size_t i = 0; i < va.rows(); ++i)
                        for (std::size_t j = 0; j < va.cols(); ++j) {
                            ga.at(i, j) *= vb[j];
                            gb[j] += g.at(i, j) * va.at(i, j);
                        }
                    accum(n.inputs[0], ga);
                    accum(n.inputs[1], gb);
                } else {
                    Tensor gb = g;
                    Tensor ga = Tensor::zeros(va.shape());
                    for (std::size_t i = 0; i < vb.rows(); ++i)
                        for (std::size_t j = 0; j < vb.cols(); ++j) {
                            gb.at(i, j) *= va[j];
                            ga[j] += g.at(i, j) * vb.at(i, j);
                        }
                    accum(n.inputs[0], ga);
                    accum(n.inputs[1], gb);
                }
                break;
            }
            case Op::kMatmul: {
                const Tensor& va = value(n.inputs[0]);
                const Tensor& vb = value(n.inputs[1]);
                accum(n.inputs[0], linalg::matmul(g, linalg::transpose(vb)));
                accum(n.inputs[1], linalg::matmul(linalg::transpose(va), g));
                break;
            }
            case Op::kScalarScale: {
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= n.scalar;
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kCos: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i)
                    ga[i] *= -std::sin(x[i]);
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSin: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= std::cos(x[i]);
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kExp: {
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= n.value[i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kLog: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] /= x[i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kLeakyRelu: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) {
                    if (x[i] < 0.0) ga[i] *= n.scalar;
                }
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSigmoid: {
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i)
                    ga[i] *= n.value[i] * (1.0 - n.value[i]);
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSoftplus: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) {
                    const double xi = x[i];
                    double s;
                    if (xi >= 0.0) {
                        s = 1.0 / (1.0 + std::exp(-xi));
                    } else {
                        const double e = std::exp(xi);
                        s = e / (1.0 + e);
                    }
                    ga[i] *= s;
                }
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSquare: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] *= 2.0 * x[i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSqrt: {
                Tensor ga = g;
                for (std::size_t i = 0; i < ga.numel(); ++i)
                    ga[i] *= 0.5 / n.value[i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kSum: {
                const Tensor& x = value(n.inputs[0]);
                accum(n.inputs[0], Tensor::full(x.shape(), g[0]));
                break;
            }
            case Op::kSumAxis: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        ga.at(i, j) = g[n.axis == 0 ? j : i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kMean: {
                const Tensor& x = value(n.inputs[0]);
                accum(n.inputs[0],
                      Tensor::full(x.shape(), g[0] / static_cast<double>(x.numel())));
                break;
            }
            case Op::kMeanAxis: {
                const Tensor& x = value(n.inputs[0]);
                const double denom =
                    static_cast<double>(n.axis == 0 ? x.rows() : x.cols());
                Tensor ga = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < x.rows(); ++i)
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        ga.at(i, j) = g[n.axis == 0 ? j : i] / denom;
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kLogsumexp: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = Tensor::zeros(x.shape());
                if (n.axis == -1) {
                    for (std::size_t i = 0; i < x.numel(); ++i)
                        ga[i] = g[0] * std::exp(x[i] - n.value[0]);
                } else if (n.axis == 0) {
                    for (std::size_t i = 0; i < x.rows(); ++i)
                        for (std::size_t j = 0; j < x.cols(); ++j)
                            ga.at(i, j) = g[j] * std::exp(x.at(i, j) - n.value[j]);
                } else {
                    for (std::size_t i = 0; i < x.rows(); ++i)
                        for (std::size_t j = 0; j < x.cols(); ++j)
                            ga.at(i, j) = g[i] * std::exp(x.at(i, j) - n.value[i]);
                }
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kBroadcastAddRow: {
                accum(n.inputs[0], g);
                accum(n.inputs[1], colsum_like(g, value(n.inputs[1])));
                break;
            }
            case Op::kTranspose: {
                const Tensor& x = value(n.inputs[0]);
                if (x.rank() == 1) {
                    Tensor ga = Tensor::zeros(x.shape());
                    for (std::size_t i = 0; i < x.numel(); ++i) ga[i] = g[i];
                    accum(n.inputs[0], ga);
                } else {
                    accum(n.inputs[0], linalg::transpose(g));
                }
                break;
            }
            case Op::kConcat: {
                if (value(n.inputs[0]).rank() == 1) {
                    std::size_t off = 0;
                    for (NodeId p : n.inputs) {
                        const Tensor& v = value(p);
                        Tensor gp = Tensor::zeros(v.shape());
                        for (std::size_t i = 0; i < v.numel(); ++i) gp[i] = g[off + i];
                        accum(p, gp);
                        off += v.numel();
                    }
                } else if (n.axis == 0) {
                    std::size_t r = 0;
                    for (NodeId p : n.inputs) {
                        const Tensor& v = value(p);
                        Tensor gp = Tensor::zeros(v.shape());
                        for (std::size_t i = 0; i < v.rows(); ++i)
                            for (std::size_t j = 0; j < v.cols(); ++j)
                                gp.at(i, j) = g.at(r + i, j);
                        accum(p, gp);
                        r += v.rows();
                    }
                } else {
                    std::size_t c = 0;
                    for (NodeId p : n.inputs) {
                        const Tensor& v = value(p);
                        Tensor gp = Tensor::zeros(v.shape());
                        for (std::size_t i = 0; i < v.rows(); ++i)
                            for (std::size_t j = 0; j < v.cols(); ++j)
                                gp.at(i, j) = g.at(i, c + j);
                        accum(p, gp);
                        c += v.cols();
                    }
                }
                break;
            }
            case Op::kSlice: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = Tensor::zeros(x.shape());
                const auto [r0, r1, c0, c1] = n.region;
                if (x.rank() == 1) {
                    for (std::size_t i = r0; i < r1; ++i) ga[i] = g[i - r0];
                } else {
                    for (std::size_t i = r0; i < r1; ++i)
                        for (std::size_t j = c0; j < c1; ++j)
                            ga.at(i, j) = g.at(i - r0, j - c0);
                }
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kDiagPart: {
                const Tensor& x = value(n.inputs[0]);
                Tensor ga = Tensor::zeros(x.shape());
                for (std::size_t i = 0; i < x.rows(); ++i) ga.at(i, i) = g[i];
                accum(n.inputs[0], ga);
                break;
            }
            case Op::kCholesky: {
                const Tensor& l = n.value;
                Tensor lbar = tril_copy(g);
                Tensor p = linalg::matmul(linalg::transpose(l), lbar);
                // Lower triangle with halved diagonal.
                Tensor phi = Tensor::zeros(p.shape());
                for (std::size_t i = 0; i < p.rows(); ++i) {
                    for (std::size_t j = 0; j < i; ++j) phi.at(i, j) = p.at(i, j);
                    phi.at(i, i) = 0.5 * p.at(i, i);
                }
                Tensor t1 = linalg::solve_triangular(l, phi, true);
                Tensor t2 = linalg::solve_triangular(l, linalg::transpose(t1), true);
                Tensor s = linalg::transpose(t2);
                Tensor contrib = Tensor::zeros(s.shape());
                for (std::size_t i = 0; i < s.rows(); ++i)
                    for (std::size_t j = 0; j < s.cols(); ++j)
                        contrib.at(i, j) = 0.5 * (s.at(i, j) + s.at(j, i));
                accum(n.inputs[0], contrib);
                break;
            }
            case Op::kTriSolve: {
                const Tensor& l = value(n.inputs[0]);
                const Tensor& b = value(n.inputs[1]);
                const Tensor x = as_matrix(n.value);
                const Tensor gm = as_matrix(g);
                Tensor bbar, lcontrib;
                if (!n.flag) {
                    bbar = linalg::solve_triangular(l, gm, true);
                    lcontrib = linalg::matmul(bbar, linalg::transpose(x));
                } else {
                    bbar = linalg::solve_triangular(l, gm, false);
                    lcontrib = linalg::matmul(x, linalg::transpose(bbar));
                }
                Tensor ltri = Tensor::zeros(l.shape());
                for (std::size_t i = 0; i < l.rows(); ++i)
                    for (std::size_t j = 0; j <= i; ++j)
                        ltri.at(i, j) = -lcontrib.at(i, j);
                accum(n.inputs[0], ltri);
                accum(n.inputs[1], reshaped_like(bbar, b));
                break;
            }
        }
    }
}

}  // namespace sip
