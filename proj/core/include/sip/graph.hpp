#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sip/param_store.hpp"
#include "sip/tensor.hpp"

namespace sip {

// Operation tags. Values are computed eagerly when a node is appended;
// backward() replays the tape in reverse.
enum class Op {
    kConst,
    kParam,
    kAdd,
    kSub,
    kMul,  // elementwise; scalar or row operand broadcasts
    kMatmul,
    kScalarScale,
    kCos,
    kSin,
    kExp,
    kLog,
    kLeakyRelu,
    kSigmoid,
    kSoftplus,
    kSquare,
    kSqrt,
    kSum,
    kSumAxis,
    kMean,
    kMeanAxis,
    kLogsumexp,  // axis 0/1, or -1 for all elements
    kBroadcastAddRow,
    kTranspose,
    kConcat,  // axis 0 or 1
    kSlice,
    kDiagPart,
    kCholesky,
    kTriSolve,  // flag = solve with the transposed factor
};

using NodeId = int;

struct Node {
    Op op;
    std::vector<NodeId> inputs;
    Tensor value;
    double scalar = 0.0;  // scale factor / leaky slope
    int axis = -1;
    std::array<std::size_t, 4> region{0, 0, 0, 0};  // slice bounds r0,r1,c0,c1
    bool flag = false;
    std::string param_name;
};

// Append-only computation tape over Tensors, with reverse-mode
// differentiation. Parameter leaves are bound to a ParamStore; backward()
// accumulates their gradients into the store, optionally restricted to a
// set of parameter groups (the others receive exactly zero contribution,
// which keeps the adversarial updates isolated).
class Graph {
public:
    explicit Graph(ParamStore* store = nullptr);

    NodeId constant(Tensor v);
    NodeId param(const std::string& name);  // cached: one node per name

    const Tensor& value(NodeId id) const;
    std::size_t size() const { return nodes_.size(); }

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId matmul(NodeId a, NodeId b);
    NodeId scalar_scale(NodeId a, double c);
    // Elementwise shift by a compile-time constant (sugar over add+const).
    NodeId shift(NodeId a, double c);

    NodeId cos(NodeId a);
    NodeId sin(NodeId a);
    NodeId exp(NodeId a);
    NodeId log(NodeId a);
    NodeId leaky_relu(NodeId a, double slope);
    NodeId sigmoid(NodeId a);
    NodeId softplus(NodeId a);
    NodeId square(NodeId a);
    NodeId sqrt(NodeId a);

    NodeId sum(NodeId a);
    NodeId sum_axis(NodeId a, int axis);
    NodeId mean(NodeId a);
    NodeId mean_axis(NodeId a, int axis);
    NodeId logsumexp(NodeId a, int axis = -1);

    NodeId broadcast_add_row(NodeId a, NodeId row);
    NodeId transpose(NodeId a);
    NodeId concat(const std::vector<NodeId>& parts, int axis);
    NodeId slice(NodeId a, std::size_t r0, std::size_t r1, std::size_t c0,
                 std::size_t c1);
    NodeId diag_part(NodeId a);

    NodeId cholesky(NodeId a);
    NodeId triangular_solve(NodeId l, NodeId b, bool transposed);

    // Populate adjoints for every ancestor of root (a one-element tensor)
    // and accumulate parameter gradients into the bound store. An empty
    // group set means all groups.
    void backward(NodeId root, const std::set<std::string>& groups = {});

    // Adjoint of a node after backward(); zeros if the node is not an
    // ancestor of the root.
    const Tensor& adjoint(NodeId id) const;

private:
    NodeId push(Node n);
    const Node& node(NodeId id) const;
    void check_id(NodeId id) const;
    void accum(NodeId id, const Tensor& contrib);

    ParamStore* store_;
    std::vector<Node> nodes_;
    std::vector<Tensor> adjoints_;
    std::unordered_map<std::string, NodeId> param_nodes_;
};

}  // namespace sip
