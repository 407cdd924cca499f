#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "gtune/tensor.hpp"

namespace gtune::ad {

// Guard for every norm / cosine denominator.
inline constexpr double kNormEps = 1e-8;

// Op set is fixed to the closure of the loss graph: linear maps, a row
// softmax, cosine losses, and a stop-gradient. No general autodiff.
enum class Op {
    Leaf,
    Add,
    Scale,
    Mul,
    MatMul,
    SoftmaxRows,
    L2Normalize,
    Mean,
    MeanOf,
    Cosine,
    StopGrad,
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the acyclic computation graph. Built eagerly: constructing a
// node computes its float32 value; backward() fills grads for every node on a
// requires_grad path. grad.shape == value.shape whenever grad is present.
struct Node {
    Op op = Op::Leaf;
    std::vector<NodePtr> inputs;
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;

    // per-op parameters
    float factor = 1.0f;       // Scale
    int axis = -1;             // L2Normalize
    bool transpose_b = false;  // MatMul: treat b as transposed (a * b^T)
    double eps = kNormEps;     // Cosine / L2Normalize denominator guard
};

NodePtr leaf(Tensor value, bool requires_grad);
NodePtr constant(Tensor value);

NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr scale(const NodePtr& a, float factor);
NodePtr mul(const NodePtr& a, const NodePtr& b);

// 2D x 2D matrix product; rank-1 operands are promoted (a: row vector,
// b: column vector) and the result is squeezed back.
NodePtr matmul(const NodePtr& a, const NodePtr& b, bool transpose_b = false);

// Row softmax with max-subtraction; rows sum to 1.
NodePtr softmax_rows(const NodePtr& a);

// Normalizes every fiber along `axis` to unit length; fibers with norm below
// eps are divided by eps instead (zero stays zero).
NodePtr l2_normalize(const NodePtr& a, int axis, double eps = kNormEps);

NodePtr mean(const NodePtr& a);

// Elementwise mean of same-shaped parts (used to average per-(t,l) scalars).
NodePtr mean_of(std::vector<NodePtr> parts);

// Fused cosine similarity of two same-shaped tensors viewed as flat vectors.
NodePtr cosine(const NodePtr& u, const NodePtr& v, double eps = kNormEps);

// Value passes through; gradient does not.
NodePtr stop_gradient(const NodePtr& a);

// Reverse sweep from a scalar loss. Gradients accumulate, so each graph is
// meant to be built fresh per step.
void backward(const NodePtr& loss);

std::vector<double> to_f64(const Tensor& t);

// Re-evaluates the graph rooted at `out` entirely in float64, with `target`'s
// payload replaced by `values` (never rounded through float32). Stop-gradient
// nodes stay frozen at their forward values, so this differentiates the same
// function backward() does. Keeps the finite-difference noise floor ~1e-13.
double eval_f64(const NodePtr& out, const Node* target, const std::vector<double>& values);

// Central differences (f(x+h) - f(x-h)) / 2h per element, all in double.
Tensor finite_diff(const std::function<double(const std::vector<double>&)>& fn, const Tensor& x,
                   double h);

// finite_diff against a built graph: perturbs `leaf`, re-evaluating `loss`.
Tensor graph_finite_diff(const NodePtr& loss, const NodePtr& leaf, double h);

}  // namespace gtune::ad
