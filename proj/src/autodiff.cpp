#include "gtune/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "gtune/errors.hpp"

namespace gtune::ad {

namespace {

// Promoted 2D view of a matmul operand.
struct MatView {
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool from_vector = false;
};

MatView view_a(const Tensor& a) {
    if (a.rank() == 2) return {a.shape[0], a.shape[1], false};
    if (a.rank() == 1) return {1, a.shape[0], true};
    throw ValidationError("matmul: first operand must be rank 1 or 2, got " + a.shape_str());
}

// op(b): the matrix actually multiplied, shape (k, n).
MatView view_b(const Tensor& b, bool transpose_b) {
    if (b.rank() == 1) return {b.shape[0], 1, true};
    if (b.rank() == 2) {
        if (transpose_b) return {b.shape[1], b.shape[0], false};
        return {b.shape[0], b.shape[1], false};
    }
    throw ValidationError("matmul: second operand must be rank 1 or 2, got " + b.shape_str());
}

NodePtr make_node(Op op, std::vector<NodePtr> inputs, Tensor value) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->inputs = std::move(inputs);
    n->value = std::move(value);
    for (const auto& in : n->inputs) n->requires_grad = n->requires_grad || in->requires_grad;
    n->value.require_finite("op output");
    return n;
}

Tensor& ensure_grad(Node& n) {
    if (!n.grad) n.grad = Tensor::zeros(n.value.shape);
    return *n.grad;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
    }
}

// fiber layout along `axis`: outer x len x inner
struct FiberLayout {
    std::size_t outer = 1, len = 1, inner = 1;
};

FiberLayout fiber_layout(const Tensor& t, int axis) {
    if (axis < 0 || static_cast<std::size_t>(axis) >= t.rank()) {
        throw ValidationError("l2_normalize: axis " + std::to_string(axis) +
                              " out of range for " + t.shape_str());
    }
    FiberLayout fl;
    for (int i = 0; i < axis; ++i) fl.outer *= t.shape[i];
    fl.len = t.shape[axis];
    for (std::size_t i = axis + 1; i < t.rank(); ++i) fl.inner *= t.shape[i];
    return fl;
}

}  // namespace

NodePtr leaf(Tensor value, bool requires_grad) {
    value.require_finite("leaf");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

NodePtr constant(Tensor value) { return leaf(std::move(value), false); }

NodePtr add(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = Tensor::zeros(a->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];
    return make_node(Op::Add, {a, b}, std::move(out));
}

NodePtr scale(const NodePtr& a, float factor) {
    Tensor out = Tensor::zeros(a->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * factor;
    auto n = make_node(Op::Scale, {a}, std::move(out));
    n->factor = factor;
    return n;
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = Tensor::zeros(a->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = a->value.data[i] * b->value.data[i];
    return make_node(Op::Mul, {a, b}, std::move(out));
}

NodePtr matmul(const NodePtr& a, const NodePtr& b, bool transpose_b) {
    const MatView va = view_a(a->value);
    const MatView vb = view_b(b->value, transpose_b);
    if (va.cols != vb.rows) {
        throw ValidationError("matmul: inner extents differ, " + a->value.shape_str() + " vs " +
                              b->value.shape_str() + (transpose_b ? " (transposed)" : ""));
    }
    std::vector<std::size_t> out_shape;
    if (!va.from_vector) out_shape.push_back(va.rows);
    if (!vb.from_vector) out_shape.push_back(vb.cols);
    Tensor out = Tensor::zeros(out_shape);

    const std::size_t m = va.rows, k = va.cols, n = vb.cols;
    const auto& A = a->value.data;
    const auto& B = b->value.data;
    const bool b_is_mat = b->value.rank() == 2;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const float bv = !b_is_mat     ? B[p]
                                 : transpose_b ? B[j * k + p]
                                               : B[p * n + j];
                acc += static_cast<double>(A[i * k + p]) * static_cast<double>(bv);
            }
            out.data[i * n + j] = static_cast<float>(acc);
        }
    }
    auto node = make_node(Op::MatMul, {a, b}, std::move(out));
    node->transpose_b = transpose_b;
    return node;
}

NodePtr softmax_rows(const NodePtr& a) {
    if (a->value.rank() != 2) {
        throw ValidationError("softmax_rows: expected 2D input, got " + a->value.shape_str());
    }
    const std::size_t rows = a->value.rows(), cols = a->value.cols();
    if (cols == 0) throw ValidationError("softmax_rows: zero-width rows");
    Tensor out = Tensor::zeros(a->value.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const float* x = a->value.data.data() + r * cols;
        float* y = out.data.data() + r * cols;
        float mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            double e = std::exp(static_cast<double>(x[c]) - static_cast<double>(mx));
            y[c] = static_cast<float>(e);
            sum += e;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = static_cast<float>(static_cast<double>(y[c]) / sum);
        }
    }
    return make_node(Op::SoftmaxRows, {a}, std::move(out));
}

NodePtr l2_normalize(const NodePtr& a, int axis, double eps) {
    const FiberLayout fl = fiber_layout(a->value, axis);
    Tensor out = Tensor::zeros(a->value.shape);
    for (std::size_t o = 0; o < fl.outer; ++o) {
        for (std::size_t i = 0; i < fl.inner; ++i) {
            double nsq = 0.0;
            for (std::size_t l = 0; l < fl.len; ++l) {
                const double v = a->value.data[(o * fl.len + l) * fl.inner + i];
                nsq += v * v;
            }
            const double denom = std::max(std::sqrt(nsq), eps);
            for (std::size_t l = 0; l < fl.len; ++l) {
                const std::size_t idx = (o * fl.len + l) * fl.inner + i;
                out.data[idx] = static_cast<float>(a->value.data[idx] / denom);
            }
        }
    }
    auto n = make_node(Op::L2Normalize, {a}, std::move(out));
    n->axis = axis;
    n->eps = eps;
    return n;
}

NodePtr mean(const NodePtr& a) {
    if (a->value.numel() == 0) throw ValidationError("mean: empty tensor");
    double acc = 0.0;
    for (float v : a->value.data) acc += v;
    return make_node(Op::Mean, {a}, Tensor::scalar(static_cast<float>(acc / a->value.numel())));
}

NodePtr mean_of(std::vector<NodePtr> parts) {
    if (parts.empty()) throw ValidationError("mean_of: no parts");
    for (const auto& p : parts) check_same_shape(parts[0]->value, p->value, "mean_of");
    Tensor out = Tensor::zeros(parts[0]->value.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double acc = 0.0;
        for (const auto& p : parts) acc += p->value.data[i];
        out.data[i] = static_cast<float>(acc / parts.size());
    }
    return make_node(Op::MeanOf, std::move(parts), std::move(out));
}

namespace {

struct CosineStats {
    double dot = 0.0, nu = 0.0, nv = 0.0, denom = 0.0, value = 0.0;
    bool guarded = false;
};

CosineStats cosine_stats(const Tensor& u, const Tensor& v, double eps) {
    CosineStats s;
    double nusq = 0.0, nvsq = 0.0;
    for (std::size_t i = 0; i < u.numel(); ++i) {
        const double a = u.data[i], b = v.data[i];
        s.dot += a * b;
        nusq += a * a;
        nvsq += b * b;
    }
    s.nu = std::sqrt(nusq);
    s.nv = std::sqrt(nvsq);
    s.guarded = s.nu * s.nv < eps;
    s.denom = std::max(s.nu * s.nv, eps);
    s.value = s.dot / s.denom;
    return s;
}

}  // namespace

NodePtr cosine(const NodePtr& u, const NodePtr& v, double eps) {
    check_same_shape(u->value, v->value, "cosine");
    const CosineStats s = cosine_stats(u->value, v->value, eps);
    auto n = make_node(Op::Cosine, {u, v}, Tensor::scalar(static_cast<float>(s.value)));
    n->eps = eps;
    return n;
}

NodePtr stop_gradient(const NodePtr& a) {
    auto n = std::make_shared<Node>();
    n->op = Op::StopGrad;
    n->inputs = {a};
    n->value = a->value;
    n->requires_grad = false;
    return n;
}

// ---------------------------------------------------------------------------
// backward

namespace {

void backward_matmul(Node& n) {
    Node& a = *n.inputs[0];
    Node& b = *n.inputs[1];
    const MatView va = view_a(a.value);
    const MatView vb = view_b(b.value, n.transpose_b);
    const std::size_t m = va.rows, k = va.cols, nn = vb.cols;
    const auto& G = n.grad->data;
    const bool b_is_mat = b.value.rank() == 2;

    auto bop = [&](std::size_t p, std::size_t j) -> double {
        if (!b_is_mat) return b.value.data[p];
        return n.transpose_b ? b.value.data[j * k + p] : b.value.data[p * nn + j];
    };

    if (a.requires_grad) {
        Tensor& da = ensure_grad(a);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < nn; ++j) {
                    acc += static_cast<double>(G[i * nn + j]) * bop(p, j);
                }
                da.data[i * k + p] += static_cast<float>(acc);
            }
        }
    }
    if (b.requires_grad) {
        Tensor& db = ensure_grad(b);
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < nn; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    acc += static_cast<double>(a.value.data[i * k + p]) *
                           static_cast<double>(G[i * nn + j]);
                }
                const std::size_t idx = !b_is_mat      ? p
                                        : n.transpose_b ? j * k + p
                                                        : p * nn + j;
                db.data[idx] += static_cast<float>(acc);
            }
        }
    }
}

void backward_softmax_rows(Node& n) {
    Node& a = *n.inputs[0];
    if (!a.requires_grad) return;
    Tensor& da = ensure_grad(a);
    const std::size_t rows = n.value.rows(), cols = n.value.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        const float* y = n.value.data.data() + r * cols;
        const float* g = n.grad->data.data() + r * cols;
        float* d = da.data.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            dot += static_cast<double>(g[c]) * static_cast<double>(y[c]);
        }
        for (std::size_t c = 0; c < cols; ++c) {
            d[c] += static_cast<float>((static_cast<double>(g[c]) - dot) * y[c]);
        }
    }
}

void backward_l2_normalize(Node& n) {
    Node& a = *n.inputs[0];
    if (!a.requires_grad) return;
    Tensor& da = ensure_grad(a);
    const FiberLayout fl = fiber_layout(a.value, n.axis);
    for (std::size_t o = 0; o < fl.outer; ++o) {
        for (std::size_t i = 0; i < fl.inner; ++i) {
            double nsq = 0.0;
            for (std::size_t l = 0; l < fl.len; ++l) {
                const double v = a.value.data[(o * fl.len + l) * fl.inner + i];
                nsq += v * v;
            }
            const double norm = std::sqrt(nsq);
            const double denom = std::max(norm, n.eps);
            if (norm < n.eps) {
                // guard active: output was x / eps with eps constant
                for (std::size_t l = 0; l < fl.len; ++l) {
                    const std::size_t idx = (o * fl.len + l) * fl.inner + i;
                    da.data[idx] += static_cast<float>(n.grad->data[idx] / denom);
                }
                continue;
            }
            double gy = 0.0;
            for (std::size_t l = 0; l < fl.len; ++l) {
                const std::size_t idx = (o * fl.len + l) * fl.inner + i;
                gy += static_cast<double>(n.grad->data[idx]) * static_cast<double>(n.value.data[idx]);
            }
            for (std::size_t l = 0; l < fl.len; ++l) {
                const std::size_t idx = (o * fl.len + l) * fl.inner + i;
                da.data[idx] += static_cast<float>(
                    (static_cast<double>(n.grad->data[idx]) - gy * n.value.data[idx]) / denom);
            }
        }
    }
}

void backward_cosine(Node& n) {
    Node& u = *n.inputs[0];
    Node& v = *n.inputs[1];
    const CosineStats s = cosine_stats(u.value, v.value, n.eps);
    const double g = n.grad->data[0];
    if (s.guarded) {
        // denominator clamped to eps: d(dot/eps)
        if (u.requires_grad) {
            Tensor& du = ensure_grad(u);
            for (std::size_t i = 0; i < u.value.numel(); ++i) {
                du.data[i] += static_cast<float>(g * v.value.data[i] / s.denom);
            }
        }
        if (v.requires_grad) {
            Tensor& dv = ensure_grad(v);
            for (std::size_t i = 0; i < v.value.numel(); ++i) {
                dv.data[i] += static_cast<float>(g * u.value.data[i] / s.denom);
            }
        }
        return;
    }
    const double nusq = std::max(s.nu * s.nu, n.eps);
    const double nvsq = std::max(s.nv * s.nv, n.eps);
    if (u.requires_grad) {
        Tensor& du = ensure_grad(u);
        for (std::size_t i = 0; i < u.value.numel(); ++i) {
            du.data[i] += static_cast<float>(
                g * (v.value.data[i] / s.denom - s.value * u.value.data[i] / nusq));
        }
    }
    if (v.requires_grad) {
        Tensor& dv = ensure_grad(v);
        for (std::size_t i = 0; i < v.value.numel(); ++i) {
            dv.data[i] += static_cast<float>(
                g * (u.value.data[i] / s.denom - s.value * v.value.data[i] / nvsq));
        }
    }
}

void backward_node(Node& n) {
    switch (n.op) {
        case Op::Leaf:
        case Op::StopGrad:
            return;
        case Op::Add:
            for (int s = 0; s < 2; ++s) {
                Node& in = *n.inputs[s];
                if (!in.requires_grad) continue;
                Tensor& d = ensure_grad(in);
                for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += n.grad->data[i];
            }
            return;
        case Op::Scale: {
            Node& in = *n.inputs[0];
            if (!in.requires_grad) return;
            Tensor& d = ensure_grad(in);
            for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += n.grad->data[i] * n.factor;
            return;
        }
        case Op::Mul: {
            Node& a = *n.inputs[0];
            Node& b = *n.inputs[1];
            if (a.requires_grad) {
                Tensor& d = ensure_grad(a);
                for (std::size_t i = 0; i < d.numel(); ++i) {
                    d.data[i] += n.grad->data[i] * b.value.data[i];
                }
            }
            if (b.requires_grad) {
                Tensor& d = ensure_grad(b);
                for (std::size_t i = 0; i < d.numel(); ++i) {
                    d.data[i] += n.grad->data[i] * a.value.data[i];
                }
            }
            return;
        }
        case Op::MatMul:
            backward_matmul(n);
            return;
        case Op::SoftmaxRows:
            backward_softmax_rows(n);
            return;
        case Op::L2Normalize:
            backward_l2_normalize(n);
            return;
        case Op::Mean: {
            Node& in = *n.inputs[0];
            if (!in.requires_grad) return;
            Tensor& d = ensure_grad(in);
            const float g = n.grad->data[0] / static_cast<float>(in.value.numel());
            for (std::size_t i = 0; i < d.numel(); ++i) d.data[i] += g;
            return;
        }
        case Op::MeanOf: {
            const float inv = 1.0f / static_cast<float>(n.inputs.size());
            for (auto& inp : n.inputs) {
                if (!inp->requires_grad) continue;
                Tensor& d = ensure_grad(*inp);
                for (std::size_t i = 0; i < d.numel(); ++i) {
                    d.data[i] += n.grad->data[i] * inv;
                }
            }
            return;
        }
        case Op::Cosine:
            backward_cosine(n);
            return;
    }
}

void topo_sort(const NodePtr& root, std::vector<Node*>& order) {
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        // stop-gradient and constant subtrees contribute nothing
        if (!node->requires_grad) {
            order.push_back(node);
            stack.pop_back();
            continue;
        }
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next].get();
            ++next;
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

void backward(const NodePtr& loss) {
    if (!loss) throw ValidationError("backward: null loss");
    if (loss->value.numel() != 1) {
        throw ValidationError("backward: loss must be scalar, got " + loss->value.shape_str());
    }
    if (!loss->requires_grad) return;
    std::vector<Node*> order;
    topo_sort(loss, order);
    ensure_grad(*loss).data[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& n = **it;
        if (!n.requires_grad || !n.grad) continue;
        backward_node(n);
    }
}

// ---------------------------------------------------------------------------
// float64 re-evaluation + finite differences

std::vector<double> to_f64(const Tensor& t) {
    return std::vector<double>(t.data.begin(), t.data.end());
}

namespace {

using F64Map = std::unordered_map<const Node*, std::vector<double>>;

const std::vector<double>& eval_node_f64(const Node* n, const Node* target,
                                         const std::vector<double>& override_vals, F64Map& memo);

std::vector<double> compute_f64(const Node* n, const Node* target,
                                const std::vector<double>& override_vals, F64Map& memo) {
    auto in = [&](std::size_t i) -> const std::vector<double>& {
        return eval_node_f64(n->inputs[i].get(), target, override_vals, memo);
    };
    switch (n->op) {
        case Op::Leaf:
            return to_f64(n->value);
        case Op::StopGrad:
            // frozen at the forward value: the oracle must differentiate the
            // same function backward does, and sg() blocks that path
            return to_f64(n->value);
        case Op::Add: {
            std::vector<double> out = in(0);
            const auto& b = in(1);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
            return out;
        }
        case Op::Scale: {
            std::vector<double> out = in(0);
            for (auto& v : out) v *= static_cast<double>(n->factor);
            return out;
        }
        case Op::Mul: {
            std::vector<double> out = in(0);
            const auto& b = in(1);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
            return out;
        }
        case Op::MatMul: {
            const auto& A = in(0);
            const auto& B = in(1);
            const MatView va = view_a(n->inputs[0]->value);
            const MatView vb = view_b(n->inputs[1]->value, n->transpose_b);
            const std::size_t m = va.rows, k = va.cols, nn = vb.cols;
            const bool b_is_mat = n->inputs[1]->value.rank() == 2;
            std::vector<double> out(m * nn, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < nn; ++j) {
                    double acc = 0.0;
                    for (std::size_t p = 0; p < k; ++p) {
                        const double bv = !b_is_mat       ? B[p]
                                          : n->transpose_b ? B[j * k + p]
                                                           : B[p * nn + j];
                        acc += A[i * k + p] * bv;
                    }
                    out[i * nn + j] = acc;
                }
            }
            return out;
        }
        case Op::SoftmaxRows: {
            const auto& X = in(0);
            const std::size_t rows = n->value.rows(), cols = n->value.cols();
            std::vector<double> out(X.size());
            for (std::size_t r = 0; r < rows; ++r) {
                double mx = X[r * cols];
                for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, X[r * cols + c]);
                double sum = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    out[r * cols + c] = std::exp(X[r * cols + c] - mx);
                    sum += out[r * cols + c];
                }
                for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= sum;
            }
            return out;
        }
        case Op::L2Normalize: {
            const auto& X = in(0);
            const FiberLayout fl = fiber_layout(n->inputs[0]->value, n->axis);
            std::vector<double> out(X.size());
            for (std::size_t o = 0; o < fl.outer; ++o) {
                for (std::size_t i = 0; i < fl.inner; ++i) {
                    double nsq = 0.0;
                    for (std::size_t l = 0; l < fl.len; ++l) {
                        const double v = X[(o * fl.len + l) * fl.inner + i];
                        nsq += v * v;
                    }
                    const double denom = std::max(std::sqrt(nsq), n->eps);
                    for (std::size_t l = 0; l < fl.len; ++l) {
                        const std::size_t idx = (o * fl.len + l) * fl.inner + i;
                        out[idx] = X[idx] / denom;
                    }
                }
            }
            return out;
        }
        case Op::Mean: {
            const auto& X = in(0);
            double acc = 0.0;
            for (double v : X) acc += v;
            return {acc / static_cast<double>(X.size())};
        }
        case Op::MeanOf: {
            std::vector<double> out(n->value.numel(), 0.0);
            for (std::size_t p = 0; p < n->inputs.size(); ++p) {
                const auto& part = in(p);
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += part[i];
            }
            for (auto& v : out) v /= static_cast<double>(n->inputs.size());
            return out;
        }
        case Op::Cosine: {
            const auto& U = in(0);
            const auto& V = in(1);
            double dot = 0.0, nusq = 0.0, nvsq = 0.0;
            for (std::size_t i = 0; i < U.size(); ++i) {
                dot += U[i] * V[i];
                nusq += U[i] * U[i];
                nvsq += V[i] * V[i];
            }
            const double denom = std::max(std::sqrt(nusq) * std::sqrt(nvsq), n->eps);
            return {dot / denom};
        }
    }
    throw ValidationError("eval_f64: unhandled op");
}

const std::vector<double>& eval_node_f64(const Node* n, const Node* target,
                                         const std::vector<double>& override_vals, F64Map& memo) {
    if (n == target) {
        auto it = memo.find(n);
        if (it == memo.end()) it = memo.emplace(n, override_vals).first;
        return it->second;
    }
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    auto out = compute_f64(n, target, override_vals, memo);
    return memo.emplace(n, std::move(out)).first->second;
}

}  // namespace

double eval_f64(const NodePtr& out, const Node* target, const std::vector<double>& values) {
    if (out->value.numel() != 1) {
        throw ValidationError("eval_f64: output must be scalar, got " + out->value.shape_str());
    }
    if (target && values.size() != target->value.numel()) {
        throw ValidationError("eval_f64: override size mismatch");
    }
    F64Map memo;
    return eval_node_f64(out.get(), target, values, memo)[0];
}

Tensor finite_diff(const std::function<double(const std::vector<double>&)>& fn, const Tensor& x,
                   double h) {
    if (!(h > 0.0)) throw ValidationError("finite_diff: h must be positive");
    std::vector<double> base = to_f64(x);
    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t i = 0; i < base.size(); ++i) {
        const double keep = base[i];
        base[i] = keep + h;
        const double fp = fn(base);
        base[i] = keep - h;
        const double fm = fn(base);
        base[i] = keep;
        out.data[i] = static_cast<float>((fp - fm) / (2.0 * h));
    }
    return out;
}

Tensor graph_finite_diff(const NodePtr& loss, const NodePtr& leaf, double h) {
    return finite_diff(
        [&](const std::vector<double>& v) { return eval_f64(loss, leaf.get(), v); }, leaf->value,
        h);
}

}  // namespace gtune::ad
