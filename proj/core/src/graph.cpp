#include "lori/graph.hpp"

#include <cmath>
#include <string>

namespace lori {

namespace {

Matrix softmax_rows_value(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = x(i, 0);
        for (std::size_t j = 1; j < x.cols(); ++j) mx = std::max(mx, x(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            y(i, j) = std::exp(x(i, j) - mx);
            z += y(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) /= z;
    }
    return y;
}

} // namespace

NodeId GradGraph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

std::size_t GradGraph::checked(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw ArgumentError("GradGraph: invalid node id " + std::to_string(id));
    }
    return static_cast<std::size_t>(id);
}

NodeId GradGraph::constant(Matrix value) {
    return push({Op::kConstant, -1, -1, 0.0, {}, 0, std::move(value)});
}

NodeId GradGraph::leaf(Matrix value) {
    return push({Op::kLeaf, -1, -1, 0.0, {}, 0, std::move(value)});
}

NodeId GradGraph::matmul(NodeId a, NodeId b) {
    Node n{Op::kMatmul, a, b, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::add(NodeId a, NodeId b) {
    Node n{Op::kAdd, a, b, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::hadamard(NodeId a, NodeId b) {
    Node n{Op::kHadamard, a, b, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::scale(NodeId a, double c) {
    Node n{Op::kScale, a, -1, c, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::transpose(NodeId a) {
    Node n{Op::kTranspose, a, -1, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::relu(NodeId a) {
    Node n{Op::kRelu, a, -1, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::softmax_rows(NodeId a) {
    Node n{Op::kSoftmaxRows, a, -1, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::mean_rows(NodeId a) {
    Node n{Op::kMeanRows, a, -1, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::mse(NodeId pred, NodeId target) {
    Node n{Op::kMse, pred, target, 0.0, {}, 0, {}};
    n.value = eval(n);
    return push(std::move(n));
}

NodeId GradGraph::cross_entropy(NodeId logits, std::vector<int> labels, std::size_t n_classes) {
    const Matrix& x = value(logits);
    if (n_classes < 1 || n_classes > x.cols()) {
        throw ArgumentError("cross_entropy: n_classes=" + std::to_string(n_classes) +
                            " out of range for logits " + x.shape_str());
    }
    if (labels.size() != x.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             x.shape_str() + " logits");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range");
        }
    }
    Node n{Op::kCrossEntropy, logits, -1, 0.0, std::move(labels), n_classes, {}};
    n.value = eval(n);
    return push(std::move(n));
}

bool GradGraph::is_scalar(NodeId id) const {
    const Matrix& v = value(id);
    return v.rows() == 1 && v.cols() == 1;
}

double GradGraph::scalar(NodeId id) const {
    if (!is_scalar(id)) {
        throw ArgumentError("node " + std::to_string(id) + " is not scalar: " +
                            value(id).shape_str());
    }
    return value(id)(0, 0);
}

Matrix GradGraph::eval(const Node& n) const {
    switch (n.op) {
    case Op::kConstant:
    case Op::kLeaf:
        return n.value;
    case Op::kMatmul:
        return lori::matmul(value(n.a), value(n.b));
    case Op::kAdd:
        return lori::add(value(n.a), value(n.b));
    case Op::kHadamard:
        return lori::hadamard(value(n.a), value(n.b));
    case Op::kScale:
        return lori::scale(value(n.a), n.c);
    case Op::kTranspose:
        return lori::transpose(value(n.a));
    case Op::kRelu: {
        Matrix y = value(n.a);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0.0 ? y[i] : 0.0;
        return y;
    }
    case Op::kSoftmaxRows:
        return softmax_rows_value(value(n.a));
    case Op::kMeanRows: {
        const Matrix& x = value(n.a);
        if (x.rows() == 0) throw DimensionError("mean_rows: empty input");
        Matrix y(1, x.cols());
        for (std::size_t i = 0; i < x.rows(); ++i)
            for (std::size_t j = 0; j < x.cols(); ++j) y(0, j) += x(i, j);
        for (std::size_t j = 0; j < x.cols(); ++j) y(0, j) /= static_cast<double>(x.rows());
        return y;
    }
    case Op::kMse: {
        const Matrix& p = value(n.a);
        const Matrix& t = value(n.b);
        if (!p.same_shape(t)) {
            throw DimensionError("mse: " + p.shape_str() + " vs " + t.shape_str());
        }
        double s = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - t[i];
            s += d * d;
        }
        Matrix y(1, 1);
        y(0, 0) = s / static_cast<double>(p.size());
        return y;
    }
    case Op::kCrossEntropy: {
        const Matrix& x = value(n.a);
        double s = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double mx = x(i, 0);
            for (std::size_t j = 1; j < n.n_classes; ++j) mx = std::max(mx, x(i, j));
            double z = 0.0;
            for (std::size_t j = 0; j < n.n_classes; ++j) z += std::exp(x(i, j) - mx);
            s += std::log(z) + mx - x(i, static_cast<std::size_t>(n.labels[i]));
        }
        Matrix y(1, 1);
        y(0, 0) = s / static_cast<double>(x.rows());
        return y;
    }
    }
    throw ArgumentError("GradGraph: unknown op");
}

void GradGraph::recompute() {
    for (auto& n : nodes_) {
        if (n.op == Op::kConstant || n.op == Op::kLeaf) continue;
        n.value = eval(n);
    }
}

void GradGraph::set_value(NodeId id, Matrix value) {
    Node& n = nodes_[checked(id)];
    if (n.op != Op::kConstant && n.op != Op::kLeaf) {
        throw ArgumentError("set_value: node " + std::to_string(id) + " is not a leaf/constant");
    }
    if (!n.value.same_shape(value)) {
        throw DimensionError("set_value: " + n.value.shape_str() + " vs " + value.shape_str());
    }
    n.value = std::move(value);
}

std::unordered_map<NodeId, Matrix> GradGraph::backward(NodeId loss) const {
    const std::size_t root = checked(loss);
    if (!is_scalar(loss)) {
        throw ArgumentError("backward: loss must be scalar, got " + value(loss).shape_str());
    }

    std::vector<Matrix> adj(nodes_.size());
    std::vector<bool> live(nodes_.size(), false);
    adj[root] = Matrix::of({{1.0}});
    live[root] = true;

    auto accumulate = [&](NodeId target, Matrix g) {
        const auto t = static_cast<std::size_t>(target);
        if (!live[t]) {
            adj[t] = std::move(g);
            live[t] = true;
        } else {
            adj[t] = lori::add(adj[t], g);
        }
    };

    for (std::size_t idx = root + 1; idx-- > 0;) {
        if (!live[idx]) continue;
        const Node& n = nodes_[idx];
        const Matrix& g = adj[idx];
        switch (n.op) {
        case Op::kConstant:
        case Op::kLeaf:
            break;
        case Op::kMatmul:
            accumulate(n.a, lori::matmul(g, lori::transpose(value(n.b))));
            accumulate(n.b, lori::matmul(lori::transpose(value(n.a)), g));
            break;
        case Op::kAdd:
            accumulate(n.a, g);
            accumulate(n.b, g);
            break;
        case Op::kHadamard:
            accumulate(n.a, lori::hadamard(g, value(n.b)));
            accumulate(n.b, lori::hadamard(g, value(n.a)));
            break;
        case Op::kScale:
            accumulate(n.a, lori::scale(g, n.c));
            break;
        case Op::kTranspose:
            accumulate(n.a, lori::transpose(g));
            break;
        case Op::kRelu: {
            const Matrix& x = value(n.a);
            Matrix gx = g;
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (x[i] <= 0.0) gx[i] = 0.0;
            }
            accumulate(n.a, std::move(gx));
            break;
        }
        case Op::kSoftmaxRows: {
            const Matrix& y = n.value;
            Matrix gx(y.rows(), y.cols());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    gx(i, j) = y(i, j) * (g(i, j) - dot);
                }
            }
            accumulate(n.a, std::move(gx));
            break;
        }
        case Op::kMeanRows: {
            const Matrix& x = value(n.a);
            Matrix gx(x.rows(), x.cols());
            const double inv = 1.0 / static_cast<double>(x.rows());
            for (std::size_t i = 0; i < x.rows(); ++i)
                for (std::size_t j = 0; j < x.cols(); ++j) gx(i, j) = g(0, j) * inv;
            accumulate(n.a, std::move(gx));
            break;
        }
        case Op::kMse: {
            const Matrix& p = value(n.a);
            const Matrix& t = value(n.b);
            const double c = 2.0 * g(0, 0) / static_cast<double>(p.size());
            Matrix gp(p.rows(), p.cols());
            Matrix gt(p.rows(), p.cols());
            for (std::size_t i = 0; i < p.size(); ++i) {
                gp[i] = c * (p[i] - t[i]);
                gt[i] = -gp[i];
            }
            accumulate(n.a, std::move(gp));
            accumulate(n.b, std::move(gt));
            break;
        }
        case Op::kCrossEntropy: {
            const Matrix& x = value(n.a);
            Matrix gx(x.rows(), x.cols());
            const double c = g(0, 0) / static_cast<double>(x.rows());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                double mx = x(i, 0);
                for (std::size_t j = 1; j < n.n_classes; ++j) mx = std::max(mx, x(i, j));
                double z = 0.0;
                for (std::size_t j = 0; j < n.n_classes; ++j) z += std::exp(x(i, j) - mx);
                for (std::size_t j = 0; j < n.n_classes; ++j) {
                    const double p = std::exp(x(i, j) - mx) / z;
                    const double onehot = (static_cast<std::size_t>(n.labels[i]) == j) ? 1.0 : 0.0;
                    gx(i, j) = c * (p - onehot);
                }
            }
            accumulate(n.a, std::move(gx));
            break;
        }
        }
    }

    std::unordered_map<NodeId, Matrix> grads;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op != Op::kLeaf) continue;
        if (live[i]) {
            grads.emplace(static_cast<NodeId>(i), std::move(adj[i]));
        } else {
            grads.emplace(static_cast<NodeId>(i),
                          Matrix(nodes_[i].value.rows(), nodes_[i].value.cols()));
        }
    }
    return grads;
}

} // namespace lori
