#include "cips/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace cips {

namespace {

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

NodeId Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    evaluated_ = false;
    return nodes_.size() - 1;
}

void Graph::check_id(NodeId id) const {
    if (id >= nodes_.size()) throw std::invalid_argument("Graph: node id out of range");
}

NodeId Graph::input(std::string name, std::size_t rows, std::size_t cols) {
    Node n;
    n.kind = OpKind::Input;
    n.value = Matrix(rows, cols);
    n.name = std::move(name);
    return push(std::move(n));
}

NodeId Graph::param(std::string name, Matrix init) {
    if (params_.count(name)) throw std::invalid_argument("Graph: duplicate parameter " + name);
    Node n;
    n.kind = OpKind::Param;
    n.value = std::move(init);
    n.name = name;
    NodeId id = push(std::move(n));
    params_[name] = id;
    return id;
}

NodeId Graph::constant(Matrix value, std::string name) {
    Node n;
    n.kind = OpKind::Constant;
    n.value = std::move(value);
    n.name = std::move(name);
    return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
    check_id(a);
    check_id(b);
    Node n;
    n.kind = OpKind::MatMul;
    n.inputs = {a, b};
    n.name = "matmul#" + std::to_string(nodes_.size());
    return push(std::move(n));
}

#define CIPS_BINOP(method, opkind)                                  \
    NodeId Graph::method(NodeId a, NodeId b) {                      \
        check_id(a);                                                \
        check_id(b);                                                \
        Node n;                                                     \
        n.kind = OpKind::opkind;                                    \
        n.inputs = {a, b};                                          \
        n.name = #method "#" + std::to_string(nodes_.size());       \
        return push(std::move(n));                                  \
    }

CIPS_BINOP(add, Add)
CIPS_BINOP(add_row, AddRow)
CIPS_BINOP(sub, Sub)
CIPS_BINOP(mul, Mul)
CIPS_BINOP(div, Div)
#undef CIPS_BINOP

#define CIPS_UNOP(method, opkind)                                   \
    NodeId Graph::method(NodeId x) {                                \
        check_id(x);                                                \
        Node n;                                                     \
        n.kind = OpKind::opkind;                                    \
        n.inputs = {x};                                             \
        n.name = #method "#" + std::to_string(nodes_.size());       \
        return push(std::move(n));                                  \
    }

CIPS_UNOP(softplus, Softplus)
CIPS_UNOP(elu, Elu)
CIPS_UNOP(sigmoid, Sigmoid)
CIPS_UNOP(exp, Exp)
CIPS_UNOP(log, Log)
CIPS_UNOP(sqrt, Sqrt)
CIPS_UNOP(square, Square)
CIPS_UNOP(sum, Sum)
CIPS_UNOP(logsumexp_row, LogSumExpRow)
#undef CIPS_UNOP

NodeId Graph::affine(NodeId x, double a, double b) {
    check_id(x);
    Node n;
    n.kind = OpKind::Affine;
    n.inputs = {x};
    n.a = a;
    n.b = b;
    n.name = "affine#" + std::to_string(nodes_.size());
    return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("Graph::concat: empty");
    for (NodeId p : parts) check_id(p);
    Node n;
    n.kind = OpKind::Concat;
    n.inputs = parts;
    n.name = "concat#" + std::to_string(nodes_.size());
    return push(std::move(n));
}

void Graph::set_loss(NodeId id) {
    check_id(id);
    loss_ = id;
}

void Graph::set_value(NodeId id, Matrix value) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.kind != OpKind::Input && n.kind != OpKind::Param && n.kind != OpKind::Constant)
        throw std::invalid_argument("Graph::set_value: node is not a leaf");
    n.value = std::move(value);
    evaluated_ = false;
}

const Matrix& Graph::value(NodeId id) const {
    check_id(id);
    return nodes_[id].value;
}

const Matrix& Graph::gradient(NodeId id) const {
    check_id(id);
    return nodes_[id].grad;
}

void Graph::eval_node(std::size_t i) {
    Node& n = nodes_[i];
    auto& in = n.inputs;
    auto val = [&](NodeId id) -> const Matrix& { return nodes_[id].value; };
    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Param:
        case OpKind::Constant:
            break;
        case OpKind::MatMul:
            n.value = cips::matmul(val(in[0]), val(in[1]));
            break;
        case OpKind::Add:
            n.value = cips::add(val(in[0]), val(in[1]));
            break;
        case OpKind::AddRow:
            n.value = cips::add_row(val(in[0]), val(in[1]));
            break;
        case OpKind::Sub:
            n.value = cips::sub(val(in[0]), val(in[1]));
            break;
        case OpKind::Mul:
            n.value = cips::hadamard(val(in[0]), val(in[1]));
            break;
        case OpKind::Div: {
            const Matrix& a = val(in[0]);
            const Matrix& b = val(in[1]);
            if (!a.same_shape(b)) throw std::invalid_argument("Graph div: shape mismatch");
            n.value = a;
            for (std::size_t k = 0; k < a.size(); ++k) n.value.data[k] = a.data[k] / b.data[k];
            break;
        }
        case OpKind::Affine: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = n.a * v + n.b;
            break;
        }
        case OpKind::Softplus: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = stable_softplus(v);
            break;
        }
        case OpKind::Elu: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = v > 0.0 ? v : std::expm1(v);
            break;
        }
        case OpKind::Sigmoid: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = stable_sigmoid(v);
            break;
        }
        case OpKind::Exp: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = std::exp(v);
            break;
        }
        case OpKind::Log: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = std::log(v);
            break;
        }
        case OpKind::Sqrt: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = std::sqrt(v);
            break;
        }
        case OpKind::Square: {
            n.value = val(in[0]);
            for (double& v : n.value.data) v = v * v;
            break;
        }
        case OpKind::Sum: {
            n.value = Matrix(1, 1);
            n.value(0, 0) = sum_all(val(in[0]));
            break;
        }
        case OpKind::Concat: {
            std::vector<Matrix> parts;
            parts.reserve(in.size());
            for (NodeId id : in) parts.push_back(val(id));
            n.value = hconcat(parts);
            break;
        }
        case OpKind::LogSumExpRow: {
            const Matrix& x = val(in[0]);
            n.value = Matrix(x.rows, 1);
            for (std::size_t r = 0; r < x.rows; ++r) {
                double mx = x(r, 0);
                for (std::size_t c = 1; c < x.cols; ++c) mx = std::max(mx, x(r, c));
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols; ++c) s += std::exp(x(r, c) - mx);
                n.value(r, 0) = mx + std::log(s);
            }
            break;
        }
    }
    if (!all_finite(n.value))
        throw std::runtime_error("Graph: non-finite value at node '" + n.name + "' (id " +
                                 std::to_string(i) + ")");
}

void Graph::forward() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) eval_node(i);
    evaluated_ = true;
}

void Graph::backprop_node(std::size_t i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) return;  // unreachable from loss
    const Matrix& g = n.grad;
    auto& in = n.inputs;
    auto val = [&](NodeId id) -> const Matrix& { return nodes_[id].value; };
    auto acc = [&](NodeId id, const Matrix& delta) {
        Matrix& tg = nodes_[id].grad;
        if (tg.size() == 0) {
            tg = delta;
        } else {
            for (std::size_t k = 0; k < tg.size(); ++k) tg.data[k] += delta.data[k];
        }
    };
    switch (n.kind) {
        case OpKind::Input:
        case OpKind::Param:
        case OpKind::Constant:
            break;
        case OpKind::MatMul:
            acc(in[0], cips::matmul(g, transpose(val(in[1]))));
            acc(in[1], cips::matmul(transpose(val(in[0])), g));
            break;
        case OpKind::Add:
            acc(in[0], g);
            acc(in[1], g);
            break;
        case OpKind::AddRow: {
            acc(in[0], g);
            Matrix rg(1, g.cols);
            for (std::size_t r = 0; r < g.rows; ++r)
                for (std::size_t c = 0; c < g.cols; ++c) rg(0, c) += g(r, c);
            acc(in[1], rg);
            break;
        }
        case OpKind::Sub:
            acc(in[0], g);
            acc(in[1], scale(g, -1.0));
            break;
        case OpKind::Mul:
            acc(in[0], hadamard(g, val(in[1])));
            acc(in[1], hadamard(g, val(in[0])));
            break;
        case OpKind::Div: {
            const Matrix& a = val(in[0]);
            const Matrix& b = val(in[1]);
            Matrix da = g, db = g;
            for (std::size_t k = 0; k < g.size(); ++k) {
                da.data[k] = g.data[k] / b.data[k];
                db.data[k] = -g.data[k] * a.data[k] / (b.data[k] * b.data[k]);
            }
            acc(in[0], da);
            acc(in[1], db);
            break;
        }
        case OpKind::Affine:
            acc(in[0], scale(g, n.a));
            break;
        case OpKind::Softplus: {
            Matrix d = g;
            const Matrix& x = val(in[0]);
            for (std::size_t k = 0; k < d.size(); ++k)
                d.data[k] *= stable_sigmoid(x.data[k]);
            acc(in[0], d);
            break;
        }
        case OpKind::Elu: {
            Matrix d = g;
            const Matrix& x = val(in[0]);
            for (std::size_t k = 0; k < d.size(); ++k)
                d.data[k] *= x.data[k] > 0.0 ? 1.0 : std::exp(x.data[k]);
            acc(in[0], d);
            break;
        }
        case OpKind::Sigmoid: {
            Matrix d = g;
            for (std::size_t k = 0; k < d.size(); ++k) {
                double s = n.value.data[k];
                d.data[k] *= s * (1.0 - s);
            }
            acc(in[0], d);
            break;
        }
        case OpKind::Exp:
            acc(in[0], hadamard(g, n.value));
            break;
        case OpKind::Log: {
            Matrix d = g;
            const Matrix& x = val(in[0]);
            for (std::size_t k = 0; k < d.size(); ++k) d.data[k] /= x.data[k];
            acc(in[0], d);
            break;
        }
        case OpKind::Sqrt: {
            Matrix d = g;
            for (std::size_t k = 0; k < d.size(); ++k) d.data[k] *= 0.5 / n.value.data[k];
            acc(in[0], d);
            break;
        }
        case OpKind::Square: {
            Matrix d = g;
            const Matrix& x = val(in[0]);
            for (std::size_t k = 0; k < d.size(); ++k) d.data[k] *= 2.0 * x.data[k];
            acc(in[0], d);
            break;
        }
        case OpKind::Sum: {
            const Matrix& x = val(in[0]);
            acc(in[0], Matrix(x.rows, x.cols, g(0, 0)));
            break;
        }
        case OpKind::Concat: {
            std::size_t off = 0;
            for (NodeId id : in) {
                const Matrix& part = val(id);
                Matrix d(part.rows, part.cols);
                for (std::size_t r = 0; r < part.rows; ++r)
                    for (std::size_t c = 0; c < part.cols; ++c) d(r, c) = g(r, off + c);
                acc(id, d);
                off += part.cols;
            }
            break;
        }
        case OpKind::LogSumExpRow: {
            const Matrix& x = val(in[0]);
            Matrix d(x.rows, x.cols);
            for (std::size_t r = 0; r < x.rows; ++r)
                for (std::size_t c = 0; c < x.cols; ++c)
                    d(r, c) = g(r, 0) * std::exp(x(r, c) - n.value(r, 0));
            acc(in[0], d);
            break;
        }
    }
}

void Graph::backward() {
    if (!evaluated_) throw std::logic_error("Graph::backward before forward");
    if (loss_ >= nodes_.size()) throw std::logic_error("Graph: loss node not set");
    if (nodes_[loss_].value.size() != 1)
        throw std::logic_error("Graph: loss node is not scalar");
    for (Node& n : nodes_) n.grad = Matrix();
    nodes_[loss_].grad = Matrix(1, 1, 1.0);
    for (std::size_t i = nodes_.size(); i-- > 0;) backprop_node(i);
    // parameters untouched by the loss still deserve a defined (zero) gradient
    for (auto& [name, id] : params_) {
        Node& p = nodes_[id];
        if (p.grad.size() == 0) p.grad = Matrix(p.value.rows, p.value.cols);
    }
}

double Graph::forward_backward() {
    forward();
    backward();
    return nodes_[loss_].value(0, 0);
}

std::map<std::string, Matrix> Graph::param_gradients() const {
    std::map<std::string, Matrix> out;
    for (auto& [name, id] : params_) out[name] = nodes_[id].grad;
    return out;
}

}  // namespace cips
