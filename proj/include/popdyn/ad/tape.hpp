#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "popdyn/ad/dual.hpp"
#include "popdyn/util/errors.hpp"

namespace popdyn::ad {

// Reverse-mode tape over dense row-major blocks. Values are computed
// eagerly as nodes are recorded; backward() then accumulates adjoints in
// reverse recording order, which respects the DAG because parents always
// precede their consumers. Instantiating with S = Dual turns one backward
// sweep into a Hessian-vector product (forward-over-reverse).
//
// Node storage lives in a per-thread arena that is recycled between tapes;
// a tape owns the arena for its lifetime, and a second concurrently live
// tape on the same thread transparently falls back to private storage.
template <typename S>
class Tape {
public:
    using NodeId = int;

    enum class Op : unsigned char {
        input,
        constant,
        add,
        mul,
        matmul,
        affine,
        tanh_op,
        square,
        exp_op,
        log_op,
        sum,
        mean
    };

    static const char* op_name(Op op) {
        switch (op) {
            case Op::input: return "input";
            case Op::constant: return "constant";
            case Op::add: return "add";
            case Op::mul: return "mul";
            case Op::matmul: return "matmul";
            case Op::affine: return "affine";
            case Op::tanh_op: return "tanh";
            case Op::square: return "square";
            case Op::exp_op: return "exp";
            case Op::log_op: return "log";
            case Op::sum: return "sum";
            case Op::mean: return "mean";
        }
        return "?";
    }

    Tape() {
        Arena& shared = arena_slot();
        if (shared.in_use) {
            owned_ = new Arena;
            arena_ = owned_;
        } else {
            shared.in_use = true;
            arena_ = &shared;
        }
        arena_->nodes.clear();
        arena_->values.clear();
        arena_->adjoints.clear();
    }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    ~Tape() {
        if (owned_) {
            delete owned_;
        } else {
            arena_->in_use = false;
        }
    }

    NodeId input(std::span<const double> values, std::size_t rows, std::size_t cols,
                 std::span<const double> tangent = {}) {
        check_shape(values.size(), rows, cols, "input");
        const NodeId id = new_node(Op::input, rows, cols, -1, -1, -1);
        S* buf = value_ptr(id);
        for (std::size_t i = 0; i < values.size(); ++i)
            buf[i] = make_scalar<S>(values[i], tangent.empty() ? 0.0 : tangent[i]);
        finish(id);
        return id;
    }

    NodeId constant(std::span<const double> values, std::size_t rows, std::size_t cols) {
        check_shape(values.size(), rows, cols, "constant");
        const NodeId id = new_node(Op::constant, rows, cols, -1, -1, -1);
        S* buf = value_ptr(id);
        for (std::size_t i = 0; i < values.size(); ++i) buf[i] = make_scalar<S>(values[i], 0.0);
        finish(id);
        return id;
    }

    NodeId scalar_constant(double v) { return constant(std::span<const double>(&v, 1), 1, 1); }

    // elementwise with 1x1 broadcast on either side
    NodeId add(NodeId a, NodeId b) { return binary(Op::add, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::mul, a, b); }

    NodeId matmul(NodeId a, NodeId b) {
        if (node(a).cols != node(b).rows) throw DataError("Tape::matmul: inner dimensions disagree");
        const std::size_t m = node(a).rows, k = node(a).cols, n = node(b).cols;
        const NodeId id = new_node(Op::matmul, m, n, a, b, -1);
        S* out = value_ptr(id);
        const S* va = value_ptr(a);
        const S* vb = value_ptr(b);
        for (std::size_t i = 0; i < m; ++i) {
            S* orow = out + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] = S{};
            for (std::size_t p = 0; p < k; ++p) {
                const S aip = va[i * k + p];
                const S* brow = vb + p * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
        }
        finish(id);
        return id;
    }

    // out[n x h] = X W^T + 1 b^T with W: h x in, b: h x 1, X: n x in
    NodeId affine(NodeId w, NodeId b, NodeId x) {
        if (node(b).cols != 1 || node(b).rows != node(w).rows)
            throw DataError("Tape::affine: bias must be (rows(W) x 1)");
        if (node(x).cols != node(w).cols) throw DataError("Tape::affine: X cols must equal W cols");
        const std::size_t h = node(w).rows, in = node(w).cols, n = node(x).rows;
        const NodeId id = new_node(Op::affine, n, h, w, b, x);
        S* out = value_ptr(id);
        const S* vw = value_ptr(w);
        const S* vb = value_ptr(b);
        const S* vx = value_ptr(x);
        for (std::size_t i = 0; i < n; ++i) {
            const S* xrow = vx + i * in;
            S* orow = out + i * h;
            for (std::size_t j = 0; j < h; ++j) {
                S acc = vb[j];
                const S* wrow = vw + j * in;
                for (std::size_t p = 0; p < in; ++p) acc += wrow[p] * xrow[p];
                orow[j] = acc;
            }
        }
        finish(id);
        return id;
    }

    NodeId tanh_(NodeId a) { return unary(Op::tanh_op, a); }
    NodeId square(NodeId a) { return unary(Op::square, a); }
    NodeId exp_(NodeId a) { return unary(Op::exp_op, a); }
    NodeId log_(NodeId a) { return unary(Op::log_op, a); }

    NodeId sum(NodeId a) { return reduce(Op::sum, a); }
    NodeId mean(NodeId a) { return reduce(Op::mean, a); }

    std::size_t rows(NodeId id) const { return node(id).rows; }
    std::size_t cols(NodeId id) const { return node(id).cols; }

    std::span<const S> value(NodeId id) const {
        return {arena_->values.data() + node(id).offset, node(id).len};
    }

    std::span<const S> adjoint(NodeId id) const {
        return {arena_->adjoints.data() + node(id).offset, node(id).len};
    }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse.
    void backward(NodeId loss) {
        if (node(loss).len != 1) throw DataError("Tape::backward: loss node must be scalar");
        auto& nodes = arena_->nodes;
        arena_->adjoints.assign(arena_->values.size(), S{});
        adjoint_ptr(loss)[0] = make_scalar<S>(1.0, 0.0);

        for (std::size_t idx = nodes.size(); idx-- > 0;) {
            const Node& nd = nodes[idx];
            const S* gout = arena_->adjoints.data() + nd.offset;
            const S* vout = arena_->values.data() + nd.offset;
            switch (nd.op) {
                case Op::input:
                case Op::constant:
                    break;
                case Op::add:
                case Op::mul:
                    backward_binary(nd, gout);
                    break;
                case Op::matmul:
                    backward_matmul(nd, gout);
                    break;
                case Op::affine:
                    backward_affine(nd, gout);
                    break;
                case Op::tanh_op: {
                    S* pa = adjoint_ptr(nd.a);
                    for (std::size_t i = 0; i < nd.len; ++i) {
                        const S t = vout[i];
                        pa[i] += (make_scalar<S>(1.0, 0.0) - t * t) * gout[i];
                    }
                    break;
                }
                case Op::square: {
                    S* pa = adjoint_ptr(nd.a);
                    const S* va = value_ptr(nd.a);
                    const S two = make_scalar<S>(2.0, 0.0);
                    for (std::size_t i = 0; i < nd.len; ++i) pa[i] += two * va[i] * gout[i];
                    break;
                }
                case Op::exp_op: {
                    S* pa = adjoint_ptr(nd.a);
                    for (std::size_t i = 0; i < nd.len; ++i) pa[i] += vout[i] * gout[i];
                    break;
                }
                case Op::log_op: {
                    S* pa = adjoint_ptr(nd.a);
                    const S* va = value_ptr(nd.a);
                    for (std::size_t i = 0; i < nd.len; ++i) pa[i] += gout[i] / va[i];
                    break;
                }
                case Op::sum: {
                    S* pa = adjoint_ptr(nd.a);
                    const S g = gout[0];
                    const std::size_t n = node(nd.a).len;
                    for (std::size_t i = 0; i < n; ++i) pa[i] += g;
                    break;
                }
                case Op::mean: {
                    S* pa = adjoint_ptr(nd.a);
                    const std::size_t n = node(nd.a).len;
                    const S g = gout[0] * make_scalar<S>(1.0 / static_cast<double>(n), 0.0);
                    for (std::size_t i = 0; i < n; ++i) pa[i] += g;
                    break;
                }
            }
        }
    }

private:
    struct Node {
        Op op;
        NodeId a, b, c;
        std::size_t rows, cols;
        std::size_t offset, len;
    };

    struct Arena {
        std::vector<Node> nodes;
        std::vector<S> values;
        std::vector<S> adjoints;
        bool in_use = false;
    };

    static Arena& arena_slot() {
        static thread_local Arena arena;
        return arena;
    }

    Arena* arena_ = nullptr;
    Arena* owned_ = nullptr;

    const Node& node(NodeId id) const { return arena_->nodes[static_cast<std::size_t>(id)]; }
    S* value_ptr(NodeId id) { return arena_->values.data() + node(id).offset; }
    const S* value_ptr(NodeId id) const { return arena_->values.data() + node(id).offset; }
    S* adjoint_ptr(NodeId id) { return arena_->adjoints.data() + node(id).offset; }

    static void check_shape(std::size_t n, std::size_t rows, std::size_t cols, const char* what) {
        if (rows == 0 || cols == 0 || n != rows * cols)
            throw DataError(std::string("Tape::") + what + ": shape does not match data size");
    }

    NodeId new_node(Op op, std::size_t rows, std::size_t cols, NodeId a, NodeId b, NodeId c) {
        const std::size_t offset = arena_->values.size();
        const std::size_t len = rows * cols;
        arena_->values.resize(offset + len);
        arena_->nodes.push_back({op, a, b, c, rows, cols, offset, len});
        return static_cast<NodeId>(arena_->nodes.size() - 1);
    }

    void finish(NodeId id) {
        const S* buf = value_ptr(id);
        const std::size_t n = node(id).len;
        for (std::size_t i = 0; i < n; ++i)
            if (!isfinite(buf[i]))
                throw NumericsError(std::string("Tape: non-finite value in primitive '") +
                                    op_name(node(id).op) + "' (node " + std::to_string(id) + ")");
    }

    NodeId unary(Op op, NodeId a) {
        using std::exp;
        using std::log;
        using std::tanh;
        const std::size_t rows = node(a).rows, cols = node(a).cols;
        const NodeId id = new_node(op, rows, cols, a, -1, -1);
        S* out = value_ptr(id);
        const S* va = value_ptr(a);
        const std::size_t n = rows * cols;
        switch (op) {
            case Op::tanh_op:
                for (std::size_t i = 0; i < n; ++i) out[i] = tanh(va[i]);
                break;
            case Op::square:
                for (std::size_t i = 0; i < n; ++i) out[i] = va[i] * va[i];
                break;
            case Op::exp_op:
                for (std::size_t i = 0; i < n; ++i) out[i] = exp(va[i]);
                break;
            case Op::log_op:
                for (std::size_t i = 0; i < n; ++i) out[i] = log(va[i]);
                break;
            default:
                throw DataError("Tape: bad unary op");
        }
        finish(id);
        return id;
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        const bool a_scalar = node(a).len == 1;
        const bool b_scalar = node(b).len == 1;
        if (!(a_scalar || b_scalar) &&
            (node(a).rows != node(b).rows || node(a).cols != node(b).cols))
            throw DataError(std::string("Tape::") + op_name(op) +
                            ": shapes disagree and neither side is scalar");
        const std::size_t rows = a_scalar ? node(b).rows : node(a).rows;
        const std::size_t cols = a_scalar ? node(b).cols : node(a).cols;
        const NodeId id = new_node(op, rows, cols, a, b, -1);
        S* out = value_ptr(id);
        const S* va = value_ptr(a);
        const S* vb = value_ptr(b);
        const std::size_t n = rows * cols;
        if (op == Op::add) {
            for (std::size_t i = 0; i < n; ++i) out[i] = va[a_scalar ? 0 : i] + vb[b_scalar ? 0 : i];
        } else {
            for (std::size_t i = 0; i < n; ++i) out[i] = va[a_scalar ? 0 : i] * vb[b_scalar ? 0 : i];
        }
        finish(id);
        return id;
    }

    NodeId reduce(Op op, NodeId a) {
        const NodeId id = new_node(op, 1, 1, a, -1, -1);
        const S* va = value_ptr(a);
        const std::size_t n = node(a).len;
        S acc{};
        for (std::size_t i = 0; i < n; ++i) acc += va[i];
        if (op == Op::mean) acc = acc * make_scalar<S>(1.0 / static_cast<double>(n), 0.0);
        value_ptr(id)[0] = acc;
        finish(id);
        return id;
    }

    // add: d a += g, d b += g; mul: d a += g*b, d b += g*a (with broadcast)
    void backward_binary(const Node& nd, const S* gout) {
        S* pa = adjoint_ptr(nd.a);
        S* pb = adjoint_ptr(nd.b);
        const bool a_scalar = node(nd.a).len == 1;
        const bool b_scalar = node(nd.b).len == 1;
        if (nd.op == Op::add) {
            for (std::size_t i = 0; i < nd.len; ++i) {
                pa[a_scalar ? 0 : i] += gout[i];
                pb[b_scalar ? 0 : i] += gout[i];
            }
        } else {
            const S* va = value_ptr(nd.a);
            const S* vb = value_ptr(nd.b);
            for (std::size_t i = 0; i < nd.len; ++i) {
                pa[a_scalar ? 0 : i] += gout[i] * vb[b_scalar ? 0 : i];
                pb[b_scalar ? 0 : i] += gout[i] * va[a_scalar ? 0 : i];
            }
        }
    }

    void backward_matmul(const Node& nd, const S* gout) {
        S* pa = adjoint_ptr(nd.a);
        S* pb = adjoint_ptr(nd.b);
        const S* va = value_ptr(nd.a);
        const S* vb = value_ptr(nd.b);
        const std::size_t m = node(nd.a).rows, k = node(nd.a).cols, n = node(nd.b).cols;
        // dA = G B^T
        for (std::size_t i = 0; i < m; ++i) {
            const S* grow = gout + i * n;
            S* arow = pa + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                S acc{};
                const S* brow = vb + p * n;
                for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                arow[p] += acc;
            }
        }
        // dB = A^T G
        for (std::size_t p = 0; p < k; ++p) {
            S* brow = pb + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const S aip = va[i * k + p];
                const S* grow = gout + i * n;
                for (std::size_t j = 0; j < n; ++j) brow[j] += aip * grow[j];
            }
        }
    }

    void backward_affine(const Node& nd, const S* gout) {
        S* pw = adjoint_ptr(nd.a);
        S* pb = adjoint_ptr(nd.b);
        S* px = adjoint_ptr(nd.c);
        const S* vw = value_ptr(nd.a);
        const S* vx = value_ptr(nd.c);
        const std::size_t h = node(nd.a).rows, in = node(nd.a).cols, n = node(nd.c).rows;
        for (std::size_t i = 0; i < n; ++i) {
            const S* grow = gout + i * h;
            const S* xrow = vx + i * in;
            S* xadj = px + i * in;
            for (std::size_t j = 0; j < h; ++j) {
                const S g = grow[j];
                pb[j] += g;
                const S* wrow = vw + j * in;
                S* wadj = pw + j * in;
                for (std::size_t p = 0; p < in; ++p) {
                    wadj[p] += g * xrow[p];
                    xadj[p] += g * wrow[p];
                }
            }
        }
    }
};

}  // namespace popdyn::ad
