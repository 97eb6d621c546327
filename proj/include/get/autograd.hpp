#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "get/tensor.hpp"

namespace get {

using VarId = std::int32_t;

namespace detail {

// C += A[m,k] * B[k,n]; call on zeroed output.
inline void mm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
                  std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// dA[m,k] += dC[m,n] * B[k,n]^T. Materializes B^T into a thread-local
// scratch so the inner loop runs the same broadcast-accumulate pattern as
// mm_nn; the naive dot-product form is a serial reduction the compiler
// leaves scalar.
inline void mm_nt_acc(const double* dc, const double* b, double* da, std::int64_t m,
                      std::int64_t k, std::int64_t n) {
    thread_local std::vector<double> scratch;
    scratch.resize(static_cast<std::size_t>(k * n));
    double* bt = scratch.data();
    for (std::int64_t kk = 0; kk < k; ++kk)
        for (std::int64_t j = 0; j < n; ++j) bt[j * k + kk] = b[kk * n + j];
    for (std::int64_t i = 0; i < m; ++i) {
        const double* dcrow = dc + i * n;
        double* darow = da + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const double dv = dcrow[j];
            const double* btrow = bt + j * k;
            for (std::int64_t kk = 0; kk < k; ++kk) darow[kk] += dv * btrow[kk];
        }
    }
}

// dB[k,n] += A[m,k]^T * dC[m,n]
inline void mm_tn_acc(const double* a, const double* dc, double* db, std::int64_t m,
                      std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* dcrow = dc + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            double* dbrow = db + kk * n;
            for (std::int64_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
        }
    }
}

inline constexpr double kInvSqrt2 = 0.7071067811865475244;
inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace detail

// Expression tape with reverse-mode gradients over the op set the model
// needs. Values are computed eagerly on node creation; backward() walks the
// tape in reverse creation order, which is a valid topological order.
class ExprGraph {
public:
    ExprGraph() { nodes_.reserve(256); }

    enum class Op : std::uint8_t {
        Input,
        Param,
        MatMul,
        Add,
        Mul,
        Scale,
        GatherRows,
        Softmax,
        LayerNorm,
        Gelu,
        Relu,
        Tanh,
        MaskedFill,
        Reshape,
        Transpose,
        WeightedSse,
        Mse,
    };

    VarId input(Tensor value) { return push(Op::Input, std::move(value), -1, -1, -1, false); }

    VarId param(Tensor value) { return push(Op::Param, std::move(value), -1, -1, -1, true); }

    const Tensor& value(VarId id) const { return nodes_[check(id)].val; }

    const Tensor& grad(VarId id) const {
        const Node& n = nodes_[check(id)];
        if (n.grad.data.empty() && n.val.numel() > 0)
            throw NumericalError("gradient not computed for this node");
        return n.grad;
    }

    bool requires_grad(VarId id) const { return nodes_[check(id)].needs_grad; }

    bool has_grad(VarId id) const { return !nodes_[check(id)].grad.data.empty(); }

    // lhs [..., m, k] x rhs [k, n], or [..., m, k] x [..., k, n] with equal
    // leading extents.
    VarId matmul(VarId a, VarId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() < 2 || B.rank() < 2)
            throw ShapeError("matmul: operands must have rank >= 2, got " + A.shape_str() + " and " +
                             B.shape_str());
        const std::int64_t m = A.dim(-2), k = A.dim(-1);
        Tensor out;
        if (B.rank() == 2) {
            if (B.dim(0) != k)
                throw ShapeError("matmul: inner extents differ, lhs " + A.shape_str() + " rhs " +
                                 B.shape_str());
            const std::int64_t n = B.dim(1);
            std::vector<std::int64_t> oshape(A.shape.begin(), A.shape.end() - 1);
            oshape.push_back(n);
            out = Tensor::zeros(oshape);
            detail::mm_nn(A.data.data(), B.data.data(), out.data.data(), A.numel() / k, k, n);
        } else {
            if (A.rank() != B.rank() ||
                !std::equal(A.shape.begin(), A.shape.end() - 2, B.shape.begin()))
                throw ShapeError("matmul: leading extents differ, lhs " + A.shape_str() + " rhs " +
                                 B.shape_str());
            if (B.dim(-2) != k)
                throw ShapeError("matmul: inner extents differ, lhs " + A.shape_str() + " rhs " +
                                 B.shape_str());
            const std::int64_t n = B.dim(-1);
            std::vector<std::int64_t> oshape(A.shape.begin(), A.shape.end() - 1);
            oshape.push_back(n);
            out = Tensor::zeros(oshape);
            const std::int64_t slices = A.numel() / (m * k);
            for (std::int64_t s = 0; s < slices; ++s)
                detail::mm_nn(A.data.data() + s * m * k, B.data.data() + s * k * n,
                              out.data.data() + s * m * n, m, k, n);
        }
        return push(Op::MatMul, std::move(out), a, b);
    }

    VarId add(VarId a, VarId b) { return broadcast_binary(Op::Add, a, b); }
    VarId mul(VarId a, VarId b) { return broadcast_binary(Op::Mul, a, b); }

    VarId scale(VarId a, double factor) {
        Tensor out = value(a);
        for (double& v : out.data) v *= factor;
        VarId id = push(Op::Scale, std::move(out), a);
        nodes_[static_cast<std::size_t>(id)].scalar = factor;
        return id;
    }

    // table [N] or [N, D]; out [M] or [M, D]. Duplicate indices accumulate
    // in the backward scatter.
    VarId gather_rows(VarId table, std::vector<std::int64_t> indices) {
        const Tensor& T = value(table);
        if (T.rank() != 1 && T.rank() != 2)
            throw ShapeError("gather_rows: table must have rank 1 or 2, got " + T.shape_str());
        const std::int64_t n = T.dim(0);
        const std::int64_t d = T.rank() == 2 ? T.dim(1) : 1;
        const std::int64_t m = static_cast<std::int64_t>(indices.size());
        for (std::int64_t idx : indices)
            if (idx < 0 || idx >= n)
                throw ShapeError("gather_rows: index " + std::to_string(idx) +
                                 " out of range for table " + T.shape_str());
        Tensor out = Tensor::zeros(T.rank() == 2 ? std::vector<std::int64_t>{m, d}
                                                 : std::vector<std::int64_t>{m});
        for (std::int64_t i = 0; i < m; ++i)
            std::copy_n(T.data.data() + indices[static_cast<std::size_t>(i)] * d, d,
                        out.data.data() + i * d);
        VarId id = push(Op::GatherRows, std::move(out), table);
        nodes_[static_cast<std::size_t>(id)].indices = std::move(indices);
        return id;
    }

    VarId softmax_lastdim(VarId a) {
        const Tensor& A = value(a);
        if (A.rank() < 1) throw ShapeError("softmax: scalar input");
        const std::int64_t d = A.dim(-1);
        Tensor out = A;
        const std::int64_t rows = A.numel() / d;
        for (std::int64_t r = 0; r < rows; ++r) {
            double* row = out.data.data() + r * d;
            double mx = row[0];
            for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                row[j] = std::exp(row[j] - mx);
                sum += row[j];
            }
            for (std::int64_t j = 0; j < d; ++j) row[j] /= sum;
        }
        return push(Op::Softmax, std::move(out), a);
    }

    // Normalization over the last axis with learned gain and bias of shape
    // [last].
    VarId layer_norm(VarId x, VarId gain, VarId bias, double eps = 1e-5) {
        const Tensor& X = value(x);
        const Tensor& G = value(gain);
        const Tensor& B = value(bias);
        const std::int64_t d = X.dim(-1);
        if (G.rank() != 1 || B.rank() != 1 || G.dim(0) != d || B.dim(0) != d)
            throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                             G.shape_str() + " and " + B.shape_str());
        const std::int64_t rows = X.numel() / d;
        Tensor out = Tensor::zeros(X.shape);
        Tensor xhat = Tensor::zeros(X.shape);
        Tensor rstd = Tensor::zeros({rows});
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* xr = X.data.data() + r * d;
            double mean = 0.0;
            for (std::int64_t j = 0; j < d; ++j) mean += xr[j];
            mean /= static_cast<double>(d);
            double var = 0.0;
            for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
            var /= static_cast<double>(d);
            const double rs = 1.0 / std::sqrt(var + eps);
            rstd.at(r) = rs;
            double* hr = xhat.data.data() + r * d;
            double* or_ = out.data.data() + r * d;
            for (std::int64_t j = 0; j < d; ++j) {
                hr[j] = (xr[j] - mean) * rs;
                or_[j] = hr[j] * G.data[static_cast<std::size_t>(j)] +
                         B.data[static_cast<std::size_t>(j)];
            }
        }
        VarId id = push(Op::LayerNorm, std::move(out), x, gain, bias);
        nodes_[static_cast<std::size_t>(id)].saved1 = std::move(xhat);
        nodes_[static_cast<std::size_t>(id)].saved2 = std::move(rstd);
        return id;
    }

    VarId gelu(VarId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * detail::kInvSqrt2));
        return push(Op::Gelu, std::move(out), a);
    }

    VarId relu(VarId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        return push(Op::Relu, std::move(out), a);
    }

    VarId tanh_act(VarId a) {
        Tensor out = value(a);
        for (double& v : out.data) v = std::tanh(v);
        return push(Op::Tanh, std::move(out), a);
    }

    // out = keep != 0 ? a : fill_value; keep is a constant with a's shape.
    VarId masked_fill(VarId a, Tensor keep, double fill_value) {
        const Tensor& A = value(a);
        if (!A.same_shape(keep))
            throw ShapeError("masked_fill: mask " + keep.shape_str() + " does not match input " +
                             A.shape_str());
        Tensor out = A;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            if (keep.data[i] == 0.0) out.data[i] = fill_value;
        VarId id = push(Op::MaskedFill, std::move(out), a);
        nodes_[static_cast<std::size_t>(id)].saved1 = std::move(keep);
        return id;
    }

    VarId reshape(VarId a, std::vector<std::int64_t> shape) {
        const Tensor& A = value(a);
        if (Tensor::count(shape) != A.numel())
            throw ShapeError("reshape: cannot view " + A.shape_str() + " as " +
                             Tensor::zeros(shape).shape_str());
        Tensor out;
        out.shape = std::move(shape);
        out.data = A.data;
        return push(Op::Reshape, std::move(out), a);
    }

    VarId transpose(VarId a, std::vector<std::int64_t> perm) {
        const Tensor& A = value(a);
        if (static_cast<std::int64_t>(perm.size()) != A.rank())
            throw ShapeError("transpose: permutation rank mismatch for " + A.shape_str());
        Tensor out = permute(A, perm);
        VarId id = push(Op::Transpose, std::move(out), a);
        nodes_[static_cast<std::size_t>(id)].perm = std::move(perm);
        return id;
    }

    // Scalar sum of weights * (pred - target)^2. Weights and target are
    // constants; per-element weights carry the masking and averaging
    // convention.
    VarId weighted_sse(VarId pred, Tensor target, Tensor weights) {
        const Tensor& P = value(pred);
        if (!P.same_shape(target) || !P.same_shape(weights))
            throw ShapeError("weighted_sse: target/weights must match pred " + P.shape_str());
        double acc = 0.0;
        for (std::size_t i = 0; i < P.data.size(); ++i) {
            const double diff = P.data[i] - target.data[i];
            acc += weights.data[i] * diff * diff;
        }
        VarId id = push(Op::WeightedSse, Tensor::scalar(acc), pred);
        nodes_[static_cast<std::size_t>(id)].saved1 = std::move(target);
        nodes_[static_cast<std::size_t>(id)].saved2 = std::move(weights);
        return id;
    }

    // Mean over all elements of (pred - target)^2.
    VarId mse(VarId pred, Tensor target) {
        const Tensor& P = value(pred);
        if (!P.same_shape(target))
            throw ShapeError("mse: target " + target.shape_str() + " does not match pred " +
                             P.shape_str());
        double acc = 0.0;
        for (std::size_t i = 0; i < P.data.size(); ++i) {
            const double diff = P.data[i] - target.data[i];
            acc += diff * diff;
        }
        acc /= static_cast<double>(std::max<std::int64_t>(1, P.numel()));
        VarId id = push(Op::Mse, Tensor::scalar(acc), pred);
        nodes_[static_cast<std::size_t>(id)].saved1 = std::move(target);
        return id;
    }

    void backward(VarId root) {
        Node& r = nodes_[check(root)];
        if (r.val.numel() != 1)
            throw ShapeError("backward: root must be scalar, got " + r.val.shape_str());
        ensure_grad(root).data[0] = 1.0;
        for (std::int32_t id = root; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (!n.needs_grad || n.grad.data.empty()) continue;
            backprop(n);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Op op;
        VarId a = -1, b = -1, c = -1;
        bool needs_grad = false;
        double scalar = 0.0;
        Tensor val;
        Tensor grad;
        Tensor saved1, saved2;
        std::vector<std::int64_t> indices;
        std::vector<std::int64_t> perm;
    };

    std::vector<Node> nodes_;

    std::size_t check(VarId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw ShapeError("invalid expression node id");
        return static_cast<std::size_t>(id);
    }

    VarId push(Op op, Tensor val, VarId a = -1, VarId b = -1, VarId c = -1, bool leaf_grad = false) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.c = c;
        n.val = std::move(val);
        n.needs_grad = leaf_grad || (a >= 0 && nodes_[check(a)].needs_grad) ||
                       (b >= 0 && nodes_[check(b)].needs_grad) ||
                       (c >= 0 && nodes_[check(c)].needs_grad);
        nodes_.push_back(std::move(n));
        return static_cast<VarId>(nodes_.size() - 1);
    }

    Tensor& ensure_grad(VarId id) {
        Node& n = nodes_[check(id)];
        if (n.grad.data.empty()) n.grad = Tensor::zeros(n.val.shape);
        return n.grad;
    }

    void accumulate(VarId id, const Tensor& g) {
        if (id < 0) return;
        Node& n = nodes_[check(id)];
        if (!n.needs_grad) return;
        Tensor& dst = ensure_grad(id);
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
    }

    static std::vector<std::int64_t> broadcast_shape(const Tensor& a, const Tensor& b,
                                                     const char* opname) {
        const std::int64_t rank = std::max(a.rank(), b.rank());
        std::vector<std::int64_t> out(static_cast<std::size_t>(rank), 1);
        for (std::int64_t i = 0; i < rank; ++i) {
            const std::int64_t da = i < a.rank() ? a.shape[static_cast<std::size_t>(a.rank() - 1 - i)] : 1;
            const std::int64_t db = i < b.rank() ? b.shape[static_cast<std::size_t>(b.rank() - 1 - i)] : 1;
            if (da != db && da != 1 && db != 1)
                throw ShapeError(std::string(opname) + ": cannot broadcast " + a.shape_str() +
                                 " with " + b.shape_str());
            out[static_cast<std::size_t>(rank - 1 - i)] = std::max(da, db);
        }
        return out;
    }

    // Strides into `t` aligned to an output of shape `oshape`; broadcast axes
    // get stride zero.
    static std::vector<std::int64_t> aligned_strides(const Tensor& t,
                                                     const std::vector<std::int64_t>& oshape) {
        const std::int64_t orank = static_cast<std::int64_t>(oshape.size());
        std::vector<std::int64_t> tstrides = row_major_strides(t.shape);
        std::vector<std::int64_t> out(static_cast<std::size_t>(orank), 0);
        for (std::int64_t i = 0; i < t.rank(); ++i) {
            const std::size_t oi = static_cast<std::size_t>(orank - t.rank() + i);
            out[oi] = t.shape[static_cast<std::size_t>(i)] == 1 ? 0 : tstrides[static_cast<std::size_t>(i)];
        }
        return out;
    }

    VarId broadcast_binary(Op op, VarId a, VarId b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        const char* name = op == Op::Add ? "add" : "mul";
        if (A.same_shape(B)) {
            Tensor out = A;
            if (op == Op::Add)
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
            else
                for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
            return push(op, std::move(out), a, b);
        }
        std::vector<std::int64_t> oshape = broadcast_shape(A, B, name);
        Tensor out = Tensor::zeros(oshape);
        const std::vector<std::int64_t> sa = aligned_strides(A, oshape);
        const std::vector<std::int64_t> sb = aligned_strides(B, oshape);
        std::vector<std::int64_t> idx(oshape.size(), 0);
        std::int64_t fa = 0, fb = 0;
        for (std::int64_t o = 0; o < out.numel(); ++o) {
            out.data[static_cast<std::size_t>(o)] =
                op == Op::Add ? A.data[static_cast<std::size_t>(fa)] + B.data[static_cast<std::size_t>(fb)]
                              : A.data[static_cast<std::size_t>(fa)] * B.data[static_cast<std::size_t>(fb)];
            // odometer increment
            for (std::size_t d = oshape.size(); d-- > 0;) {
                idx[d] += 1;
                fa += sa[d];
                fb += sb[d];
                if (idx[d] < oshape[d]) break;
                fa -= sa[d] * idx[d];
                fb -= sb[d] * idx[d];
                idx[d] = 0;
            }
        }
        return push(op, std::move(out), a, b);
    }

    // Scatter g (shaped like out) into a gradient for operand `t`, summing
    // over broadcast axes.
    static void reduce_into(const Tensor& g, const Tensor& operand, Tensor& dst,
                            const Tensor* other, bool multiply_other) {
        const std::vector<std::int64_t>& oshape = g.shape;
        const std::vector<std::int64_t> st = aligned_strides(operand, oshape);
        std::vector<std::int64_t> so;
        if (multiply_other) so = aligned_strides(*other, oshape);
        std::vector<std::int64_t> idx(oshape.size(), 0);
        std::int64_t ft = 0, fo = 0;
        for (std::int64_t o = 0; o < g.numel(); ++o) {
            double v = g.data[static_cast<std::size_t>(o)];
            if (multiply_other) v *= other->data[static_cast<std::size_t>(fo)];
            dst.data[static_cast<std::size_t>(ft)] += v;
            for (std::size_t d = oshape.size(); d-- > 0;) {
                idx[d] += 1;
                ft += st[d];
                if (multiply_other) fo += so[d];
                if (idx[d] < oshape[d]) break;
                ft -= st[d] * idx[d];
                if (multiply_other) fo -= so[d] * idx[d];
                idx[d] = 0;
            }
        }
    }

    static Tensor permute(const Tensor& in, const std::vector<std::int64_t>& perm) {
        std::vector<std::int64_t> oshape(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i)
            oshape[i] = in.shape[static_cast<std::size_t>(perm[i])];
        Tensor out = Tensor::zeros(oshape);
        const std::vector<std::int64_t> istrides = row_major_strides(in.shape);
        std::vector<std::int64_t> pstrides(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i)
            pstrides[i] = istrides[static_cast<std::size_t>(perm[i])];
        std::vector<std::int64_t> idx(oshape.size(), 0);
        std::int64_t fin = 0;
        for (std::int64_t o = 0; o < out.numel(); ++o) {
            out.data[static_cast<std::size_t>(o)] = in.data[static_cast<std::size_t>(fin)];
            for (std::size_t d = oshape.size(); d-- > 0;) {
                idx[d] += 1;
                fin += pstrides[d];
                if (idx[d] < oshape[d]) break;
                fin -= pstrides[d] * idx[d];
                idx[d] = 0;
            }
        }
        return out;
    }

    void backprop(Node& n) {
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::Input:
            case Op::Param:
                break;
            case Op::MatMul: {
                const Tensor& A = nodes_[check(n.a)].val;
                const Tensor& B = nodes_[check(n.b)].val;
                const std::int64_t m = A.dim(-2), k = A.dim(-1);
                if (B.rank() == 2) {
                    const std::int64_t n_ = B.dim(1);
                    const std::int64_t rows = A.numel() / k;
                    if (nodes_[check(n.a)].needs_grad) {
                        Tensor& da = ensure_grad(n.a);
                        detail::mm_nt_acc(g.data.data(), B.data.data(), da.data.data(), rows, k, n_);
                    }
                    if (nodes_[check(n.b)].needs_grad) {
                        Tensor& db = ensure_grad(n.b);
                        detail::mm_tn_acc(A.data.data(), g.data.data(), db.data.data(), rows, k, n_);
                    }
                } else {
                    const std::int64_t n_ = B.dim(-1);
                    const std::int64_t slices = A.numel() / (m * k);
                    for (std::int64_t s = 0; s < slices; ++s) {
                        if (nodes_[check(n.a)].needs_grad)
                            detail::mm_nt_acc(g.data.data() + s * m * n_, B.data.data() + s * k * n_,
                                              ensure_grad(n.a).data.data() + s * m * k, m, k, n_);
                        if (nodes_[check(n.b)].needs_grad)
                            detail::mm_tn_acc(A.data.data() + s * m * k, g.data.data() + s * m * n_,
                                              ensure_grad(n.b).data.data() + s * k * n_, m, k, n_);
                    }
                }
                break;
            }
            case Op::Add: {
                for (VarId side : {n.a, n.b}) {
                    Node& op = nodes_[check(side)];
                    if (!op.needs_grad) continue;
                    Tensor& dst = ensure_grad(side);
                    if (op.val.same_shape(g))
                        for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
                    else
                        reduce_into(g, op.val, dst, nullptr, false);
                }
                break;
            }
            case Op::Mul: {
                const Tensor& A = nodes_[check(n.a)].val;
                const Tensor& B = nodes_[check(n.b)].val;
                if (nodes_[check(n.a)].needs_grad) {
                    Tensor& da = ensure_grad(n.a);
                    if (A.same_shape(g) && B.same_shape(g))
                        for (std::size_t i = 0; i < g.data.size(); ++i)
                            da.data[i] += g.data[i] * B.data[i];
                    else
                        reduce_into(g, A, da, &B, true);
                }
                if (nodes_[check(n.b)].needs_grad) {
                    Tensor& db = ensure_grad(n.b);
                    if (A.same_shape(g) && B.same_shape(g))
                        for (std::size_t i = 0; i < g.data.size(); ++i)
                            db.data[i] += g.data[i] * A.data[i];
                    else
                        reduce_into(g, B, db, &A, true);
                }
                break;
            }
            case Op::Scale: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i] * n.scalar;
                break;
            }
            case Op::GatherRows: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& dt = ensure_grad(n.a);
                const std::int64_t d = dt.rank() == 2 ? dt.dim(1) : 1;
                for (std::size_t i = 0; i < n.indices.size(); ++i) {
                    const std::int64_t row = n.indices[i];
                    for (std::int64_t j = 0; j < d; ++j)
                        dt.data[static_cast<std::size_t>(row * d + j)] +=
                            g.data[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
                }
                break;
            }
            case Op::Softmax: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& da = ensure_grad(n.a);
                const std::int64_t d = n.val.dim(-1);
                const std::int64_t rows = n.val.numel() / d;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* y = n.val.data.data() + r * d;
                    const double* gr = g.data.data() + r * d;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * y[j];
                    double* dr = da.data.data() + r * d;
                    for (std::int64_t j = 0; j < d; ++j) dr[j] += (gr[j] - dot) * y[j];
                }
                break;
            }
            case Op::LayerNorm: {
                const Tensor& xhat = n.saved1;
                const Tensor& rstd = n.saved2;
                const Tensor& G = nodes_[check(n.b)].val;
                const std::int64_t d = n.val.dim(-1);
                const std::int64_t rows = n.val.numel() / d;
                const bool need_x = nodes_[check(n.a)].needs_grad;
                const bool need_g = nodes_[check(n.b)].needs_grad;
                const bool need_b = nodes_[check(n.c)].needs_grad;
                Tensor* dx = need_x ? &ensure_grad(n.a) : nullptr;
                Tensor* dg = need_g ? &ensure_grad(n.b) : nullptr;
                Tensor* db = need_b ? &ensure_grad(n.c) : nullptr;
                for (std::int64_t r = 0; r < rows; ++r) {
                    const double* h = xhat.data.data() + r * d;
                    const double* gr = g.data.data() + r * d;
                    if (need_g || need_b) {
                        for (std::int64_t j = 0; j < d; ++j) {
                            if (need_g) dg->data[static_cast<std::size_t>(j)] += gr[j] * h[j];
                            if (need_b) db->data[static_cast<std::size_t>(j)] += gr[j];
                        }
                    }
                    if (need_x) {
                        double mean_dh = 0.0, mean_dh_h = 0.0;
                        for (std::int64_t j = 0; j < d; ++j) {
                            const double dh = gr[j] * G.data[static_cast<std::size_t>(j)];
                            mean_dh += dh;
                            mean_dh_h += dh * h[j];
                        }
                        mean_dh /= static_cast<double>(d);
                        mean_dh_h /= static_cast<double>(d);
                        double* dr = dx->data.data() + r * d;
                        const double rs = rstd.at(r);
                        for (std::int64_t j = 0; j < d; ++j) {
                            const double dh = gr[j] * G.data[static_cast<std::size_t>(j)];
                            dr[j] += rs * (dh - mean_dh - h[j] * mean_dh_h);
                        }
                    }
                }
                break;
            }
            case Op::Gelu: {
                if (!nodes_[check(n.a)].needs_grad) break;
                const Tensor& X = nodes_[check(n.a)].val;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    const double x = X.data[i];
                    const double cdf = 0.5 * (1.0 + std::erf(x * detail::kInvSqrt2));
                    const double pdf = detail::kInvSqrt2Pi * std::exp(-0.5 * x * x);
                    da.data[i] += g.data[i] * (cdf + x * pdf);
                }
                break;
            }
            case Op::Relu: {
                if (!nodes_[check(n.a)].needs_grad) break;
                const Tensor& X = nodes_[check(n.a)].val;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (X.data[i] > 0.0) da.data[i] += g.data[i];
                break;
            }
            case Op::Tanh: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    const double y = n.val.data[i];
                    da.data[i] += g.data[i] * (1.0 - y * y);
                }
                break;
            }
            case Op::MaskedFill: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (n.saved1.data[i] != 0.0) da.data[i] += g.data[i];
                break;
            }
            case Op::Reshape: {
                if (!nodes_[check(n.a)].needs_grad) break;
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < g.data.size(); ++i) da.data[i] += g.data[i];
                break;
            }
            case Op::Transpose: {
                if (!nodes_[check(n.a)].needs_grad) break;
                std::vector<std::int64_t> inv(n.perm.size());
                for (std::size_t i = 0; i < n.perm.size(); ++i)
                    inv[static_cast<std::size_t>(n.perm[i])] = static_cast<std::int64_t>(i);
                Tensor gt = permute(g, inv);
                Tensor& da = ensure_grad(n.a);
                for (std::size_t i = 0; i < gt.data.size(); ++i) da.data[i] += gt.data[i];
                break;
            }
            case Op::WeightedSse: {
                if (!nodes_[check(n.a)].needs_grad) break;
                const Tensor& P = nodes_[check(n.a)].val;
                Tensor& da = ensure_grad(n.a);
                const double gs = g.data[0];
                for (std::size_t i = 0; i < P.data.size(); ++i)
                    da.data[i] += gs * 2.0 * n.saved2.data[i] * (P.data[i] - n.saved1.data[i]);
                break;
            }
            case Op::Mse: {
                if (!nodes_[check(n.a)].needs_grad) break;
                const Tensor& P = nodes_[check(n.a)].val;
                Tensor& da = ensure_grad(n.a);
                const double gs = g.data[0] * 2.0 / static_cast<double>(std::max<std::int64_t>(1, P.numel()));
                for (std::size_t i = 0; i < P.data.size(); ++i)
                    da.data[i] += gs * (P.data[i] - n.saved1.data[i]);
                break;
            }
        }
    }
};

}  // namespace get
