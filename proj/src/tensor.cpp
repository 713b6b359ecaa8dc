#include "gslt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace gslt {

namespace {

std::shared_ptr<TensorNode> make_node(int rows, int cols) {
    if (rows <= 0 || cols <= 0) {
        throw DimensionError("tensor extents must be positive, got " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    }
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->values.assign(static_cast<std::size_t>(rows) * cols, 0.0);
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                             "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                             "x" + std::to_string(b.cols()));
    }
}

// Wires the node into the graph when any parent carries gradient.
Tensor finish(std::shared_ptr<TensorNode> node,
              std::vector<std::shared_ptr<TensorNode>> parents,
              std::function<void()> backward_fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    if (needs) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
    auto n = make_node(rows, cols);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::full(int rows, int cols, double value) {
    auto n = make_node(rows, cols);
    std::fill(n->values.begin(), n->values.end(), value);
    return Tensor(std::move(n));
}

Tensor Tensor::from_values(int rows, int cols, std::vector<double> values, bool requires_grad) {
    if (values.size() != static_cast<std::size_t>(rows) * cols) {
        throw DimensionError("from_values: " + std::to_string(values.size()) +
                             " values for shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    auto n = make_node(rows, cols);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value) { return from_values(1, 1, {value}); }

double Tensor::value() const {
    if (!is_scalar()) throw ContractError("value() requires a 1x1 tensor");
    return node_->values[0];
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::set_values(const std::vector<double>& v) {
    if (v.size() != node_->values.size()) throw DimensionError("set_values: length mismatch");
    node_->values = v;
}

void Tensor::add_to_values(const std::vector<double>& delta) {
    if (delta.size() != node_->values.size()) throw DimensionError("add_to_values: length mismatch");
    for (std::size_t i = 0; i < delta.size(); ++i) node_->values[i] += delta[i];
}

void Tensor::set_value_at(std::size_t flat_index, double v) {
    node_->values.at(flat_index) = v;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar()) {
        throw ContractError("backward requires a scalar loss");
    }
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Reverse post-order over parent edges: loss first, leaves last.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> done;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    done.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && done.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        (*it)->ensure_grad();
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

// ---- core ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner extents " + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node(m, n);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    double* ov = out->values.data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            const double* brow = bv + kk * n;
            double* orow = ov + i * n;
            for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    auto pa = a.node(), pb = b.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pb}, [self, pa, pb, m, k, n]() {
        const double* g = self->grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            double* ga = pa->grad.data();
            const double* bv = pb->values.data();
            // dA = dC * B^T
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    double s = 0.0;
                    const double* grow = g + i * n;
                    const double* brow = bv + kk * n;
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ga[i * k + kk] += s;
                }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            double* gb = pb->grad.data();
            const double* av = pa->values.data();
            // dB = A^T * dC
            for (int i = 0; i < m; ++i) {
                const double* grow = g + i * n;
                for (int kk = 0; kk < k; ++kk) {
                    const double aik = av[i * k + kk];
                    if (aik == 0.0) continue;
                    double* brow = gb + kk * n;
                    for (int j = 0; j < n; ++j) brow[j] += aik * grow[j];
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = a.values()[i] + b.values()[i];
    auto pa = a.node(), pb = b.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pb}, [self, pa, pb]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] += self->grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = a.values()[i] - b.values()[i];
    auto pa = a.node(), pb = b.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pb}, [self, pa, pb]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] -= self->grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = a.values()[i] * b.values()[i];
    auto pa = a.node(), pb = b.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pb}, [self, pa, pb]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pa->grad[i] += self->grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pb->grad[i] += self->grad[i] * pa->values[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a.values()[i] * c;
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, c]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a.values()[i] + c;
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
    });
}

Tensor pow_scalar(const Tensor& a, double p) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = std::pow(a.values()[i], p);
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, p]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[i] += self->grad[i] * p * std::pow(pa->values[i], p - 1.0);
    });
}

Tensor exp_op(const Tensor& a) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = std::exp(a.values()[i]);
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[i] += self->grad[i] * self->values[i];
    });
}

Tensor log_op(const Tensor& a) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = std::log(a.values()[i]);
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[i] += self->grad[i] / pa->values[i];
    });
}

Tensor relu(const Tensor& a) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            if (pa->values[i] > 0.0) pa->grad[i] += self->grad[i];
    });
}

Tensor sigmoid(const Tensor& a) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i) {
        const double x = a.values()[i];
        if (x >= 0.0) {
            out->values[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
            const double e = std::exp(x);
            out->values[i] = e / (1.0 + e);
        }
    }
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) {
            const double s = self->values[i];
            pa->grad[i] += self->grad[i] * s * (1.0 - s);
        }
    });
}

Tensor transpose(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[j * m + i] = a.values()[i * n + j];
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, m, n]() {
        pa->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) pa->grad[i * n + j] += self->grad[j * m + i];
    });
}

Tensor sum_all(const Tensor& a) {
    auto out = make_node(1, 1);
    double s = 0.0;
    for (double v : a.values()) s += v;
    out->values[0] = s;
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += self->grad[0];
    });
}

Tensor row_sum(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, 1);
    for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += a.values()[i * n + j];
        out->values[i] = s;
    }
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, m, n]() {
        pa->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) pa->grad[i * n + j] += self->grad[i];
    });
}

Tensor col_sum(const Tensor& a) {
    const int m = a.rows(), n = a.cols();
    auto out = make_node(1, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[j] += a.values()[i * n + j];
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, m, n]() {
        pa->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) pa->grad[i * n + j] += self->grad[j];
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw DimensionError("add_row: expected 1x" + std::to_string(a.cols()));
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[i * n + j] = a.values()[i * n + j] + row.values()[j];
    auto pa = a.node(), pr = row.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pr}, [self, pa, pr, m, n]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
        }
        if (pr->requires_grad) {
            pr->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pr->grad[j] += self->grad[i * n + j];
        }
    });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        throw DimensionError("mul_row: expected 1x" + std::to_string(a.cols()));
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[i * n + j] = a.values()[i * n + j] * row.values()[j];
    auto pa = a.node(), pr = row.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pr}, [self, pa, pr, m, n]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pa->grad[i * n + j] += self->grad[i * n + j] * pr->values[j];
        }
        if (pr->requires_grad) {
            pr->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pr->grad[j] += self->grad[i * n + j] * pa->values[i * n + j];
        }
    });
}

Tensor add_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows())
        throw DimensionError("add_col: expected " + std::to_string(a.rows()) + "x1");
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[i * n + j] = a.values()[i * n + j] + col.values()[i];
    auto pa = a.node(), pc = col.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pc}, [self, pa, pc, m, n]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
        }
        if (pc->requires_grad) {
            pc->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pc->grad[i] += self->grad[i * n + j];
        }
    });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
    if (col.cols() != 1 || col.rows() != a.rows())
        throw DimensionError("mul_col: expected " + std::to_string(a.rows()) + "x1");
    const int m = a.rows(), n = a.cols();
    auto out = make_node(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out->values[i * n + j] = a.values()[i * n + j] * col.values()[i];
    auto pa = a.node(), pc = col.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa, pc}, [self, pa, pc, m, n]() {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pa->grad[i * n + j] += self->grad[i * n + j] * pc->values[i];
        }
        if (pc->requires_grad) {
            pc->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) pc->grad[i] += self->grad[i * n + j] * pa->values[i * n + j];
        }
    });
}

Tensor slice_rows(const Tensor& a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw BoundsError("slice_rows: bad range");
    const int n = a.cols();
    auto out = make_node(r1 - r0, n);
    std::copy(a.values().begin() + static_cast<std::size_t>(r0) * n,
              a.values().begin() + static_cast<std::size_t>(r1) * n, out->values.begin());
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, r0, n]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[static_cast<std::size_t>(r0) * n + i] += self->grad[i];
    });
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw BoundsError("slice_cols: bad range");
    const int m = a.rows(), n = a.cols(), w = c1 - c0;
    auto out = make_node(m, w);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out->values[i * w + j] = a.values()[i * n + c0 + j];
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, m, n, c0, w]() {
        pa->ensure_grad();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) pa->grad[i * n + c0 + j] += self->grad[i * w + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const int n = parts[0].cols();
    int m = 0;
    for (const auto& p : parts) {
        if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
        m += p.rows();
    }
    auto out = make_node(m, n);
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<int> offsets;
    int r = 0;
    for (const auto& p : parts) {
        std::copy(p.values().begin(), p.values().end(),
                  out->values.begin() + static_cast<std::size_t>(r) * n);
        parents.push_back(p.node());
        offsets.push_back(r);
        r += p.rows();
    }
    TensorNode* self = out.get();
    auto ps = parents;
    return finish(std::move(out), std::move(parents), [self, ps, offsets, n]() {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->requires_grad) continue;
            ps[k]->ensure_grad();
            const std::size_t base = static_cast<std::size_t>(offsets[k]) * n;
            for (std::size_t i = 0; i < ps[k]->grad.size(); ++i)
                ps[k]->grad[i] += self->grad[base + i];
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const int m = parts[0].rows();
    int n = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
        n += p.cols();
    }
    auto out = make_node(m, n);
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::vector<int> offsets;
    int c = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p.cols(); ++j)
                out->values[i * n + c + j] = p.values()[i * p.cols() + j];
        parents.push_back(p.node());
        offsets.push_back(c);
        c += p.cols();
    }
    TensorNode* self = out.get();
    auto ps = parents;
    return finish(std::move(out), std::move(parents), [self, ps, offsets, m, n]() {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->requires_grad) continue;
            ps[k]->ensure_grad();
            const int w = ps[k]->cols;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                    ps[k]->grad[i * w + j] += self->grad[i * n + offsets[k] + j];
        }
    });
}

Tensor pick_per_row(const Tensor& a, const std::vector<int>& ids) {
    const int m = a.rows(), n = a.cols();
    if (static_cast<int>(ids.size()) != m) throw DimensionError("pick_per_row: one id per row");
    for (int id : ids)
        if (id < 0 || id >= n) throw BoundsError("pick_per_row: id " + std::to_string(id));
    auto out = make_node(m, 1);
    for (int i = 0; i < m; ++i) out->values[i] = a.values()[i * n + ids[i]];
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, ids, n]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) pa->grad[i * n + ids[i]] += self->grad[i];
    });
}

Tensor clamp_max(const Tensor& a, double limit) {
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = std::min(a.values()[i], limit);
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, limit]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            if (pa->values[i] < limit) pa->grad[i] += self->grad[i];
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (ids.empty()) throw ContractError("embedding_lookup: empty id list");
    const int v = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw VocabularyError("embedding_lookup: id " + std::to_string(id) +
                                  " outside vocabulary of " + std::to_string(v));
    auto out = make_node(static_cast<int>(ids.size()), d);
    for (std::size_t k = 0; k < ids.size(); ++k)
        std::copy(table.values().begin() + static_cast<std::size_t>(ids[k]) * d,
                  table.values().begin() + static_cast<std::size_t>(ids[k] + 1) * d,
                  out->values.begin() + k * d);
    auto pt = table.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pt}, [self, pt, ids, d]() {
        pt->ensure_grad();
        for (std::size_t k = 0; k < ids.size(); ++k)
            for (int j = 0; j < d; ++j)
                pt->grad[static_cast<std::size_t>(ids[k]) * d + j] += self->grad[k * d + j];
    });
}

Tensor dropout(const Tensor& a, double rate, bool train_mode, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout: rate must be in [0, 1)");
    if (!train_mode || rate == 0.0) return a;
    const double keep = 1.0 - rate;
    std::vector<double> mask(a.size());
    for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = a.values()[i] * mask[i];
    auto pa = a.node();
    TensorNode* self = out.get();
    return finish(std::move(out), {pa}, [self, pa, mask = std::move(mask)]() {
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[i] += self->grad[i] * mask[i];
    });
}

// ---- composed ops ----

Tensor softmax(const Tensor& a, int axis) {
    if (axis == 0) return transpose(softmax(transpose(a), 1));
    if (axis != 1) throw ContractError("softmax: axis must be 0 or 1");
    // Shift by the detached row max; softmax is invariant to the shift, so
    // the gradient is unaffected while exp stays in range.
    Tensor shifted = add_col(a, scale(detached_row_max(a), -1.0));
    Tensor e = exp_op(shifted);
    return mul_col(e, pow_scalar(row_sum(e), -1.0));
}

Tensor log_softmax_rows(const Tensor& a) {
    Tensor shifted = add_col(a, scale(detached_row_max(a), -1.0));
    Tensor lse = log_op(row_sum(exp_op(shifted)));
    return add_col(shifted, scale(lse, -1.0));
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
        throw DimensionError("layer_norm_rows: gain/bias must be 1x" + std::to_string(x.cols()));
    const double inv_n = 1.0 / x.cols();
    Tensor mean = scale(row_sum(x), inv_n);
    Tensor centered = add_col(x, scale(mean, -1.0));
    Tensor var = scale(row_sum(mul(centered, centered)), inv_n);
    Tensor inv_std = pow_scalar(add_scalar(var, eps), -0.5);
    Tensor normed = mul_col(centered, inv_std);
    return add_row(mul_row(normed, gain), bias);
}

Tensor feature_norm_cols(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
        throw DimensionError("feature_norm_cols: gain/bias must be 1x" + std::to_string(x.cols()));
    const double inv_m = 1.0 / x.rows();
    Tensor mean = scale(col_sum(x), inv_m);
    Tensor centered = add_row(x, scale(mean, -1.0));
    Tensor var = scale(col_sum(mul(centered, centered)), inv_m);
    Tensor inv_std = pow_scalar(add_scalar(var, eps), -0.5);
    Tensor normed = mul_row(centered, inv_std);
    return add_row(mul_row(normed, gain), bias);
}

Tensor make_op(int rows, int cols, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(const TensorNode& self, std::vector<TensorNode*>& parents)>
                   backward_fn) {
    auto out = make_node(rows, cols);
    if (out->values.size() != values.size()) throw DimensionError("make_op: value count mismatch");
    out->values = std::move(values);
    std::vector<std::shared_ptr<TensorNode>> parent_nodes;
    parent_nodes.reserve(parents.size());
    for (const auto& p : parents) parent_nodes.push_back(p.node());
    TensorNode* self = out.get();
    auto ps = parent_nodes;
    return finish(std::move(out), std::move(parent_nodes),
                  [self, ps, fn = std::move(backward_fn)]() {
                      std::vector<TensorNode*> raw;
                      raw.reserve(ps.size());
                      for (const auto& p : ps) {
                          p->ensure_grad();
                          raw.push_back(p.get());
                      }
                      fn(*self, raw);
                  });
}

// ---- non-differentiable helpers ----

Tensor detached_row_max(const Tensor& a) {
    auto out = make_node(a.rows(), 1);
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i) {
        double m = a.values()[i * n];
        for (int j = 1; j < n; ++j) m = std::max(m, a.values()[i * n + j]);
        out->values[i] = m;
    }
    return Tensor(std::move(out));
}

std::vector<int> argmax_rows(const Tensor& a) {
    std::vector<int> ids(a.rows());
    const int n = a.cols();
    for (int i = 0; i < a.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < n; ++j)
            if (a.values()[i * n + j] > a.values()[i * n + best]) best = j;
        ids[i] = best;
    }
    return ids;
}

bool all_finite(const Tensor& a) {
    for (double v : a.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace gslt
