#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gslt/errors.hpp"
#include "gslt/rng.hpp"

namespace gslt {

// One node of the dynamically built computation graph. Nodes are created by
// forward ops and torn down when the last Tensor handle goes away. grad is
// allocated lazily and accumulates (+=) across every use of the node, so a
// parameter consumed twice receives the sum of both path contributions.
struct TensorNode {
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad and scatters into the parents' grad buffers.
    std::function<void()> backward_fn;

    std::size_t size() const { return values.size(); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Value-semantics handle to a graph node. Copying shares the node; all ops
// return fresh nodes, so tensors behave as immutable values. The only
// sanctioned in-place mutation is a parameter update between optimizer steps
// (set_values / add_to_values) and grad bookkeeping.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(int rows, int cols, bool requires_grad = false);
    static Tensor full(int rows, int cols, double value);
    static Tensor from_values(int rows, int cols, std::vector<double> values,
                              bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    std::size_t size() const { return node_->values.size(); }
    bool is_scalar() const { return rows() == 1 && cols() == 1; }

    double at(int r, int c) const { return node_->values[static_cast<std::size_t>(r) * cols() + c]; }
    double value() const;  // scalar only

    const std::vector<double>& values() const { return node_->values; }
    bool requires_grad() const { return node_->requires_grad; }

    // Gradient view; zeros if backward never reached this node.
    const std::vector<double>& grad() const;
    void zero_grad();

    // Parameter maintenance between optimizer steps.
    void set_values(const std::vector<double>& v);
    void add_to_values(const std::vector<double>& delta);
    void set_value_at(std::size_t flat_index, double v);

    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Reverse-mode sweep from a scalar loss. Every parameter reachable from the
// loss receives d loss / d param added into its grad buffer.
void backward(const Tensor& loss);

// ---- core ops (hand-derived gradients) ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor pow_scalar(const Tensor& a, double p);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor row_sum(const Tensor& a);  // [m x n] -> [m x 1]
Tensor col_sum(const Tensor& a);  // [m x n] -> [1 x n]
Tensor add_row(const Tensor& a, const Tensor& row);  // row: [1 x n]
Tensor mul_row(const Tensor& a, const Tensor& row);
Tensor add_col(const Tensor& a, const Tensor& col);  // col: [m x 1]
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor slice_rows(const Tensor& a, int r0, int r1);  // half-open
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor pick_per_row(const Tensor& a, const std::vector<int>& ids);  // [m x 1]
Tensor clamp_max(const Tensor& a, double limit);
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor dropout(const Tensor& a, double rate, bool train_mode, Rng& rng);

// ---- composed ops (gradients inherited from the primitives) ----

// axis = 1: softmax over each row (default); axis = 0: over each column.
Tensor softmax(const Tensor& a, int axis = 1);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-5);
// Standardizes each column over the rows (per-feature over a sequence).
Tensor feature_norm_cols(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5);

// Node with a hand-supplied backward pass. The callback reads self.grad and
// must accumulate into the parents' grad buffers (buffers are pre-allocated).
Tensor make_op(int rows, int cols, std::vector<double> values, std::vector<Tensor> parents,
               std::function<void(const TensorNode& self, std::vector<TensorNode*>& parents)>
                   backward_fn);

// ---- non-differentiable helpers ----

Tensor detached_row_max(const Tensor& a);              // [m x 1] constant
std::vector<int> argmax_rows(const Tensor& a);         // lowest index wins ties
bool all_finite(const Tensor& a);

}  // namespace gslt
