#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dflmoe/errors.hpp"

namespace dflmoe {

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;  // trainable leaf flag
    bool needs_grad = false;     // participates in the recorded graph

    std::size_t size() const { return value.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
    void accumulate(const double* g, std::size_t n);
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats with value semantics on the
/// handle (copies share the node). All values are finite by construction:
/// creation rejects NaN/Inf and every op checks its output.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rank() const { return node_->shape.size(); }

    /// Rank-2 accessors; throw ShapeMismatch for other ranks.
    std::size_t rows() const;
    std::size_t cols() const;
    double at(std::size_t r, std::size_t c) const;

    std::span<const double> values() const { return node_->value; }
    /// Direct mutation of the stored values (parameter init, tests). The
    /// new contents must be finite.
    std::span<double> mutable_values() { return node_->value; }
    void check_finite(const char* what) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on);
    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const;
    void zero_grad() { node_->grad.clear(); }

    /// Scalar extraction; NotScalar unless size() == 1.
    double item() const;

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op_output(Shape shape, std::vector<double> value,
                                 std::initializer_list<const Tensor*> inputs, const char* opname);
};

/// Reverse-mode tape. Ops append one record at creation; backward() replays
/// the records in exact reverse creation order and then discards them.
/// One graph per thread (thread_local); a live graph must not be shared
/// across threads.
class GradGraph {
  public:
    struct Record {
        std::shared_ptr<detail::TensorNode> output;
        std::function<void()> backprop;
    };

    static GradGraph& current();

    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }
    std::size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }
    void record(Record r) { records_.push_back(std::move(r)); }

    /// Seeds d(loss)/d(loss) = 1 and runs every record backward. Leaf
    /// gradients accumulate across calls until zeroed; the tape itself is
    /// consumed.
    void backward_from(const Tensor& loss);

  private:
    std::vector<Record> records_;
    bool recording_ = true;
};

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};

// --- differentiable ops ---

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& x);
/// Numerically stable softmax along `axis` (max subtraction per lane).
Tensor softmax(const Tensor& x, std::size_t axis);
/// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy_loss(const Tensor& logits, const std::vector<std::size_t>& labels);
/// softmax(q k^T / sqrt(d)) v with q: [1 x d], k: [E x d], v: [E x C].
Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// mat: [B x C] plus bias: [C] broadcast over rows.
Tensor add_row_bias(const Tensor& mat, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor slice_row(const Tensor& mat, std::size_t row);
Tensor slice_col(const Tensor& mat, std::size_t col);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// mat: [B x C] scaled per-row by col: [B x 1].
Tensor mul_colvec(const Tensor& mat, const Tensor& col);

/// Runs reverse-mode accumulation from a scalar loss on the current graph.
void backward(const Tensor& loss);

/// p <- p - lr * grad(p) for every parameter, then zeroes the grads.
/// Every parameter must carry a populated grad and appear once.
void sgd_step(const std::vector<Tensor>& params, double lr);

}  // namespace dflmoe
