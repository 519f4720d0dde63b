#include "dflmoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dflmoe {

namespace {

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void validate_shape(const Shape& shape) {
    for (std::size_t d : shape) {
        if (d == 0) throw Error(ErrorCode::ShapeMismatch, "zero-sized dimension");
    }
}

void ensure_all_finite(std::span<const double> vals, const char* what) {
    for (double v : vals) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::NonFinite, std::string(what) + " produced a non-finite value");
        }
    }
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

}  // namespace

namespace detail {

void TensorNode::accumulate(const double* g, std::size_t n) {
    ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
        grad[i] += g[i];
        if (!std::isfinite(grad[i])) {
            throw Error(ErrorCode::NonFinite, "gradient accumulation produced a non-finite value");
        }
    }
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    auto node = std::make_shared<detail::TensorNode>();
    node->value.assign(shape_product(shape), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    node->needs_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (shape_product(shape) != data.size()) {
        throw Error(ErrorCode::ShapeMismatch, "data length does not match shape " + shape_str(shape));
    }
    ensure_all_finite(data, "tensor creation");
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->needs_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw Error(ErrorCode::ShapeMismatch, "rows() needs a rank-2 tensor");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw Error(ErrorCode::ShapeMismatch, "cols() needs a rank-2 tensor");
    return node_->shape[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return node_->value[r * cols() + c];
}

void Tensor::check_finite(const char* what) const {
    ensure_all_finite(node_->value, what);
}

void Tensor::set_requires_grad(bool on) {
    node_->requires_grad = on;
    node_->needs_grad = on;
}

std::span<const double> Tensor::grad() const {
    if (node_->grad.empty()) throw Error(ErrorCode::MissingGrad, "gradient has not been populated");
    return node_->grad;
}

double Tensor::item() const {
    if (size() != 1) throw Error(ErrorCode::NotScalar, "item() needs a scalar, got " + shape_str(shape()));
    return node_->value[0];
}

GradGraph& GradGraph::current() {
    static thread_local GradGraph graph;
    return graph;
}

void GradGraph::backward_from(const Tensor& loss) {
    if (loss.size() != 1) {
        throw Error(ErrorCode::NotScalar, "backward needs a scalar loss, got " + shape_str(loss.shape()));
    }
    auto* ln = loss.node();
    ln->ensure_grad();
    ln->grad[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (!it->output->grad.empty()) it->backprop();
    }
    records_.clear();
}

NoGradGuard::NoGradGuard() {
    auto& g = GradGraph::current();
    previous_ = g.recording();
    g.set_recording(false);
}

NoGradGuard::~NoGradGuard() { GradGraph::current().set_recording(previous_); }

namespace {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace

Tensor make_op_output(Shape shape, std::vector<double> value,
                      std::initializer_list<const Tensor*> inputs, const char* opname) {
    ensure_all_finite(value, opname);
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool recording = GradGraph::current().recording();
    bool needs = false;
    if (recording) {
        for (const Tensor* in : inputs) needs = needs || in->node()->needs_grad;
    }
    node->needs_grad = needs;
    return Tensor(std::move(node));
}

namespace {

void record_if_needed(const Tensor& out, std::function<void()> backprop) {
    if (out.node()->needs_grad) {
        GradGraph::current().record({out.node_ptr(), std::move(backprop)});
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw Error(ErrorCode::ShapeMismatch, "matmul needs rank-2 operands");
    }
    std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw Error(ErrorCode::ShapeMismatch,
                    "matmul inner dimensions disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &bv[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    Tensor result = make_op_output({m, n}, std::move(out), {&a, &b}, "matmul");
    record_if_needed(result, [an = a.node_ptr(), bn = b.node_ptr(), on = result.node_ptr(), m, k, n] {
        const auto& g = on->grad;
        if (an->needs_grad) {
            // dA = G B^T
            std::vector<double> da(m * k, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double gij = g[i * n + j];
                    if (gij == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gij * bn->value[p * n + j];
                }
            an->accumulate(da.data(), da.size());
        }
        if (bn->needs_grad) {
            // dB = A^T G
            std::vector<double> db(k * n, 0.0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double aip = an->value[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) db[p * n + j] += aip * g[i * n + j];
                }
            bn->accumulate(db.data(), db.size());
        }
    });
    return result;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "transpose needs a rank-2 tensor");
    std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto av = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    Tensor result = make_op_output({n, m}, std::move(out), {&a}, "transpose");
    record_if_needed(result, [an = a.node_ptr(), on = result.node_ptr(), m, n] {
        if (!an->needs_grad) return;
        std::vector<double> da(m * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) da[i * n + j] = on->grad[j * m + i];
        an->accumulate(da.data(), da.size());
    });
    return result;
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    Tensor result = make_op_output(x.shape(), std::move(out), {&x}, "relu");
    record_if_needed(result, [xn = x.node_ptr(), on = result.node_ptr()] {
        if (!xn->needs_grad) return;
        std::vector<double> dx(xn->value.size());
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = xn->value[i] > 0.0 ? on->grad[i] : 0.0;
        xn->accumulate(dx.data(), dx.size());
    });
    return result;
}

namespace {

// Iterates the lanes of `shape` along `axis`: calls fn(base_offset, stride)
// once per lane where lane element t lives at base_offset + t * stride.
template <typename Fn>
void for_each_lane(const Shape& shape, std::size_t axis, Fn&& fn) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    std::size_t len = shape[axis];
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) fn(o * len * inner + in, inner);
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw Error(ErrorCode::ShapeMismatch, "softmax axis out of range");
    std::vector<double> out(x.size());
    const auto xv = x.values();
    std::size_t len = x.shape()[axis];
    for_each_lane(x.shape(), axis, [&](std::size_t base, std::size_t stride) {
        double mx = xv[base];
        for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, xv[base + t * stride]);
        double total = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
            double e = std::exp(xv[base + t * stride] - mx);
            out[base + t * stride] = e;
            total += e;
        }
        for (std::size_t t = 0; t < len; ++t) out[base + t * stride] /= total;
    });
    Tensor result = make_op_output(x.shape(), std::move(out), {&x}, "softmax");
    record_if_needed(result, [xn = x.node_ptr(), on = result.node_ptr(), axis, len] {
        if (!xn->needs_grad) return;
        std::vector<double> dx(xn->value.size());
        for_each_lane(on->shape, axis, [&](std::size_t base, std::size_t stride) {
            double dot = 0.0;
            for (std::size_t t = 0; t < len; ++t)
                dot += on->grad[base + t * stride] * on->value[base + t * stride];
            for (std::size_t t = 0; t < len; ++t) {
                std::size_t idx = base + t * stride;
                dx[idx] = on->value[idx] * (on->grad[idx] - dot);
            }
        });
        xn->accumulate(dx.data(), dx.size());
    });
    return result;
}

Tensor cross_entropy_loss(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "cross_entropy_loss needs [B x C] logits");
    std::size_t batch = logits.rows(), classes = logits.cols();
    if (labels.size() != batch) {
        throw Error(ErrorCode::ShapeMismatch, "label count does not match batch size");
    }
    for (std::size_t lab : labels) {
        if (lab >= classes) {
            throw Error(ErrorCode::LabelOutOfRange,
                        "label " + std::to_string(lab) + " with " + std::to_string(classes) + " classes");
        }
    }
    const auto lv = logits.values();
    // log-sum-exp per row keeps every log finite
    std::vector<double> probs(batch * classes);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = &lv[b * classes];
        double mx = row[0];
        for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            double e = std::exp(row[c] - mx);
            probs[b * classes + c] = e;
            total += e;
        }
        for (std::size_t c = 0; c < classes; ++c) probs[b * classes + c] /= total;
        loss -= (row[labels[b]] - mx) - std::log(total);
    }
    loss /= static_cast<double>(batch);
    Tensor result = make_op_output({1}, {loss}, {&logits}, "cross_entropy_loss");
    record_if_needed(result, [ln = logits.node_ptr(), on = result.node_ptr(), probs = std::move(probs),
                              labels, batch, classes] {
        if (!ln->needs_grad) return;
        double g = on->grad[0] / static_cast<double>(batch);
        std::vector<double> dl(batch * classes);
        for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t c = 0; c < classes; ++c) {
                double p = probs[b * classes + c];
                dl[b * classes + c] = g * (p - (labels[b] == c ? 1.0 : 0.0));
            }
        ln->accumulate(dl.data(), dl.size());
    });
    return result;
}

Tensor scaled_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
        throw Error(ErrorCode::ShapeMismatch, "scaled_attention needs rank-2 operands");
    }
    if (q.rows() != 1) throw Error(ErrorCode::ShapeMismatch, "query must be a single row");
    if (k.rows() == 0 || v.rows() == 0) throw Error(ErrorCode::EmptyExpertSet, "no keys/values");
    if (q.cols() != k.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "query/key widths disagree: " + shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    }
    if (k.rows() != v.rows()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "key/value row counts disagree: " + shape_str(k.shape()) + " vs " + shape_str(v.shape()));
    }
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Tensor scores = scale(matmul(q, transpose(k)), inv_scale);  // [1 x E]
    Tensor weights = softmax(scores, 1);
    return matmul(weights, v);  // [1 x C]
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "add shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    Tensor result = make_op_output(a.shape(), std::move(out), {&a, &b}, "add");
    record_if_needed(result, [an = a.node_ptr(), bn = b.node_ptr(), on = result.node_ptr()] {
        if (an->needs_grad) an->accumulate(on->grad.data(), on->grad.size());
        if (bn->needs_grad) bn->accumulate(on->grad.data(), on->grad.size());
    });
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "mul shapes disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    Tensor result = make_op_output(a.shape(), std::move(out), {&a, &b}, "mul");
    record_if_needed(result, [an = a.node_ptr(), bn = b.node_ptr(), on = result.node_ptr()] {
        std::vector<double> tmp(on->grad.size());
        if (an->needs_grad) {
            for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = on->grad[i] * bn->value[i];
            an->accumulate(tmp.data(), tmp.size());
        }
        if (bn->needs_grad) {
            for (std::size_t i = 0; i < tmp.size(); ++i) tmp[i] = on->grad[i] * an->value[i];
            bn->accumulate(tmp.data(), tmp.size());
        }
    });
    return result;
}

Tensor scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw Error(ErrorCode::NonFinite, "scale factor is not finite");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    Tensor result = make_op_output(a.shape(), std::move(out), {&a}, "scale");
    record_if_needed(result, [an = a.node_ptr(), on = result.node_ptr(), c] {
        if (!an->needs_grad) return;
        std::vector<double> da(on->grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = on->grad[i] * c;
        an->accumulate(da.data(), da.size());
    });
    return result;
}

Tensor add_row_bias(const Tensor& mat, const Tensor& bias) {
    if (mat.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != mat.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "add_row_bias needs [B x C] and [C], got " + shape_str(mat.shape()) + " and " +
                        shape_str(bias.shape()));
    }
    std::size_t b = mat.rows(), c = mat.cols();
    std::vector<double> out(mat.size());
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mat.values()[i * c + j] + bias.values()[j];
    Tensor result = make_op_output(mat.shape(), std::move(out), {&mat, &bias}, "add_row_bias");
    record_if_needed(result, [mn = mat.node_ptr(), bn = bias.node_ptr(), on = result.node_ptr(), b, c] {
        if (mn->needs_grad) mn->accumulate(on->grad.data(), on->grad.size());
        if (bn->needs_grad) {
            std::vector<double> db(c, 0.0);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < c; ++j) db[j] += on->grad[i * c + j];
            bn->accumulate(db.data(), db.size());
        }
    });
    return result;
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    Tensor result = make_op_output({1}, {total}, {&a}, "sum");
    record_if_needed(result, [an = a.node_ptr(), on = result.node_ptr()] {
        if (!an->needs_grad) return;
        std::vector<double> da(an->value.size(), on->grad[0]);
        an->accumulate(da.data(), da.size());
    });
    return result;
}

Tensor slice_row(const Tensor& mat, std::size_t row) {
    if (mat.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "slice_row needs a rank-2 tensor");
    if (row >= mat.rows()) throw Error(ErrorCode::ShapeMismatch, "row index out of range");
    std::size_t c = mat.cols();
    std::vector<double> out(mat.values().begin() + row * c, mat.values().begin() + (row + 1) * c);
    Tensor result = make_op_output({1, c}, std::move(out), {&mat}, "slice_row");
    record_if_needed(result, [mn = mat.node_ptr(), on = result.node_ptr(), row, c] {
        if (!mn->needs_grad) return;
        mn->ensure_grad();
        for (std::size_t j = 0; j < c; ++j) mn->grad[row * c + j] += on->grad[j];
    });
    return result;
}

Tensor slice_col(const Tensor& mat, std::size_t col) {
    if (mat.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "slice_col needs a rank-2 tensor");
    if (col >= mat.cols()) throw Error(ErrorCode::ShapeMismatch, "column index out of range");
    std::size_t b = mat.rows(), c = mat.cols();
    std::vector<double> out(b);
    for (std::size_t i = 0; i < b; ++i) out[i] = mat.values()[i * c + col];
    Tensor result = make_op_output({b, 1}, std::move(out), {&mat}, "slice_col");
    record_if_needed(result, [mn = mat.node_ptr(), on = result.node_ptr(), col, b, c] {
        if (!mn->needs_grad) return;
        mn->ensure_grad();
        for (std::size_t i = 0; i < b; ++i) mn->grad[i * c + col] += on->grad[i];
    });
    return result;
}

namespace {

bool any_needs_grad(const std::vector<Tensor>& parts) {
    if (!GradGraph::current().recording()) return false;
    for (const auto& p : parts) {
        if (p.node()->needs_grad) return true;
    }
    return false;
}

}  // namespace

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_rows of nothing");
    std::size_t c = parts[0].cols();
    std::size_t total_rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.cols() != c) {
            throw Error(ErrorCode::ShapeMismatch, "concat_rows column widths disagree");
        }
        total_rows += p.rows();
    }
    std::vector<double> out;
    out.reserve(total_rows * c);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    Tensor result = make_op_output({total_rows, c}, std::move(out), {}, "concat_rows");
    if (any_needs_grad(parts)) {
        result.node()->needs_grad = true;
        std::vector<std::shared_ptr<detail::TensorNode>> srcs;
        srcs.reserve(parts.size());
        for (const auto& p : parts) srcs.push_back(p.node_ptr());
        GradGraph::current().record({result.node_ptr(), [srcs, on = result.node_ptr()] {
            std::size_t offset = 0;
            for (const auto& src : srcs) {
                std::size_t n = src->value.size();
                if (src->needs_grad) src->accumulate(on->grad.data() + offset, n);
                offset += n;
            }
        }});
    }
    return result;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
    std::size_t b = parts[0].rows();
    std::size_t total_cols = 0;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.rows() != b) {
            throw Error(ErrorCode::ShapeMismatch, "concat_cols row counts disagree");
        }
        total_cols += p.cols();
    }
    std::vector<double> out(b * total_cols);
    std::size_t col_offset = 0;
    for (const auto& p : parts) {
        std::size_t pc = p.cols();
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < pc; ++j) out[i * total_cols + col_offset + j] = p.values()[i * pc + j];
        col_offset += pc;
    }
    Tensor result = make_op_output({b, total_cols}, std::move(out), {}, "concat_cols");
    if (any_needs_grad(parts)) {
        result.node()->needs_grad = true;
        std::vector<std::shared_ptr<detail::TensorNode>> srcs;
        std::vector<std::size_t> widths;
        for (const auto& p : parts) {
            srcs.push_back(p.node_ptr());
            widths.push_back(p.cols());
        }
        GradGraph::current().record({result.node_ptr(), [srcs, widths, on = result.node_ptr(), b, total_cols] {
            std::size_t col_offset = 0;
            for (std::size_t s = 0; s < srcs.size(); ++s) {
                std::size_t pc = widths[s];
                if (srcs[s]->needs_grad) {
                    std::vector<double> dg(b * pc);
                    for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < pc; ++j)
                            dg[i * pc + j] = on->grad[i * total_cols + col_offset + j];
                    srcs[s]->accumulate(dg.data(), dg.size());
                }
                col_offset += pc;
            }
        }});
    }
    return result;
}

Tensor mul_colvec(const Tensor& mat, const Tensor& col) {
    if (mat.rank() != 2 || col.rank() != 2 || col.cols() != 1 || col.rows() != mat.rows()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "mul_colvec needs [B x C] and [B x 1], got " + shape_str(mat.shape()) + " and " +
                        shape_str(col.shape()));
    }
    std::size_t b = mat.rows(), c = mat.cols();
    std::vector<double> out(mat.size());
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = mat.values()[i * c + j] * col.values()[i];
    Tensor result = make_op_output(mat.shape(), std::move(out), {&mat, &col}, "mul_colvec");
    record_if_needed(result, [mn = mat.node_ptr(), cn = col.node_ptr(), on = result.node_ptr(), b, c] {
        if (mn->needs_grad) {
            std::vector<double> dm(b * c);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < c; ++j) dm[i * c + j] = on->grad[i * c + j] * cn->value[i];
            mn->accumulate(dm.data(), dm.size());
        }
        if (cn->needs_grad) {
            std::vector<double> dc(b, 0.0);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < c; ++j) dc[i] += on->grad[i * c + j] * mn->value[i * c + j];
            cn->accumulate(dc.data(), dc.size());
        }
    });
    return result;
}

void backward(const Tensor& loss) { GradGraph::current().backward_from(loss); }

void sgd_step(const std::vector<Tensor>& params, double lr) {
    if (lr < 0.0) throw Error(ErrorCode::InvalidParams, "learning rate must be nonnegative");
    std::unordered_set<const detail::TensorNode*> seen;
    for (const auto& p : params) {
        if (!seen.insert(p.node()).second) {
            throw Error(ErrorCode::InvalidParams, "parameter appears more than once");
        }
        if (!p.has_grad()) throw Error(ErrorCode::MissingGrad, "parameter has no gradient");
    }
    for (const auto& p : params) {
        auto* n = p.node();
        for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] -= lr * n->grad[i];
        n->grad.clear();
        ensure_all_finite(n->value, "sgd_step");
    }
}

}  // namespace dflmoe
