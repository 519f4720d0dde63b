#include "dflmoe/model.hpp"

#include <cmath>

namespace dflmoe {

Tensor init_linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = rng.uniform(-bound, bound);
    return Tensor::from_data({fan_in, fan_out}, std::move(w), true);
}

ClientModel make_client_model(const BodySpec& spec, std::size_t classes, std::size_t common_dim,
                              int owner_id, Rng& init_rng, FusionRule fusion) {
    if (spec.input_dim == 0 || spec.feature_dim == 0) {
        throw Error(ErrorCode::InvalidParams, "body dims must be positive");
    }
    if (classes < 2) throw Error(ErrorCode::InvalidParams, "need at least 2 classes");
    ClientModel m;
    m.class_count = classes;
    m.common_dim = common_dim;
    m.fusion = fusion;
    m.body.spec = spec;
    std::size_t in = spec.input_dim;
    for (std::size_t h : spec.hidden_dims) {
        m.body.weights.push_back(init_linear_weight(in, h, init_rng));
        m.body.biases.push_back(Tensor::zeros({h}, true));
        in = h;
    }
    m.body.weights.push_back(init_linear_weight(in, spec.feature_dim, init_rng));
    m.body.biases.push_back(Tensor::zeros({spec.feature_dim}, true));

    m.head.weight = init_linear_weight(spec.feature_dim, classes, init_rng);
    m.head.bias = Tensor::zeros({classes}, true);
    m.head.owner_id = owner_id;
    m.head.version = -1;

    m.fst.w_com = init_linear_weight(spec.feature_dim, common_dim, init_rng);
    m.moe.query_proj = init_linear_weight(spec.feature_dim, classes, init_rng);
    if (fusion == FusionRule::SoftmaxGate) {
        m.moe.gate[owner_id] = Tensor::zeros({spec.feature_dim, 1}, true);
    }
    return m;
}

Tensor body_forward(const ClientModel& model, const Tensor& x) {
    if (x.rank() != 2 || x.cols() != model.body.spec.input_dim) {
        throw Error(ErrorCode::ShapeMismatch, "input width does not match body input_dim");
    }
    Tensor h = x;
    std::size_t layers = model.body.weights.size();
    for (std::size_t i = 0; i < layers; ++i) {
        h = add_row_bias(matmul(h, model.body.weights[i]), model.body.biases[i]);
        if (i + 1 < layers) h = relu(h);
    }
    return h;
}

namespace {

Tensor apply_head(const Head& head, const Tensor& feature) {
    return add_row_bias(matmul(feature, head.weight), head.bias);
}

}  // namespace

Tensor local_output(const ClientModel& model, const Tensor& x) {
    return apply_head(model.head, body_forward(model, x));
}

Tensor expert_prediction(const ClientModel& model, const Tensor& feature, const Head& expert,
                         int expert_id) {
    if (expert_id == model.head.owner_id) {
        return apply_head(expert, feature);  // identity transform for the local expert
    }
    if (model.fusion == FusionRule::CrossAttentionNoFst) {
        if (expert.weight.rows() != feature.cols()) {
            throw Error(ErrorCode::DimensionalIncompatibility,
                        "expert feature width differs and the transform module is disabled");
        }
        return apply_head(expert, feature);
    }
    auto it = model.fst.per_expert.find(expert_id);
    if (it == model.fst.per_expert.end()) {
        throw Error(ErrorCode::UnknownExpert, "no transform for expert " + std::to_string(expert_id));
    }
    Tensor common = matmul(feature, model.fst.w_com);
    return apply_head(expert, matmul(common, it->second));
}

namespace {

Tensor fuse_attention(const ClientModel& model, const Tensor& feature,
                      const std::vector<Tensor>& preds) {
    Tensor query = matmul(feature, model.moe.query_proj);  // [B x C]
    std::size_t batch = feature.rows();
    std::vector<Tensor> out_rows;
    out_rows.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<Tensor> kv_rows;
        kv_rows.reserve(preds.size());
        for (const auto& p : preds) kv_rows.push_back(slice_row(p, b));
        Tensor kv = preds.size() == 1 ? kv_rows[0] : concat_rows(kv_rows);
        out_rows.push_back(scaled_attention(slice_row(query, b), kv, kv));
    }
    return batch == 1 ? out_rows[0] : concat_rows(out_rows);
}

Tensor fuse_gate(const ClientModel& model, const Tensor& feature, const std::vector<Tensor>& preds,
                 const std::vector<ExpertRef>& experts) {
    std::vector<Tensor> logit_cols;
    logit_cols.reserve(experts.size());
    for (const auto& e : experts) {
        auto it = model.moe.gate.find(e.id);
        if (it == model.moe.gate.end()) {
            throw Error(ErrorCode::UnknownExpert, "no gate column for expert " + std::to_string(e.id));
        }
        logit_cols.push_back(matmul(feature, it->second));  // [B x 1]
    }
    Tensor weights = softmax(logit_cols.size() == 1 ? logit_cols[0] : concat_cols(logit_cols), 1);
    Tensor out = mul_colvec(preds[0], slice_col(weights, 0));
    for (std::size_t e = 1; e < preds.size(); ++e) {
        out = add(out, mul_colvec(preds[e], slice_col(weights, e)));
    }
    return out;
}

}  // namespace

Tensor moe_output(const ClientModel& model, const Tensor& x, const std::vector<ExpertRef>& experts) {
    if (experts.empty()) throw Error(ErrorCode::EmptyExpertSet, "expert lineup is empty");
    Tensor feature = body_forward(model, x);
    std::vector<Tensor> preds;
    preds.reserve(experts.size());
    for (const auto& e : experts) preds.push_back(expert_prediction(model, feature, *e.head, e.id));
    if (model.fusion == FusionRule::SoftmaxGate) return fuse_gate(model, feature, preds, experts);
    return fuse_attention(model, feature, preds);
}

Tensor local_loss(const ClientModel& model, const Tensor& x, const std::vector<std::size_t>& labels,
                  const std::vector<ExpertRef>& experts, double lambda_loc, double lambda_moe) {
    if (lambda_loc < 0.0 || lambda_moe < 0.0) {
        throw Error(ErrorCode::InvalidParams, "loss weights must be nonnegative");
    }
    if (experts.empty()) throw Error(ErrorCode::EmptyExpertSet, "expert lineup is empty");
    Tensor feature = body_forward(model, x);
    Tensor loc = cross_entropy_loss(apply_head(model.head, feature), labels);

    std::vector<Tensor> preds;
    preds.reserve(experts.size());
    for (const auto& e : experts) preds.push_back(expert_prediction(model, feature, *e.head, e.id));
    Tensor fused = model.fusion == FusionRule::SoftmaxGate ? fuse_gate(model, feature, preds, experts)
                                                           : fuse_attention(model, feature, preds);
    Tensor moe = cross_entropy_loss(fused, labels);
    return add(scale(loc, lambda_loc), scale(moe, lambda_moe));
}

Tensor moe_decision_loss(const ClientModel& model, const Tensor& x,
                         const std::vector<std::size_t>& labels,
                         const std::vector<ExpertRef>& experts) {
    return cross_entropy_loss(moe_output(model, x, experts), labels);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    std::size_t batch = logits.rows(), classes = logits.cols();
    std::vector<std::size_t> out(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c) {
            if (logits.at(b, c) > logits.at(b, best)) best = c;
        }
        out[b] = best;
    }
    return out;
}

std::vector<std::size_t> inference(const ClientModel& model, const Tensor& x,
                                   const std::vector<ExpertRef>& experts) {
    return argmax_rows(moe_output(model, x, experts));
}

namespace {

template <typename Fn>
void visit_group(const ClientModel& model, ParamGroup group, Fn&& fn) {
    switch (group) {
        case ParamGroup::Body:
            for (std::size_t i = 0; i < model.body.weights.size(); ++i) {
                fn(model.body.weights[i]);
                fn(model.body.biases[i]);
            }
            break;
        case ParamGroup::Head:
            fn(model.head.weight);
            fn(model.head.bias);
            break;
        case ParamGroup::Fst:
            fn(model.fst.w_com);
            for (const auto& [id, w] : model.fst.per_expert) fn(w);
            break;
        case ParamGroup::Moe:
            if (model.fusion == FusionRule::SoftmaxGate) {
                for (const auto& [id, g] : model.moe.gate) fn(g);
            } else {
                fn(model.moe.query_proj);
            }
            break;
    }
}

}  // namespace

std::size_t param_count(const ClientModel& model, ParamGroup group) {
    std::size_t n = 0;
    visit_group(model, group, [&](const Tensor& t) { n += t.size(); });
    return n;
}

std::vector<Tensor> group_params(ClientModel& model, ParamGroup group) {
    std::vector<Tensor> params;
    visit_group(model, group, [&](const Tensor& t) { params.push_back(t); });
    return params;
}

void set_group_trainable(ClientModel& model, ParamGroup group, bool trainable) {
    // Tensor handles share their node, so a copy reaches the same flag.
    visit_group(model, group, [&](const Tensor& t) {
        Tensor handle = t;
        handle.set_requires_grad(trainable);
    });
}

std::vector<double> snapshot_group(const ClientModel& model, ParamGroup group) {
    std::vector<double> out;
    visit_group(model, group, [&](const Tensor& t) {
        out.insert(out.end(), t.values().begin(), t.values().end());
    });
    return out;
}

}  // namespace dflmoe
