#include "dflmoe/baselines.hpp"

#include <algorithm>
#include <set>

namespace dflmoe {

std::string baseline_name(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::Full: return "dflmoe";
        case BaselineKind::LocalOnly: return "local_only";
        case BaselineKind::FedAvg: return "fedavg";
        case BaselineKind::NoMoE: return "no_moe";
        case BaselineKind::NoFST: return "no_fst";
        case BaselineKind::CentralizedMoEFST: return "centralized_moe_fst";
        case BaselineKind::AggregatedHead: return "aggregated_head";
    }
    throw Error(ErrorCode::InvalidArgument, "unknown baseline kind");
}

BaselineKind baseline_from_name(const std::string& name) {
    for (BaselineKind kind :
         {BaselineKind::Full, BaselineKind::LocalOnly, BaselineKind::FedAvg, BaselineKind::NoMoE,
          BaselineKind::NoFST, BaselineKind::CentralizedMoEFST, BaselineKind::AggregatedHead}) {
        if (baseline_name(kind) == name) return kind;
    }
    throw Error(ErrorCode::ConfigInvalid, "variant: unknown value '" + name + "'");
}

namespace {

void average_tensors(const std::vector<Tensor*>& tensors, const std::vector<double>& weights) {
    const Shape& shape = tensors[0]->shape();
    for (Tensor* t : tensors) {
        if (t->shape() != shape) {
            throw Error(ErrorCode::HeterogeneousModels, "parameter shapes disagree across clients");
        }
    }
    double total_w = 0.0;
    for (double w : weights) total_w += w;
    if (total_w <= 0.0) throw Error(ErrorCode::InvalidParams, "aggregate weights sum to zero");
    std::vector<double> mean(tensors[0]->size(), 0.0);
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        double w = weights[k] / total_w;
        auto vals = tensors[k]->values();
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += w * vals[i];
    }
    for (Tensor* t : tensors) {
        std::copy(mean.begin(), mean.end(), t->mutable_values().begin());
    }
}

}  // namespace

void fedavg_aggregate(std::vector<ClientModel*>& models, const std::vector<std::size_t>& sample_counts) {
    if (models.empty()) throw Error(ErrorCode::InvalidParams, "no models to aggregate");
    if (models.size() != sample_counts.size()) {
        throw Error(ErrorCode::LengthMismatch, "model/count lengths disagree");
    }
    const BodySpec& ref = models[0]->body.spec;
    for (const ClientModel* m : models) {
        if (m->body.spec.input_dim != ref.input_dim || m->body.spec.hidden_dims != ref.hidden_dims ||
            m->body.spec.feature_dim != ref.feature_dim || m->class_count != models[0]->class_count) {
            throw Error(ErrorCode::HeterogeneousModels, "fedavg needs identical body specs");
        }
    }
    std::vector<double> weights(sample_counts.begin(), sample_counts.end());
    std::size_t layers = models[0]->body.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        std::vector<Tensor*> ws, bs;
        for (ClientModel* m : models) {
            ws.push_back(&m->body.weights[l]);
            bs.push_back(&m->body.biases[l]);
        }
        average_tensors(ws, weights);
        average_tensors(bs, weights);
    }
    std::vector<Tensor*> hw, hb;
    for (ClientModel* m : models) {
        hw.push_back(&m->head.weight);
        hb.push_back(&m->head.bias);
    }
    average_tensors(hw, weights);
    average_tensors(hb, weights);
}

void average_fst_moe(std::vector<ClientModel*>& models) {
    if (models.empty()) throw Error(ErrorCode::InvalidParams, "no models to aggregate");
    std::vector<double> uniform(models.size(), 1.0);

    std::vector<Tensor*> coms;
    for (ClientModel* m : models) coms.push_back(&m->fst.w_com);
    average_tensors(coms, uniform);

    std::vector<Tensor*> queries;
    for (ClientModel* m : models) queries.push_back(&m->moe.query_proj);
    average_tensors(queries, uniform);

    // Per-expert transforms: average over the clients that hold the id.
    std::set<int> expert_ids;
    for (ClientModel* m : models) {
        for (const auto& [id, t] : m->fst.per_expert) expert_ids.insert(id);
    }
    for (int id : expert_ids) {
        std::vector<Tensor*> holders;
        for (ClientModel* m : models) {
            auto it = m->fst.per_expert.find(id);
            if (it != m->fst.per_expert.end()) holders.push_back(&it->second);
        }
        if (holders.size() > 1) {
            average_tensors(holders, std::vector<double>(holders.size(), 1.0));
        }
    }
}

void average_heads(std::vector<ClientModel*>& models,
                   const std::vector<std::vector<const Head*>>& received) {
    if (models.size() != received.size()) {
        throw Error(ErrorCode::LengthMismatch, "model/received lengths disagree");
    }
    // Compute all means first so one client's update cannot leak into
    // another's average.
    std::vector<std::vector<double>> new_weights(models.size());
    std::vector<std::vector<double>> new_biases(models.size());
    for (std::size_t k = 0; k < models.size(); ++k) {
        const Head& own = models[k]->head;
        std::vector<const Head*> heads{&own};
        for (const Head* h : received[k]) heads.push_back(h);
        for (const Head* h : heads) {
            if (h->weight.shape() != own.weight.shape() || h->bias.shape() != own.bias.shape()) {
                throw Error(ErrorCode::HeterogeneousModels, "aggregated-head needs identical head shapes");
            }
        }
        std::vector<double> w(own.weight.size(), 0.0), b(own.bias.size(), 0.0);
        for (const Head* h : heads) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += h->weight.values()[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += h->bias.values()[i];
        }
        double inv = 1.0 / static_cast<double>(heads.size());
        for (auto& v : w) v *= inv;
        for (auto& v : b) v *= inv;
        new_weights[k] = std::move(w);
        new_biases[k] = std::move(b);
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
        std::copy(new_weights[k].begin(), new_weights[k].end(),
                  models[k]->head.weight.mutable_values().begin());
        std::copy(new_biases[k].begin(), new_biases[k].end(),
                  models[k]->head.bias.mutable_values().begin());
    }
}

}  // namespace dflmoe
