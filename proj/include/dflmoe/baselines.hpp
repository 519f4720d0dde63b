#pragma once

#include <string>
#include <vector>

#include "dflmoe/model.hpp"

namespace dflmoe {

/// Experiment variant selector. Full is the complete system; the others are
/// the comparison baselines and ablations.
enum class BaselineKind {
    Full,
    LocalOnly,
    FedAvg,
    NoMoE,              // attention fusion replaced by a learned softmax gate
    NoFST,              // feature space transform removed (homogeneous dims only)
    CentralizedMoEFST,  // FST + MoE parameters averaged across clients after phase C
    AggregatedHead,     // heads replaced by their mean after exchange; no fusion
};

std::string baseline_name(BaselineKind kind);
BaselineKind baseline_from_name(const std::string& name);

/// Sample-count weighted average of every body+head parameter across
/// clients; all clients receive the aggregate. HeterogeneousModels unless
/// all parameter shapes agree.
void fedavg_aggregate(std::vector<ClientModel*>& models, const std::vector<std::size_t>& sample_counts);

/// Unweighted mean of the FST + MoE groups across clients, written back to
/// every client. Transforms are averaged per expert id over the clients
/// that hold that id.
void average_fst_moe(std::vector<ClientModel*>& models);

/// Every model's head <- unweighted mean over (own head + given heads).
/// Used by the aggregated-head ablation after exchange.
void average_heads(std::vector<ClientModel*>& models,
                   const std::vector<std::vector<const Head*>>& received);

}  // namespace dflmoe
