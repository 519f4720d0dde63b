#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "dflmoe/rng.hpp"
#include "dflmoe/tensor.hpp"

namespace dflmoe {

/// Per-client body architecture. hidden_dims may be empty (single linear
/// map straight to the feature width).
struct BodySpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t feature_dim = 0;
};

/// MLP feature extractor: (linear -> relu)* followed by a final linear to
/// feature_dim. Parameter i of `weights` maps layer i's input to output.
struct Body {
    BodySpec spec;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

/// The only parameters that ever leave a client.
struct Head {
    Tensor weight;  // [feature_dim x classes]
    Tensor bias;    // [classes]
    int owner_id = -1;
    int version = -1;  // round of last local training; never decreases
};

/// Projections that carry a local feature into a remote expert's space:
/// first w_com into the common width, then the expert-specific map.
/// The local expert never appears in per_expert (identity transform).
struct FeatureSpaceTransform {
    Tensor w_com;                      // [feature_dim x common_dim]
    std::map<int, Tensor> per_expert;  // expert id -> [common_dim x expert_feature_dim]
};

/// Query projection for the cross-attention fusion. `gate` holds the
/// per-expert gating vectors used only by the softmax-gate fusion variant
/// (it replaces query_proj as the trainable MoE group there).
struct MoEHead {
    Tensor query_proj;            // [feature_dim x classes]
    std::map<int, Tensor> gate;   // expert id -> [feature_dim x 1], zero-initialized
};

/// How expert predictions are fused into the final output.
enum class FusionRule {
    CrossAttention,       // query from local feature, K = V = expert predictions
    CrossAttentionNoFst,  // as above but experts applied to the raw feature
    SoftmaxGate,          // learned gate softmax(feature . g_e) weighting predictions
};

struct ClientModel {
    Body body;
    Head head;
    FeatureSpaceTransform fst;
    MoEHead moe;
    std::size_t class_count = 0;
    std::size_t common_dim = 0;
    FusionRule fusion = FusionRule::CrossAttention;
};

enum class ParamGroup { Body, Head, Fst, Moe };

/// An expert as seen from one client: the local head first, then received
/// heads in ascending owner id.
struct ExpertRef {
    int id = -1;
    const Head* head = nullptr;
};

/// Weight init used everywhere: uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)),
/// biases zero (Kaiming-style fan-in bound).
Tensor init_linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

ClientModel make_client_model(const BodySpec& spec, std::size_t classes, std::size_t common_dim,
                              int owner_id, Rng& init_rng,
                              FusionRule fusion = FusionRule::CrossAttention);

/// F_b(x): [B x input_dim] -> [B x feature_dim].
Tensor body_forward(const ClientModel& model, const Tensor& x);

/// Local network output: head applied to the body feature.
Tensor local_output(const ClientModel& model, const Tensor& x);

/// One expert's prediction from a local feature. Remote experts go through
/// w_com then their per-expert transform; the local expert is applied
/// directly. Throws UnknownExpert when a remote id has no transform.
Tensor expert_prediction(const ClientModel& model, const Tensor& feature, const Head& expert,
                         int expert_id);

/// MoE fusion output over the given expert lineup (non-empty, local head
/// first).
Tensor moe_output(const ClientModel& model, const Tensor& x, const std::vector<ExpertRef>& experts);

/// Phase-A loss: lambda_loc * CE(local) + lambda_moe * CE(moe), sharing one
/// body pass. Only body and head parameters receive gradients when the
/// other groups are frozen.
Tensor local_loss(const ClientModel& model, const Tensor& x, const std::vector<std::size_t>& labels,
                  const std::vector<ExpertRef>& experts, double lambda_loc, double lambda_moe);

/// Phase-C loss: CE(moe).
Tensor moe_decision_loss(const ClientModel& model, const Tensor& x,
                         const std::vector<std::size_t>& labels, const std::vector<ExpertRef>& experts);

/// Argmax of the MoE output per row; ties break toward the lowest class
/// index.
std::vector<std::size_t> inference(const ClientModel& model, const Tensor& x,
                                   const std::vector<ExpertRef>& experts);

std::size_t param_count(const ClientModel& model, ParamGroup group);
/// Trainable parameters of one group, in a fixed order.
std::vector<Tensor> group_params(ClientModel& model, ParamGroup group);
void set_group_trainable(ClientModel& model, ParamGroup group, bool trainable);

/// Flat copy of a group's current values (freezing-contract snapshots).
std::vector<double> snapshot_group(const ClientModel& model, ParamGroup group);

std::vector<std::size_t> argmax_rows(const Tensor& logits);

}  // namespace dflmoe
