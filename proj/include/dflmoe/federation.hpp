#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dflmoe/baselines.hpp"
#include "dflmoe/data.hpp"
#include "dflmoe/model.hpp"
#include "dflmoe/netsim.hpp"

namespace dflmoe {

struct ClientSpec {
    BodySpec body;
    std::size_t feature_shift_factor = 1;
};

struct DatasetConfig {
    std::string kind = "synthetic";  // "synthetic" | "csv"
    std::size_t classes = 4;
    std::size_t input_dim = 32;
    std::size_t examples_per_client = 600;
    double noise_sigma = 0.5;
    double mean_scale = 0.8;
    double train_fraction = 0.7;
    std::string csv_path;
    std::string csv_label_column = "label";
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::size_t rounds = 100;
    BaselineKind variant = BaselineKind::Full;
    double lambda_loc = 0.5;
    double lambda_moe = 0.5;
    double lr_local = 0.001;
    double lr_moe = 0.0001;
    std::size_t batch_size = 8;
    std::size_t epochs_local = 1;
    std::size_t epochs_moe = 1;
    std::size_t common_dim = 0;  // 0 = max client feature dim
    bool relay_enabled = false;
    bool parallel_clients = false;
    bool check_freezing = false;
    std::vector<ClientSpec> clients;
    DatasetConfig dataset;
    double dirichlet_alpha = 0.5;
    FaultPlan faults;

    void validate() const;  // ConfigInvalid with a field-naming message
};

ExperimentConfig default_experiment_config();

/// One client of the federation.
struct ClientState {
    int id = -1;
    ClientModel model;
    Dataset train_split;
    Dataset test_split;
    std::map<int, Head> registry;  // peer id -> freshest received head
    double lr_local = 0.0;
    double lr_moe = 0.0;
    Rng shuffle_local;  // phase-A minibatch order
    Rng shuffle_moe;    // phase-C minibatch order (separate stream)
    Rng fst_init;       // transforms for newly seen experts
    // False for variants without fusion (the aggregated-head ablation keeps
    // a registry for averaging but never builds experts from it).
    bool fuse_remote_experts = true;
};

struct RoundPlan {
    std::size_t round_index = 0;
    std::size_t epochs_local = 1;
    std::size_t epochs_moe = 1;
    std::size_t batch_size = 8;
    double lambda_loc = 0.5;
    double lambda_moe = 0.5;
};

/// Expert lineup for one client: the local head first, then every
/// registered peer head in ascending owner id.
std::vector<ExpertRef> expert_lineup(const ClientState& client);

/// Phase A: epochs of SGD on the combined local + MoE loss; only body and
/// head move. Returns the per-batch loss trace. Bumps head.version to
/// `round`.
std::vector<double> phase_local_train(ClientState& client, const RoundPlan& plan, int round);

/// Phase C: epochs of SGD on the MoE decision loss; only the transform and
/// MoE groups move. Initializes transforms/gates for newly seen experts.
/// Returns the per-batch loss trace.
std::vector<double> phase_moe_train(ClientState& client, const RoundPlan& plan);

/// Applies one delivered packet: upserts the receiver's registry unless the
/// packet is stale or self-originated. Returns true when stored.
bool accept_head_packet(ClientState& client, const HeadPacket& packet);

struct RoundRecord {
    int round = -1;
    int client_id = -1;
    std::string variant;
    double acc = 0.0;
    double mf1 = 0.0;
    std::optional<double> loss_local_mean;
    std::optional<double> loss_moe_mean;
    std::uint64_t heads_delivered = 0;
    std::uint64_t params_shared = 0;
    std::uint64_t bytes_shared = 0;
    bool active = true;
};

struct ExperimentResult {
    std::vector<RoundRecord> records;  // round -1 evaluation first, then per round
    CommLedger ledger;
    CommReport comm;
    std::vector<int> active_ids;
    std::size_t freeze_violations = 0;
    double mean_final_acc = 0.0;
    double mean_final_mf1 = 0.0;
    std::map<int, double> final_acc;
    std::map<int, double> final_mf1;
};

/// Full experiment: builds data, clients and netsim from the config, runs
/// `rounds` rounds of A -> B -> C -> evaluate, and returns every record.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// The federation with its netsim, for tests that drive rounds manually.
class Federation {
  public:
    explicit Federation(const ExperimentConfig& config);

    std::vector<ClientState>& clients() { return clients_; }
    NetSim& net() { return net_; }
    const ExperimentConfig& config() const { return config_; }
    const std::vector<int>& active_ids() const { return active_ids_; }
    std::size_t freeze_violations() const { return freeze_violations_; }

    /// Executes phases A, B (unless the variant skips exchange) and C for
    /// one round, plus the variant's aggregation hooks, then evaluates.
    std::vector<RoundRecord> run_round(std::size_t round);

    /// Round "-1" evaluation of the untrained models.
    std::vector<RoundRecord> evaluate_untrained();

    CommReport comm() const;

  private:
    ClientState* find_client(int id);
    RoundRecord evaluate_client(const ClientState& client, int round) const;
    void check_frozen(const std::vector<double>& before, const std::vector<double>& after);

    ExperimentConfig config_;
    std::vector<ClientState> clients_;
    std::vector<int> active_ids_;
    NetSim net_;
    std::size_t freeze_violations_ = 0;
};

}  // namespace dflmoe
