#include "dflmoe/federation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <mutex>
#include <thread>

#include "dflmoe/metrics.hpp"

namespace dflmoe {

namespace {

// Sub-stream tags under the training seed.
constexpr std::uint64_t kDataTag = 1;
constexpr std::uint64_t kPartitionTag = 2;
constexpr std::uint64_t kSplitTag = 3;
constexpr std::uint64_t kClientBase = 1000;

FusionRule fusion_for(BaselineKind variant) {
    switch (variant) {
        case BaselineKind::NoMoE: return FusionRule::SoftmaxGate;
        case BaselineKind::NoFST: return FusionRule::CrossAttentionNoFst;
        default: return FusionRule::CrossAttention;
    }
}

bool variant_exchanges(BaselineKind variant) {
    return variant != BaselineKind::LocalOnly && variant != BaselineKind::FedAvg;
}

bool variant_runs_moe_phase(BaselineKind variant) {
    switch (variant) {
        case BaselineKind::Full:
        case BaselineKind::NoMoE:
        case BaselineKind::NoFST:
        case BaselineKind::CentralizedMoEFST: return true;
        default: return false;
    }
}

bool variant_evaluates_local(BaselineKind variant) {
    return variant == BaselineKind::LocalOnly || variant == BaselineKind::FedAvg ||
           variant == BaselineKind::AggregatedHead;
}

Tensor gather_features(const Dataset& ds, const std::vector<std::size_t>& rows) {
    std::size_t dim = ds.dim();
    std::vector<double> out(rows.size() * dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(ds.features.values().begin() + rows[i] * dim, dim, out.begin() + i * dim);
    }
    return Tensor::from_data({rows.size(), dim}, std::move(out));
}

std::vector<std::size_t> gather_labels(const Dataset& ds, const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = ds.labels[rows[i]];
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (clients.size() < 2) throw Error(ErrorCode::ConfigInvalid, "clients: need at least 2");
    if (lambda_loc < 0.0 || lambda_moe < 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "lambda_loc/lambda_moe: must be nonnegative");
    }
    if (lr_local < 0.0) throw Error(ErrorCode::ConfigInvalid, "lr_local: must be nonnegative");
    if (lr_moe < 0.0) throw Error(ErrorCode::ConfigInvalid, "lr_moe: must be nonnegative");
    if (batch_size == 0) throw Error(ErrorCode::ConfigInvalid, "batch_size: must be positive");
    if (epochs_local == 0) throw Error(ErrorCode::ConfigInvalid, "epochs_local: must be positive");
    if (epochs_moe == 0) throw Error(ErrorCode::ConfigInvalid, "epochs_moe: must be positive");
    if (faults.link_drop_rate < 0.0 || faults.link_drop_rate > 1.0) {
        throw Error(ErrorCode::ConfigInvalid, "faults.link_drop_rate: must be in [0, 1]");
    }
    if (dataset.kind != "synthetic" && dataset.kind != "csv") {
        throw Error(ErrorCode::ConfigInvalid, "dataset.kind: must be 'synthetic' or 'csv'");
    }
    if (dataset.kind == "csv" && dataset.csv_path.empty()) {
        throw Error(ErrorCode::ConfigInvalid, "dataset.csv_path: required for csv datasets");
    }
    if (dataset.train_fraction <= 0.0 || dataset.train_fraction >= 1.0) {
        throw Error(ErrorCode::ConfigInvalid, "dataset.train_fraction: must be in (0, 1)");
    }
    if (dirichlet_alpha <= 0.0) throw Error(ErrorCode::ConfigInvalid, "dirichlet_alpha: must be positive");
    int n = static_cast<int>(clients.size());
    for (int removed : faults.removed_clients) {
        if (removed < 0 || removed >= n) {
            throw Error(ErrorCode::ConfigInvalid, "faults.removed_clients: unknown client id");
        }
    }
    for (const auto& [from, to] : faults.severed_links) {
        if (from < 0 || from >= n || to < 0 || to >= n) {
            throw Error(ErrorCode::ConfigInvalid, "faults.severed_links: unknown client id");
        }
    }
    for (const auto& spec : clients) {
        if (spec.body.input_dim == 0) {
            throw Error(ErrorCode::ConfigInvalid, "clients.body.input_dim: must be positive");
        }
        if (spec.body.feature_dim == 0) {
            throw Error(ErrorCode::ConfigInvalid, "clients.body.feature_dim: must be positive");
        }
        if (spec.feature_shift_factor != 1 && spec.feature_shift_factor != 2 &&
            spec.feature_shift_factor != 4 && spec.feature_shift_factor != 8) {
            throw Error(ErrorCode::ConfigInvalid, "clients.feature_shift_factor: must be 1, 2, 4 or 8");
        }
        if (dataset.input_dim % spec.feature_shift_factor != 0) {
            throw Error(ErrorCode::ConfigInvalid,
                        "clients.feature_shift_factor: must divide dataset.input_dim");
        }
        if (spec.body.input_dim != dataset.input_dim && dataset.kind == "synthetic") {
            throw Error(ErrorCode::ConfigInvalid, "clients.body.input_dim: must match dataset.input_dim");
        }
    }
    bool same_feature_dim = true;
    bool same_body = true;
    for (const auto& spec : clients) {
        same_feature_dim = same_feature_dim && spec.body.feature_dim == clients[0].body.feature_dim;
        same_body = same_body && spec.body.input_dim == clients[0].body.input_dim &&
                    spec.body.hidden_dims == clients[0].body.hidden_dims &&
                    spec.body.feature_dim == clients[0].body.feature_dim;
    }
    if (variant == BaselineKind::NoFST && !same_feature_dim) {
        throw Error(ErrorCode::DimensionalIncompatibility,
                    "variant no_fst: clients must share feature_dim");
    }
    if (variant == BaselineKind::FedAvg && !same_body) {
        throw Error(ErrorCode::HeterogeneousModels, "variant fedavg: clients must share the body spec");
    }
    if ((variant == BaselineKind::CentralizedMoEFST || variant == BaselineKind::AggregatedHead) &&
        !same_feature_dim) {
        throw Error(ErrorCode::HeterogeneousModels,
                    "variant " + baseline_name(variant) + ": clients must share feature_dim");
    }
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig config;
    config.clients.resize(4);
    for (auto& spec : config.clients) {
        spec.body.input_dim = 32;
        spec.body.hidden_dims = {64};
        spec.body.feature_dim = 32;
    }
    config.faults.seed = 99;
    return config;
}

std::vector<ExpertRef> expert_lineup(const ClientState& client) {
    std::vector<ExpertRef> lineup;
    lineup.reserve(client.registry.size() + 1);
    lineup.push_back({client.id, &client.model.head});
    if (client.fuse_remote_experts) {
        for (const auto& [id, head] : client.registry) lineup.push_back({id, &head});
    }
    return lineup;
}

namespace {

std::vector<std::vector<std::size_t>> minibatch_plan(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

/// Trainable parameters of the MoE-decision phase under the current
/// registry. The transform side only joins once remote experts exist
/// (nothing else of it appears in the graph).
std::vector<Tensor> moe_phase_params(ClientState& client) {
    std::vector<Tensor> params;
    ClientModel& model = client.model;
    switch (model.fusion) {
        case FusionRule::CrossAttention:
            params = group_params(model, ParamGroup::Moe);
            if (!client.registry.empty()) {
                auto fst = group_params(model, ParamGroup::Fst);
                params.insert(params.end(), fst.begin(), fst.end());
            }
            break;
        case FusionRule::CrossAttentionNoFst:
            params = group_params(model, ParamGroup::Moe);
            break;
        case FusionRule::SoftmaxGate:
            params = group_params(model, ParamGroup::Moe);  // the gate columns
            if (!client.registry.empty()) {
                auto fst = group_params(model, ParamGroup::Fst);
                params.insert(params.end(), fst.begin(), fst.end());
            }
            break;
    }
    return params;
}

void set_moe_phase_trainable(ClientState& client, bool on) {
    ClientModel& model = client.model;
    set_group_trainable(model, ParamGroup::Moe, on);
    if (model.fusion != FusionRule::CrossAttentionNoFst) {
        set_group_trainable(model, ParamGroup::Fst, on);
    }
}

}  // namespace

std::vector<double> phase_local_train(ClientState& client, const RoundPlan& plan, int round) {
    if (client.train_split.size() == 0) {
        throw Error(ErrorCode::DataEmpty, "client " + std::to_string(client.id) + " has no training data");
    }
    ClientModel& model = client.model;
    set_group_trainable(model, ParamGroup::Body, true);
    set_group_trainable(model, ParamGroup::Head, true);
    set_moe_phase_trainable(client, false);

    auto params = group_params(model, ParamGroup::Body);
    auto head_params = group_params(model, ParamGroup::Head);
    params.insert(params.end(), head_params.begin(), head_params.end());

    auto lineup = expert_lineup(client);
    std::vector<double> trace;
    for (std::size_t epoch = 0; epoch < plan.epochs_local; ++epoch) {
        auto batches = minibatch_plan(client.train_split.size(), plan.batch_size, client.shuffle_local);
        for (const auto& batch : batches) {
            GradGraph::current().clear();
            Tensor x = gather_features(client.train_split, batch);
            auto y = gather_labels(client.train_split, batch);
            Tensor loss = local_loss(model, x, y, lineup, plan.lambda_loc, plan.lambda_moe);
            trace.push_back(loss.item());
            backward(loss);
            sgd_step(params, client.lr_local);
        }
    }
    model.head.version = round;
    return trace;
}

std::vector<double> phase_moe_train(ClientState& client, const RoundPlan& plan) {
    if (client.train_split.size() == 0) {
        throw Error(ErrorCode::DataEmpty, "client " + std::to_string(client.id) + " has no training data");
    }
    ClientModel& model = client.model;

    // First sighting of an expert: create its transform (and gate column),
    // drawn from the client's dedicated stream in ascending id order.
    for (const auto& [id, head] : client.registry) {
        if (model.fusion != FusionRule::CrossAttentionNoFst && !model.fst.per_expert.count(id)) {
            model.fst.per_expert.emplace(
                id, init_linear_weight(model.common_dim, head.weight.rows(), client.fst_init));
        }
        if (model.fusion == FusionRule::SoftmaxGate && !model.moe.gate.count(id)) {
            model.moe.gate.emplace(id, Tensor::zeros({model.body.spec.feature_dim, 1}, true));
        }
    }

    set_group_trainable(model, ParamGroup::Body, false);
    set_group_trainable(model, ParamGroup::Head, false);
    set_moe_phase_trainable(client, true);
    auto params = moe_phase_params(client);

    auto lineup = expert_lineup(client);
    std::vector<double> trace;
    for (std::size_t epoch = 0; epoch < plan.epochs_moe; ++epoch) {
        auto batches = minibatch_plan(client.train_split.size(), plan.batch_size, client.shuffle_moe);
        for (const auto& batch : batches) {
            GradGraph::current().clear();
            Tensor x = gather_features(client.train_split, batch);
            auto y = gather_labels(client.train_split, batch);
            Tensor loss = moe_decision_loss(model, x, y, lineup);
            trace.push_back(loss.item());
            backward(loss);
            sgd_step(params, client.lr_moe);
        }
    }
    return trace;
}

bool accept_head_packet(ClientState& client, const HeadPacket& packet) {
    if (packet.origin_id == client.id) return false;  // self-packets are discarded
    Head head = open_head_packet(packet);
    auto it = client.registry.find(head.owner_id);
    if (it != client.registry.end() && it->second.version > head.version) return false;
    client.registry[head.owner_id] = std::move(head);
    return true;
}

Federation::Federation(const ExperimentConfig& config)
    // validate() runs before the net is built; members before it are defaults
    : config_(config), net_((config.validate(), config.faults)) {
    std::size_t n = config_.clients.size();

    Dataset source;
    if (config_.dataset.kind == "synthetic") {
        source = make_synthetic(config_.dataset.classes, config_.dataset.input_dim,
                                config_.dataset.examples_per_client * n,
                                derive_seed(config_.seed, kDataTag), config_.dataset.noise_sigma,
                                config_.dataset.mean_scale);
    } else {
        source = load_csv(config_.dataset.csv_path, CsvSchema{config_.dataset.csv_label_column});
    }
    std::size_t classes = source.classes;

    PartitionSpec part;
    part.n_clients = n;
    part.dirichlet_alpha = config_.dirichlet_alpha;
    part.seed = derive_seed(config_.seed, kPartitionTag);
    for (const auto& spec : config_.clients) part.feature_shift_factors.push_back(spec.feature_shift_factor);
    auto parts = dirichlet_partition(source, part);

    std::size_t common_dim = config_.common_dim;
    if (common_dim == 0) {
        for (const auto& spec : config_.clients) common_dim = std::max(common_dim, spec.body.feature_dim);
    }

    FusionRule fusion = fusion_for(config_.variant);
    clients_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ClientSpec& spec = config_.clients[i];
        Dataset shifted = feature_shift(parts[i], spec.feature_shift_factor);
        Rng split_rng(derive_seed(derive_seed(config_.seed, kSplitTag), i));
        auto [train, test] = train_test_split(shifted, config_.dataset.train_fraction, split_rng);

        std::uint64_t client_seed = derive_seed(config_.seed, kClientBase + i);
        Rng init_rng(derive_seed(client_seed, 0));
        BodySpec body = spec.body;
        if (config_.dataset.kind == "csv") body.input_dim = source.dim();

        ClientState client{
            .id = static_cast<int>(i),
            .model = make_client_model(body, classes, common_dim, static_cast<int>(i), init_rng, fusion),
            .train_split = std::move(train),
            .test_split = std::move(test),
            .registry = {},
            .lr_local = config_.lr_local,
            .lr_moe = config_.lr_moe,
            .shuffle_local = Rng(derive_seed(client_seed, 1)),
            .shuffle_moe = Rng(derive_seed(client_seed, 2)),
            .fst_init = Rng(derive_seed(client_seed, 3)),
            .fuse_remote_experts = !variant_evaluates_local(config_.variant),
        };
        clients_.push_back(std::move(client));
    }

    std::vector<int> all_ids;
    for (std::size_t i = 0; i < n; ++i) all_ids.push_back(static_cast<int>(i));
    active_ids_ = apply_client_disconnect(config_.faults, all_ids);
}

ClientState* Federation::find_client(int id) {
    for (auto& c : clients_) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

void Federation::check_frozen(const std::vector<double>& before, const std::vector<double>& after) {
    if (before.size() != after.size()) {
        ++freeze_violations_;
        return;
    }
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (std::memcmp(&before[i], &after[i], sizeof(double)) != 0) {
            ++freeze_violations_;
            return;
        }
    }
}

namespace {

std::vector<double> snapshot_registry(const ClientState& client) {
    std::vector<double> out;
    for (const auto& [id, head] : client.registry) {
        out.insert(out.end(), head.weight.values().begin(), head.weight.values().end());
        out.insert(out.end(), head.bias.values().begin(), head.bias.values().end());
    }
    return out;
}

std::vector<double> snapshot_moe_side(const ClientState& client) {
    auto out = snapshot_group(client.model, ParamGroup::Fst);
    auto moe = snapshot_group(client.model, ParamGroup::Moe);
    out.insert(out.end(), moe.begin(), moe.end());
    return out;
}

std::vector<double> snapshot_local_side(const ClientState& client) {
    auto out = snapshot_group(client.model, ParamGroup::Body);
    auto head = snapshot_group(client.model, ParamGroup::Head);
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

void run_over_clients(const std::vector<int>& ids, bool parallel,
                      const std::function<void(int)>& fn) {
    if (!parallel) {
        for (int id : ids) fn(id);
        return;
    }
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    threads.reserve(ids.size());
    for (int id : ids) {
        threads.emplace_back([&, id] {
            try {
                fn(id);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

RoundRecord Federation::evaluate_client(const ClientState& client, int round) const {
    NoGradGuard no_grad;
    RoundRecord record;
    record.round = round;
    record.client_id = client.id;
    record.variant = baseline_name(config_.variant);
    std::vector<std::size_t> preds;
    if (variant_evaluates_local(config_.variant)) {
        preds = argmax_rows(local_output(client.model, client.test_split.features));
    } else {
        preds = inference(client.model, client.test_split.features, expert_lineup(client));
    }
    record.acc = accuracy(preds, client.test_split.labels);
    record.mf1 = macro_f1(preds, client.test_split.labels, client.test_split.classes);
    return record;
}

std::vector<RoundRecord> Federation::evaluate_untrained() {
    std::vector<RoundRecord> records;
    for (const auto& client : clients_) {
        RoundRecord record = evaluate_client(client, -1);
        record.active = !config_.faults.removed_clients.count(client.id);
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<RoundRecord> Federation::run_round(std::size_t round) {
    const BaselineKind variant = config_.variant;
    RoundPlan plan{
        .round_index = round,
        .epochs_local = config_.epochs_local,
        .epochs_moe = config_.epochs_moe,
        .batch_size = config_.batch_size,
        .lambda_loc = config_.lambda_loc,
        .lambda_moe = config_.lambda_moe,
    };

    std::map<int, double> loss_local_mean;
    std::map<int, double> loss_moe_mean;

    // Phase A: local network training.
    std::mutex record_mutex;
    run_over_clients(active_ids_, config_.parallel_clients, [&](int id) {
        ClientState& client = *find_client(id);
        std::vector<double> frozen_before;
        std::vector<double> registry_before;
        if (config_.check_freezing) {
            frozen_before = snapshot_moe_side(client);
            registry_before = snapshot_registry(client);
        }
        auto trace = phase_local_train(client, plan, static_cast<int>(round));
        if (config_.check_freezing) {
            check_frozen(frozen_before, snapshot_moe_side(client));
            check_frozen(registry_before, snapshot_registry(client));
        }
        double mean = 0.0;
        for (double v : trace) mean += v;
        if (!trace.empty()) mean /= static_cast<double>(trace.size());
        std::lock_guard<std::mutex> lock(record_mutex);
        loss_local_mean[id] = mean;
    });

    if (variant == BaselineKind::FedAvg) {
        std::vector<ClientModel*> models;
        std::vector<std::size_t> counts;
        for (int id : active_ids_) {
            ClientState& client = *find_client(id);
            models.push_back(&client.model);
            counts.push_back(client.train_split.size());
        }
        fedavg_aggregate(models, counts);
    }

    // Phase B: head exchange over the simulated network.
    std::map<int, std::uint64_t> heads_delivered;
    std::map<int, std::uint64_t> params_shared;
    std::map<int, std::uint64_t> bytes_shared;
    for (int id : active_ids_) {
        heads_delivered[id] = 0;
        params_shared[id] = 0;
        bytes_shared[id] = 0;
    }
    if (variant_exchanges(variant)) {
        // Relay re-broadcasts what was known before this round's deliveries.
        std::map<int, std::vector<HeadPacket>> relay_known;
        if (config_.relay_enabled) {
            for (int id : active_ids_) {
                ClientState& client = *find_client(id);
                auto& known = relay_known[id];
                for (const auto& [peer, head] : client.registry) known.push_back(make_head_packet(head));
            }
        }

        std::map<int, HeadPacket> packets;
        for (int id : active_ids_) {
            HeadPacket pkt = make_head_packet(find_client(id)->model.head);
            audit_head_packet(pkt);
            packets.emplace(id, std::move(pkt));
        }
        DeliveryReport direct = net_.broadcast_heads(packets, round);
        for (const auto& d : direct.attempts) {
            params_shared[d.from] += d.params;
            bytes_shared[d.from] += d.bytes;
            if (d.delivered && accept_head_packet(*find_client(d.to), packets.at(d.from))) {
                heads_delivered[d.to] += 1;
            }
        }

        if (config_.relay_enabled) {
            DeliveryReport relayed = net_.relay_forward(relay_known, round);
            for (const auto& d : relayed.attempts) {
                params_shared[d.from] += d.params;
                bytes_shared[d.from] += d.bytes;
                if (!d.delivered) continue;
                for (const auto& pkt : relay_known.at(d.from)) {
                    if (pkt.origin_id == d.origin) {
                        if (accept_head_packet(*find_client(d.to), pkt)) heads_delivered[d.to] += 1;
                        break;
                    }
                }
            }
        }
    }

    if (variant == BaselineKind::AggregatedHead) {
        std::vector<ClientModel*> models;
        std::vector<std::vector<const Head*>> received;
        for (int id : active_ids_) {
            ClientState& client = *find_client(id);
            models.push_back(&client.model);
            std::vector<const Head*> known;
            for (const auto& [peer, head] : client.registry) known.push_back(&head);
            received.push_back(std::move(known));
        }
        average_heads(models, received);
    }

    // Phase C: MoE decision training.
    if (variant_runs_moe_phase(variant)) {
        run_over_clients(active_ids_, config_.parallel_clients, [&](int id) {
            ClientState& client = *find_client(id);
            std::vector<double> frozen_before;
            std::vector<double> registry_before;
            if (config_.check_freezing) {
                frozen_before = snapshot_local_side(client);
                registry_before = snapshot_registry(client);
            }
            auto trace = phase_moe_train(client, plan);
            if (config_.check_freezing) {
                check_frozen(frozen_before, snapshot_local_side(client));
                check_frozen(registry_before, snapshot_registry(client));
            }
            double mean = 0.0;
            for (double v : trace) mean += v;
            if (!trace.empty()) mean /= static_cast<double>(trace.size());
            std::lock_guard<std::mutex> lock(record_mutex);
            loss_moe_mean[id] = mean;
        });
        if (variant == BaselineKind::CentralizedMoEFST) {
            std::vector<ClientModel*> models;
            for (int id : active_ids_) models.push_back(&find_client(id)->model);
            average_fst_moe(models);
        }
    }

    // Evaluate.
    std::vector<RoundRecord> records;
    for (int id : active_ids_) {
        ClientState& client = *find_client(id);
        RoundRecord record = evaluate_client(client, static_cast<int>(round));
        record.loss_local_mean = loss_local_mean.at(id);
        if (loss_moe_mean.count(id)) record.loss_moe_mean = loss_moe_mean.at(id);
        record.heads_delivered = heads_delivered.at(id);
        record.params_shared = params_shared.at(id);
        record.bytes_shared = bytes_shared.at(id);
        records.push_back(std::move(record));
    }
    return records;
}

CommReport Federation::comm() const {
    std::vector<const ClientModel*> models;
    for (int id : active_ids_) {
        for (const auto& c : clients_) {
            if (c.id == id) models.push_back(&c.model);
        }
    }
    return comm_report(models, active_ids_);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    Federation fed(config);
    ExperimentResult result;
    auto initial = fed.evaluate_untrained();
    result.records.insert(result.records.end(), initial.begin(), initial.end());
    for (std::size_t round = 0; round < config.rounds; ++round) {
        auto records = fed.run_round(round);
        result.records.insert(result.records.end(), records.begin(), records.end());
    }
    result.ledger = fed.net().ledger();
    result.comm = fed.comm();
    result.active_ids = fed.active_ids();
    result.freeze_violations = fed.freeze_violations();

    // Final metrics come from the last emitted round (round -1 when no
    // training rounds ran).
    int last_round = config.rounds == 0 ? -1 : static_cast<int>(config.rounds) - 1;
    double acc_total = 0.0, mf1_total = 0.0;
    std::size_t counted = 0;
    for (const auto& record : result.records) {
        if (record.round != last_round || !record.active) continue;
        result.final_acc[record.client_id] = record.acc;
        result.final_mf1[record.client_id] = record.mf1;
        acc_total += record.acc;
        mf1_total += record.mf1;
        ++counted;
    }
    if (counted > 0) {
        result.mean_final_acc = acc_total / static_cast<double>(counted);
        result.mean_final_mf1 = mf1_total / static_cast<double>(counted);
    }
    return result;
}

}  // namespace dflmoe
