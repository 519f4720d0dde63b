#include "dflmoe/config.hpp"

#include <fstream>

namespace dflmoe {

using nlohmann::json;

namespace {

constexpr int kConfigSchemaVersion = 1;

json client_json(const ClientSpec& spec) {
    return {
        {"input_dim", spec.body.input_dim},
        {"hidden_dims", spec.body.hidden_dims},
        {"feature_dim", spec.body.feature_dim},
        {"feature_shift_factor", spec.feature_shift_factor},
    };
}

void reject_unknown_keys(const json& node, const json& reference, const std::string& path) {
    for (const auto& [key, value] : node.items()) {
        if (!reference.contains(key)) {
            throw Error(ErrorCode::ConfigInvalid, path + key + ": unknown key");
        }
        if (value.is_object() && reference.at(key).is_object()) {
            reject_unknown_keys(value, reference.at(key), path + key + ".");
        }
    }
}

template <typename T>
T get_field(const json& node, const std::string& key, const std::string& path) {
    try {
        return node.at(key).get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigInvalid, path + key + ": wrong type");
    }
}

// Deep merge of `overlay` onto `base` (objects recurse, everything else
// replaces).
json merge(const json& base, const json& overlay) {
    json out = base;
    for (const auto& [key, value] : overlay.items()) {
        if (value.is_object() && out.contains(key) && out.at(key).is_object()) {
            out[key] = merge(out.at(key), value);
        } else {
            out[key] = value;
        }
    }
    return out;
}

}  // namespace

json default_config_json() {
    ExperimentConfig defaults = default_experiment_config();
    return resolved_config_json(defaults);
}

json resolved_config_json(const ExperimentConfig& config) {
    json clients = json::array();
    for (const auto& spec : config.clients) clients.push_back(client_json(spec));
    json severed = json::array();
    for (const auto& [from, to] : config.faults.severed_links) severed.push_back({from, to});
    return {
        {"schema_version", kConfigSchemaVersion},
        {"seed", config.seed},
        {"rounds", config.rounds},
        {"variant", baseline_name(config.variant)},
        {"lambda_loc", config.lambda_loc},
        {"lambda_moe", config.lambda_moe},
        {"lr_local", config.lr_local},
        {"lr_moe", config.lr_moe},
        {"batch_size", config.batch_size},
        {"epochs_local", config.epochs_local},
        {"epochs_moe", config.epochs_moe},
        {"common_dim", config.common_dim},
        {"relay_enabled", config.relay_enabled},
        {"parallel_clients", config.parallel_clients},
        {"check_freezing", config.check_freezing},
        {"clients", clients},
        {"dataset",
         {
             {"kind", config.dataset.kind},
             {"classes", config.dataset.classes},
             {"input_dim", config.dataset.input_dim},
             {"examples_per_client", config.dataset.examples_per_client},
             {"noise_sigma", config.dataset.noise_sigma},
             {"mean_scale", config.dataset.mean_scale},
             {"train_fraction", config.dataset.train_fraction},
             {"csv_path", config.dataset.csv_path},
             {"csv_label_column", config.dataset.csv_label_column},
         }},
        {"partition", {{"dirichlet_alpha", config.dirichlet_alpha}}},
        {"faults",
         {
             {"seed", config.faults.seed},
             {"link_drop_rate", config.faults.link_drop_rate},
             {"severed_links", severed},
             {"removed_clients", config.faults.removed_clients},
         }},
    };
}

ExperimentConfig parse_config(const std::string& text) {
    json user = json::parse(text, nullptr, false);
    if (user.is_discarded()) throw Error(ErrorCode::ConfigInvalid, "config: invalid JSON");
    if (!user.is_object()) throw Error(ErrorCode::ConfigInvalid, "config: top level must be an object");

    json defaults = default_config_json();
    reject_unknown_keys(user, defaults, "");
    json merged = merge(defaults, user);

    ExperimentConfig config;
    config.seed = get_field<std::uint64_t>(merged, "seed", "");
    config.rounds = get_field<std::size_t>(merged, "rounds", "");
    config.variant = baseline_from_name(get_field<std::string>(merged, "variant", ""));
    config.lambda_loc = get_field<double>(merged, "lambda_loc", "");
    config.lambda_moe = get_field<double>(merged, "lambda_moe", "");
    config.lr_local = get_field<double>(merged, "lr_local", "");
    config.lr_moe = get_field<double>(merged, "lr_moe", "");
    config.batch_size = get_field<std::size_t>(merged, "batch_size", "");
    config.epochs_local = get_field<std::size_t>(merged, "epochs_local", "");
    config.epochs_moe = get_field<std::size_t>(merged, "epochs_moe", "");
    config.common_dim = get_field<std::size_t>(merged, "common_dim", "");
    config.relay_enabled = get_field<bool>(merged, "relay_enabled", "");
    config.parallel_clients = get_field<bool>(merged, "parallel_clients", "");
    config.check_freezing = get_field<bool>(merged, "check_freezing", "");

    const json& clients = merged.at("clients");
    if (!clients.is_array()) throw Error(ErrorCode::ConfigInvalid, "clients: must be an array");
    config.clients.clear();
    json client_defaults = client_json(default_experiment_config().clients[0]);
    for (std::size_t i = 0; i < clients.size(); ++i) {
        std::string path = "clients[" + std::to_string(i) + "].";
        if (!clients[i].is_object()) throw Error(ErrorCode::ConfigInvalid, path + " must be an object");
        reject_unknown_keys(clients[i], client_defaults, path);
        json c = merge(client_defaults, clients[i]);
        ClientSpec spec;
        spec.body.input_dim = get_field<std::size_t>(c, "input_dim", path);
        spec.body.hidden_dims = get_field<std::vector<std::size_t>>(c, "hidden_dims", path);
        spec.body.feature_dim = get_field<std::size_t>(c, "feature_dim", path);
        spec.feature_shift_factor = get_field<std::size_t>(c, "feature_shift_factor", path);
        config.clients.push_back(std::move(spec));
    }

    const json& ds = merged.at("dataset");
    config.dataset.kind = get_field<std::string>(ds, "kind", "dataset.");
    config.dataset.classes = get_field<std::size_t>(ds, "classes", "dataset.");
    config.dataset.input_dim = get_field<std::size_t>(ds, "input_dim", "dataset.");
    config.dataset.examples_per_client = get_field<std::size_t>(ds, "examples_per_client", "dataset.");
    config.dataset.noise_sigma = get_field<double>(ds, "noise_sigma", "dataset.");
    config.dataset.mean_scale = get_field<double>(ds, "mean_scale", "dataset.");
    config.dataset.train_fraction = get_field<double>(ds, "train_fraction", "dataset.");
    config.dataset.csv_path = get_field<std::string>(ds, "csv_path", "dataset.");
    config.dataset.csv_label_column = get_field<std::string>(ds, "csv_label_column", "dataset.");

    config.dirichlet_alpha = get_field<double>(merged.at("partition"), "dirichlet_alpha", "partition.");

    const json& faults = merged.at("faults");
    config.faults.seed = get_field<std::uint64_t>(faults, "seed", "faults.");
    config.faults.link_drop_rate = get_field<double>(faults, "link_drop_rate", "faults.");
    config.faults.severed_links.clear();
    const json& severed = faults.at("severed_links");
    if (!severed.is_array()) throw Error(ErrorCode::ConfigInvalid, "faults.severed_links: must be an array");
    for (const auto& link : severed) {
        if (!link.is_array() || link.size() != 2) {
            throw Error(ErrorCode::ConfigInvalid, "faults.severed_links: entries must be [from, to]");
        }
        config.faults.severed_links.emplace(link[0].get<int>(), link[1].get<int>());
    }
    config.faults.removed_clients.clear();
    for (const auto& id : faults.at("removed_clients")) {
        if (!id.is_number_integer()) {
            throw Error(ErrorCode::ConfigInvalid, "faults.removed_clients: entries must be integers");
        }
        config.faults.removed_clients.insert(id.get<int>());
    }

    config.validate();
    return config;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigInvalid, "config file not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

}  // namespace dflmoe
