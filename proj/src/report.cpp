#include "dflmoe/report.hpp"

#include <filesystem>
#include <fstream>

namespace dflmoe {

using nlohmann::json;

namespace {

constexpr int kRecordSchemaVersion = 1;

}  // namespace

json round_record_json(const RoundRecord& record) {
    json j = {
        {"schema_version", kRecordSchemaVersion},
        {"round", record.round},
        {"client_id", record.client_id},
        {"variant", record.variant},
        {"acc", record.acc},
        {"mf1", record.mf1},
        {"heads_delivered", record.heads_delivered},
        {"params_shared", record.params_shared},
        {"bytes_shared", record.bytes_shared},
        {"active", record.active},
    };
    j["loss_local_mean"] = record.loss_local_mean ? json(*record.loss_local_mean) : json(nullptr);
    j["loss_moe_mean"] = record.loss_moe_mean ? json(*record.loss_moe_mean) : json(nullptr);
    return j;
}

RoundRecord round_record_from_json(const json& j) {
    RoundRecord record;
    record.round = j.at("round").get<int>();
    record.client_id = j.at("client_id").get<int>();
    record.variant = j.at("variant").get<std::string>();
    record.acc = j.at("acc").get<double>();
    record.mf1 = j.at("mf1").get<double>();
    if (!j.at("loss_local_mean").is_null()) record.loss_local_mean = j.at("loss_local_mean").get<double>();
    if (!j.at("loss_moe_mean").is_null()) record.loss_moe_mean = j.at("loss_moe_mean").get<double>();
    record.heads_delivered = j.at("heads_delivered").get<std::uint64_t>();
    record.params_shared = j.at("params_shared").get<std::uint64_t>();
    record.bytes_shared = j.at("bytes_shared").get<std::uint64_t>();
    record.active = j.at("active").get<bool>();
    return record;
}

void write_rounds_jsonl(const std::string& path, const std::vector<RoundRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingArtifacts, "cannot open " + path + " for writing");
    for (const auto& record : records) out << round_record_json(record).dump() << "\n";
}

std::vector<RoundRecord> read_rounds_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::MissingArtifacts, "missing " + path);
    std::vector<RoundRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(ErrorCode::ParseError, path + ": line " + std::to_string(line_no) + " is not JSON");
        }
        records.push_back(round_record_from_json(j));
    }
    return records;
}

json summary_json(const ExperimentConfig& config, const ExperimentResult& result) {
    json per_client = json::array();
    for (const auto& [id, acc] : result.final_acc) {
        per_client.push_back({
            {"client_id", id},
            {"acc", acc},
            {"mf1", result.final_mf1.at(id)},
        });
    }
    const auto& totals = result.ledger.cumulative;
    json comm = {
        {"packets_sent", totals.packets_sent},
        {"packets_delivered", totals.packets_delivered},
        {"packets_dropped", totals.packets_dropped},
        {"bytes_sent", totals.bytes_sent},
        {"params_sent", totals.params_sent},
        {"relay_packets_sent", totals.relay_packets_sent},
        {"relay_packets_delivered", totals.relay_packets_delivered},
        {"relay_packets_dropped", totals.relay_packets_dropped},
        {"relay_bytes_sent", totals.relay_bytes_sent},
        {"relay_params_sent", totals.relay_params_sent},
        {"head_params", result.comm.head_params},
        {"full_model_params", result.comm.full_model_params},
        {"head_to_full_ratio", result.comm.ratios},
        {"head_to_full_ratio_mean", result.comm.mean_ratio},
    };
    return {
        {"schema_version", kRecordSchemaVersion},
        {"variant", baseline_name(config.variant)},
        {"rounds", config.rounds},
        {"active_clients", result.active_ids},
        {"mean_acc", result.mean_final_acc},
        {"mean_mf1", result.mean_final_mf1},
        {"per_client", per_client},
        {"freeze_violations", result.freeze_violations},
        {"comm", comm},
        {"resolved_config", resolved_config_json(config)},
    };
}

void write_experiment_outputs(const std::string& dir, const ExperimentConfig& config,
                              const ExperimentResult& result) {
    std::filesystem::create_directories(dir);
    write_rounds_jsonl(dir + "/rounds.jsonl", result.records);
    std::ofstream summary(dir + "/summary.json", std::ios::trunc);
    if (!summary) throw Error(ErrorCode::MissingArtifacts, "cannot write " + dir + "/summary.json");
    summary << summary_json(config, result).dump(2) << "\n";
    std::ofstream resolved(dir + "/resolved_config.json", std::ios::trunc);
    if (!resolved) throw Error(ErrorCode::MissingArtifacts, "cannot write " + dir + "/resolved_config.json");
    resolved << resolved_config_json(config).dump(2) << "\n";
}

}  // namespace dflmoe
