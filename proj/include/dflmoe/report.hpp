#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dflmoe/config.hpp"
#include "dflmoe/federation.hpp"

namespace dflmoe {

nlohmann::json round_record_json(const RoundRecord& record);
RoundRecord round_record_from_json(const nlohmann::json& j);

/// One JSON object per line, in emission order (round -1 first).
void write_rounds_jsonl(const std::string& path, const std::vector<RoundRecord>& records);
std::vector<RoundRecord> read_rounds_jsonl(const std::string& path);

/// Final summary: per-client and mean metrics, the communication ledger
/// totals, head/full parameter ratios, and the fully resolved config.
nlohmann::json summary_json(const ExperimentConfig& config, const ExperimentResult& result);

/// Writes rounds.jsonl, summary.json and resolved_config.json into `dir`
/// (created if needed).
void write_experiment_outputs(const std::string& dir, const ExperimentConfig& config,
                              const ExperimentResult& result);

}  // namespace dflmoe
