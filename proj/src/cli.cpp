#include "dflmoe/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dflmoe/report.hpp"

namespace dflmoe {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

/// --seed beats DFLMOE_SEED beats the config file.
void apply_seed_override(ExperimentConfig& config, const std::optional<std::uint64_t>& cli_seed) {
    if (cli_seed) {
        config.seed = *cli_seed;
        return;
    }
    if (const char* env = std::getenv("DFLMOE_SEED")) {
        config.seed = std::strtoull(env, nullptr, 10);
    }
}

std::string resolve_out_dir(const std::string& cli_out, const std::string& fallback) {
    if (!cli_out.empty()) return cli_out;
    if (const char* env = std::getenv("DFLMOE_OUT")) return env;
    return fallback;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& out_dir) {
    ExperimentConfig config = parse_config_file(config_path);
    apply_seed_override(config, seed);
    std::string dir = resolve_out_dir(out_dir, "out");
    ExperimentResult result = run_experiment(config);
    write_experiment_outputs(dir, config, result);
    std::cout << "variant=" << baseline_name(config.variant) << " rounds=" << config.rounds
              << " mean_acc=" << format_metric(result.mean_final_acc)
              << " mean_mf1=" << format_metric(result.mean_final_mf1) << "\n"
              << "outputs written to " << dir << "\n";
    return kExitOk;
}

struct FaultSetting {
    std::string label;
    double link_drop_rate = 0.0;
    std::set<int> removed;
    bool is_drop = true;
};

std::set<int> parse_removed_group(const std::string& group) {
    std::set<int> ids;
    std::stringstream ss(group);
    std::string part;
    while (std::getline(ss, part, '+')) {
        if (part.empty()) throw Error(ErrorCode::ConfigInvalid, "remove-clients: empty id");
        ids.insert(std::stoi(part));
    }
    return ids;
}

int cmd_faults(const std::string& config_path, const std::optional<std::uint64_t>& seed,
               const std::string& out_dir, const std::vector<double>& drop_rates,
               const std::vector<std::string>& removed_groups) {
    ExperimentConfig base = parse_config_file(config_path);
    apply_seed_override(base, seed);
    std::string dir = resolve_out_dir(out_dir, "out");

    std::vector<FaultSetting> settings;
    for (double rate : drop_rates) {
        if (rate < 0.0 || rate > 1.0) {
            throw Error(ErrorCode::ConfigInvalid, "link-drop: rates must be in [0, 1]");
        }
        FaultSetting s;
        s.link_drop_rate = rate;
        s.label = "drop=" + format_metric(rate);
        settings.push_back(std::move(s));
    }
    for (const auto& group : removed_groups) {
        FaultSetting s;
        s.is_drop = false;
        s.removed = parse_removed_group(group);
        s.label = "removed=" + group;
        settings.push_back(std::move(s));
    }
    if (settings.empty()) throw Error(ErrorCode::ConfigInvalid, "faults: no settings given");

    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/faults.csv", std::ios::trunc);
    if (!csv) throw Error(ErrorCode::MissingArtifacts, "cannot write " + dir + "/faults.csv");
    csv << "setting,mean_acc,mean_mf1\n";
    for (std::size_t i = 0; i < settings.size(); ++i) {
        ExperimentConfig config = base;  // shared base seed across the sweep
        if (settings[i].is_drop) {
            config.faults.link_drop_rate = settings[i].link_drop_rate;
        } else {
            config.faults.removed_clients = settings[i].removed;
        }
        config.validate();
        ExperimentResult result = run_experiment(config);
        std::string subdir = dir + "/setting_" + std::to_string(i);
        write_experiment_outputs(subdir, config, result);
        csv << settings[i].label << "," << format_metric(result.mean_final_acc) << ","
            << format_metric(result.mean_final_mf1) << "\n";
        std::cout << settings[i].label << " mean_acc=" << format_metric(result.mean_final_acc)
                  << " mean_mf1=" << format_metric(result.mean_final_mf1) << "\n";
    }
    std::cout << "sweep written to " << dir << "/faults.csv\n";
    return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::optional<std::uint64_t>& seed,
               const std::string& out_dir) {
    ExperimentConfig base = parse_config_file(config_path);
    apply_seed_override(base, seed);
    std::string dir = resolve_out_dir(out_dir, "out");

    const std::vector<BaselineKind> variants = {
        BaselineKind::Full,           BaselineKind::NoMoE,          BaselineKind::NoFST,
        BaselineKind::CentralizedMoEFST, BaselineKind::AggregatedHead, BaselineKind::LocalOnly,
    };
    // Validate every variant before running any of them.
    for (BaselineKind kind : variants) {
        ExperimentConfig config = base;
        config.variant = kind;
        config.validate();
    }

    std::filesystem::create_directories(dir);
    std::ofstream csv(dir + "/ablation.csv", std::ios::trunc);
    if (!csv) throw Error(ErrorCode::MissingArtifacts, "cannot write " + dir + "/ablation.csv");
    csv << "variant,mean_acc,mean_mf1\n";
    std::cout << "variant              mean_acc  mean_mf1\n";
    for (BaselineKind kind : variants) {
        ExperimentConfig config = base;  // shared seeds across variants
        config.variant = kind;
        ExperimentResult result = run_experiment(config);
        write_experiment_outputs(dir + "/" + baseline_name(kind), config, result);
        csv << baseline_name(kind) << "," << format_metric(result.mean_final_acc) << ","
            << format_metric(result.mean_final_mf1) << "\n";
        std::printf("%-20s %8s  %8s\n", baseline_name(kind).c_str(),
                    format_metric(result.mean_final_acc).c_str(),
                    format_metric(result.mean_final_mf1).c_str());
    }
    std::cout << "ablation table written to " << dir << "/ablation.csv\n";
    return kExitOk;
}

int cmd_report(const std::string& dir) {
    std::string rounds_path = dir + "/rounds.jsonl";
    if (!std::filesystem::exists(rounds_path)) {
        throw Error(ErrorCode::MissingArtifacts, rounds_path + " not found");
    }
    auto records = read_rounds_jsonl(rounds_path);
    if (records.empty()) throw Error(ErrorCode::MissingArtifacts, rounds_path + " has no records");

    std::string summary_path = dir + "/summary.json";
    if (!std::filesystem::exists(summary_path)) {
        throw Error(ErrorCode::MissingArtifacts, summary_path + " not found");
    }
    std::ifstream summary_in(summary_path);
    nlohmann::json summary = nlohmann::json::parse(summary_in, nullptr, false);
    if (summary.is_discarded()) throw Error(ErrorCode::ParseError, summary_path + ": invalid JSON");

    // Per-client final metrics from the last round present.
    int last_round = records.front().round;
    for (const auto& r : records) last_round = std::max(last_round, r.round);
    std::cout << "final metrics (round " << last_round << "):\n";
    for (const auto& r : records) {
        if (r.round != last_round) continue;
        std::cout << "  client " << r.client_id << ": acc=" << format_metric(r.acc)
                  << " mf1=" << format_metric(r.mf1) << "\n";
    }

    // Communication totals summed over the per-round records.
    std::uint64_t params_total = 0, bytes_total = 0, delivered_total = 0;
    for (const auto& r : records) {
        if (r.round < 0) continue;
        params_total += r.params_shared;
        bytes_total += r.bytes_shared;
        delivered_total += r.heads_delivered;
    }
    std::cout << "communication: params_shared=" << params_total << " bytes_shared=" << bytes_total
              << " heads_delivered=" << delivered_total << "\n";

    const auto& comm = summary.at("comm");
    std::cout << "head/full parameter ratio per client:";
    for (const auto& ratio : comm.at("head_to_full_ratio")) {
        std::cout << " " << format_metric(ratio.get<double>());
    }
    std::cout << " (mean " << format_metric(comm.at("head_to_full_ratio_mean").get<double>()) << ")\n";

    std::string csv_path = dir + "/report.csv";
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw Error(ErrorCode::MissingArtifacts, "cannot write " + csv_path);
    csv << "round,client_id,variant,acc,mf1,loss_local_mean,loss_moe_mean,heads_delivered,"
           "params_shared,bytes_shared,active\n";
    for (const auto& r : records) {
        csv << r.round << "," << r.client_id << "," << r.variant << "," << format_metric(r.acc) << ","
            << format_metric(r.mf1) << ",";
        if (r.loss_local_mean) csv << format_metric(*r.loss_local_mean);
        csv << ",";
        if (r.loss_moe_mean) csv << format_metric(*r.loss_moe_mean);
        csv << "," << r.heads_delivered << "," << r.params_shared << "," << r.bytes_shared << ","
            << (r.active ? 1 : 0) << "\n";
    }
    std::cout << "tidy csv written to " << csv_path << "\n";
    return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
    CLI::App app{"dFLMoE desk-scale simulator"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir;
    std::vector<double> drop_rates;
    std::vector<std::string> removed_groups;
    std::string report_dir;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "experiment config (JSON)")->required();
        cmd->add_option("--seed", seed, "training seed override (also: DFLMOE_SEED)");
        cmd->add_option("--out", out_dir, "output directory (also: DFLMOE_OUT)");
    };

    CLI::App* run = app.add_subcommand("run", "run one experiment");
    add_common(run);

    CLI::App* faults = app.add_subcommand("faults", "fault-setting sweep");
    add_common(faults);
    faults->add_option("--link-drop", drop_rates, "link drop rates to sweep")->delimiter(',');
    faults->add_option("--remove-clients", removed_groups,
                       "client removal settings; use + to group, e.g. 1,2,1+2")
        ->delimiter(',');

    CLI::App* ablate = app.add_subcommand("ablate", "run all ablation variants");
    add_common(ablate);

    CLI::App* report = app.add_subcommand("report", "summarize a finished run directory");
    report->add_option("dir", report_dir, "directory containing rounds.jsonl")->required();

    app.add_subcommand("print-config", "print the default config with every field");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            std::cout << app.help();
            return kExitOk;
        }
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (app.got_subcommand("run")) return cmd_run(config_path, seed, out_dir);
        if (app.got_subcommand("faults")) return cmd_faults(config_path, seed, out_dir, drop_rates, removed_groups);
        if (app.got_subcommand("ablate")) return cmd_ablate(config_path, seed, out_dir);
        if (app.got_subcommand("report")) return cmd_report(report_dir);
        if (app.got_subcommand("print-config")) {
            std::cout << default_config_json().dump(2) << "\n";
            return kExitOk;
        }
        std::cerr << "error: no command\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::HeterogeneousModels ||
                       e.code() == ErrorCode::DimensionalIncompatibility
                   ? kExitConfig
                   : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace dflmoe
