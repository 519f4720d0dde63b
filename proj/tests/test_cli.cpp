#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dflmoe/cli.hpp"
#include "dflmoe/config.hpp"
#include "dflmoe/report.hpp"

using namespace dflmoe;
namespace fs = std::filesystem;

namespace {

struct CaptureStreams {
    std::ostringstream out, err;
    std::streambuf* old_out;
    std::streambuf* old_err;
    CaptureStreams() : old_out(std::cout.rdbuf(out.rdbuf())), old_err(std::cerr.rdbuf(err.rdbuf())) {}
    ~CaptureStreams() {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
    }
};

std::string fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "dflmoe_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

std::string toy_config_text() {
    return R"({
      "seed": 7,
      "rounds": 2,
      "lr_local": 0.05,
      "lr_moe": 0.01,
      "batch_size": 16,
      "dataset": {"classes": 3, "input_dim": 8, "examples_per_client": 40},
      "partition": {"dirichlet_alpha": 0.7},
      "clients": [
        {"input_dim": 8, "hidden_dims": [10], "feature_dim": 8},
        {"input_dim": 8, "hidden_dims": [10], "feature_dim": 8},
        {"input_dim": 8, "hidden_dims": [10], "feature_dim": 8}
      ]
    })";
}

std::string write_toy_config(const std::string& dir) {
    std::string path = dir + "/config.json";
    std::ofstream out(path);
    out << toy_config_text();
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::vector<std::string>& args, std::string* captured_out = nullptr,
            std::string* captured_err = nullptr) {
    CaptureStreams capture;
    int code = cli_main(args);
    if (captured_out) *captured_out = capture.out.str();
    if (captured_err) *captured_err = capture.err.str();
    return code;
}

}  // namespace

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
    ExperimentConfig defaults = parse_config("{}");
    CHECK(defaults.rounds == 100);
    CHECK(defaults.lambda_loc == 0.5);
    CHECK(defaults.lambda_moe == 0.5);
    CHECK(defaults.clients.size() == 4);

    try {
        parse_config(R"({"faults": {"linkdrop_rate": 0.5}})");
        FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigInvalid);
        CHECK(std::string(e.what()).find("faults.linkdrop_rate") != std::string::npos);
    }
    try {
        parse_config(R"({"rounds": "ten"})");
        FAIL("expected ConfigInvalid");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("rounds") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("not json"), Error);
    CHECK_THROWS_AS(parse_config(R"({"variant": "no_such"})"), Error);
}

TEST_CASE("resolved config survives a parse round-trip") {
    ExperimentConfig config = parse_config(toy_config_text());
    nlohmann::json resolved = resolved_config_json(config);
    ExperimentConfig back = parse_config(resolved.dump());
    CHECK(resolved_config_json(back) == resolved);
}

TEST_CASE("print-config emits the full default tree") {
    std::string out;
    CHECK(run_cli({"print-config"}, &out) == 0);
    nlohmann::json printed = nlohmann::json::parse(out);
    CHECK(printed == default_config_json());
    for (const char* key : {"seed", "rounds", "variant", "lambda_loc", "lambda_moe", "lr_local",
                            "lr_moe", "batch_size", "clients", "dataset", "partition", "faults"}) {
        CHECK(printed.contains(key));
    }
}

TEST_CASE("run fails with exit 2 when the config file is missing") {
    std::string err;
    int code = run_cli({"run", "/nonexistent/toy.json", "--out", fresh_dir("missing")}, nullptr, &err);
    CHECK(code == 2);
    CHECK(err.find("/nonexistent/toy.json") != std::string::npos);
}

TEST_CASE("run writes the full output set with sane metrics") {
    std::string dir = fresh_dir("run");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"run", config, "--out", dir + "/out"}) == 0);

    CHECK(fs::exists(dir + "/out/rounds.jsonl"));
    CHECK(fs::exists(dir + "/out/resolved_config.json"));
    nlohmann::json summary = nlohmann::json::parse(slurp(dir + "/out/summary.json"));
    double mean_acc = summary.at("mean_acc").get<double>();
    CHECK(mean_acc >= 0.0);
    CHECK(mean_acc <= 1.0);
    CHECK(summary.at("schema_version").get<int>() == 1);
    CHECK(summary.contains("resolved_config"));

    auto records = read_rounds_jsonl(dir + "/out/rounds.jsonl");
    CHECK(records.size() == 3 + 3 * 2);  // round -1 plus two rounds of three clients
}

TEST_CASE("same seed twice gives byte-identical rounds.jsonl") {
    std::string dir = fresh_dir("determinism");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"run", config, "--out", dir + "/a", "--seed", "41"}) == 0);
    CHECK(run_cli({"run", config, "--out", dir + "/b", "--seed", "41"}) == 0);
    CHECK(slurp(dir + "/a/rounds.jsonl") == slurp(dir + "/b/rounds.jsonl"));

    CHECK(run_cli({"run", config, "--out", dir + "/c", "--seed", "42"}) == 0);
    CHECK(slurp(dir + "/a/rounds.jsonl") != slurp(dir + "/c/rounds.jsonl"));
}

TEST_CASE("environment variables supply seed and output directory") {
    std::string dir = fresh_dir("env");
    std::string config = write_toy_config(dir);
    setenv("DFLMOE_SEED", "123", 1);
    setenv("DFLMOE_OUT", (dir + "/env_out").c_str(), 1);
    int code = run_cli({"run", config});
    unsetenv("DFLMOE_SEED");
    unsetenv("DFLMOE_OUT");
    CHECK(code == 0);
    nlohmann::json resolved = nlohmann::json::parse(slurp(dir + "/env_out/resolved_config.json"));
    CHECK(resolved.at("seed").get<std::uint64_t>() == 123);
}

TEST_CASE("faults sweep emits one row per setting and matches a plain run at rate zero") {
    std::string dir = fresh_dir("faults");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"faults", config, "--out", dir + "/sweep", "--link-drop", "0,0.25,0.5,0.75"}) == 0);

    std::string csv = slurp(dir + "/sweep/faults.csv");
    std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
    CHECK(rows == 5);  // header + four settings

    CHECK(run_cli({"run", config, "--out", dir + "/plain"}) == 0);
    nlohmann::json sweep0 = nlohmann::json::parse(slurp(dir + "/sweep/setting_0/summary.json"));
    nlohmann::json plain = nlohmann::json::parse(slurp(dir + "/plain/summary.json"));
    CHECK(sweep0.at("mean_acc") == plain.at("mean_acc"));
    CHECK(slurp(dir + "/sweep/setting_0/rounds.jsonl") == slurp(dir + "/plain/rounds.jsonl"));
}

TEST_CASE("fault sweep over client removals is deterministic and distinct") {
    std::string dir = fresh_dir("faults_removed");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"faults", config, "--out", dir + "/a", "--remove-clients", "1,2"}) == 0);
    CHECK(run_cli({"faults", config, "--out", dir + "/b", "--remove-clients", "1,2"}) == 0);
    CHECK(slurp(dir + "/a/faults.csv") == slurp(dir + "/b/faults.csv"));

    nlohmann::json r1 = nlohmann::json::parse(slurp(dir + "/a/setting_0/summary.json"));
    nlohmann::json r2 = nlohmann::json::parse(slurp(dir + "/a/setting_1/summary.json"));
    CHECK(r1.at("active_clients") != r2.at("active_clients"));
}

TEST_CASE("ablate emits six variant rows and matches a standalone local-only run") {
    std::string dir = fresh_dir("ablate");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"ablate", config, "--out", dir + "/ab"}) == 0);

    std::string csv = slurp(dir + "/ab/ablation.csv");
    std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
    CHECK(rows == 7);  // header + six variants
    for (const char* name : {"dflmoe", "no_moe", "no_fst", "centralized_moe_fst", "aggregated_head",
                             "local_only"}) {
        CHECK(csv.find(name) != std::string::npos);
    }

    // standalone local-only with the same seed
    nlohmann::json local_cfg = nlohmann::json::parse(toy_config_text());
    local_cfg["variant"] = "local_only";
    std::string local_path = dir + "/local.json";
    std::ofstream(local_path) << local_cfg.dump();
    CHECK(run_cli({"run", local_path, "--out", dir + "/local_out"}) == 0);

    nlohmann::json from_ablate = nlohmann::json::parse(slurp(dir + "/ab/local_only/summary.json"));
    nlohmann::json standalone = nlohmann::json::parse(slurp(dir + "/local_out/summary.json"));
    CHECK(from_ablate.at("mean_acc").get<double>() ==
          doctest::Approx(standalone.at("mean_acc").get<double>()).epsilon(1e-12));
    CHECK(slurp(dir + "/ab/local_only/rounds.jsonl") == slurp(dir + "/local_out/rounds.jsonl"));
}

TEST_CASE("report demands artifacts and reconciles totals") {
    std::string empty = fresh_dir("report_empty");
    std::string err;
    CHECK(run_cli({"report", empty}, nullptr, &err) == 3);
    CHECK(err.find("rounds.jsonl") != std::string::npos);

    std::string dir = fresh_dir("report");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"run", config, "--out", dir + "/out"}) == 0);
    std::string out;
    CHECK(run_cli({"report", dir + "/out"}, &out) == 0);
    CHECK(fs::exists(dir + "/out/report.csv"));

    // totals printed by the report equal the sums over the jsonl records
    auto records = read_rounds_jsonl(dir + "/out/rounds.jsonl");
    std::uint64_t params = 0;
    for (const auto& r : records) {
        if (r.round >= 0) params += r.params_shared;
    }
    CHECK(out.find("params_shared=" + std::to_string(params)) != std::string::npos);

    // the ratio column equals head/(head+body) computed from the embedded config
    nlohmann::json summary = nlohmann::json::parse(slurp(dir + "/out/summary.json"));
    const auto& cfg = summary.at("resolved_config");
    const auto& client0 = cfg.at("clients").at(0);
    std::size_t classes = cfg.at("dataset").at("classes").get<std::size_t>();
    std::size_t in = client0.at("input_dim").get<std::size_t>();
    std::size_t hidden = client0.at("hidden_dims").at(0).get<std::size_t>();
    std::size_t feat = client0.at("feature_dim").get<std::size_t>();
    std::size_t head = feat * classes + classes;
    std::size_t body = in * hidden + hidden + hidden * feat + feat;
    double expect = static_cast<double>(head) / static_cast<double>(head + body);
    double ratio = summary.at("comm").at("head_to_full_ratio").at(0).get<double>();
    CHECK(ratio == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cli rejects heterogeneous configs for variants that need homogeneity") {
    std::string dir = fresh_dir("hetero");
    nlohmann::json cfg = nlohmann::json::parse(toy_config_text());
    cfg["variant"] = "fedavg";
    cfg["clients"][1]["hidden_dims"] = {14};
    std::string path = dir + "/config.json";
    std::ofstream(path) << cfg.dump();
    std::string err;
    CHECK(run_cli({"run", path, "--out", dir + "/out"}, nullptr, &err) == 2);
    CHECK(err.find("fedavg") != std::string::npos);
}

TEST_CASE("unknown command line flags exit with the config code") {
    std::string dir = fresh_dir("usage");
    std::string config = write_toy_config(dir);
    CHECK(run_cli({"run", config, "--bogus"}) == 2);
    CHECK(run_cli({}) == 2);
}
