#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct RunResult {
    int exit_code;
};

RunResult run_cli(const std::string &args) {
    const std::string cmd = std::string(ROPF_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status)};
}

std::string data(const std::string &name) {
    return std::string(ROPF_TEST_DATA_DIR) + "/" + name;
}

fs::path fresh_dir(const std::string &name) {
    fs::path dir = fs::temp_directory_path() / "ropf_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Json read_json(const fs::path &p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return Json::parse(in);
}

std::string read_bytes(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("convert writes a reparsable canonical dump") {
    fs::path dir = fresh_dir("convert");
    RunResult r = run_cli("convert --case " + data("case2.m") + " --out " +
                          (dir / "case2.json").string());
    CHECK(r.exit_code == 0);
    Json j = read_json(dir / "case2.json");
    CHECK(j.at("buses").size() == 2);
    CHECK(j.at("base_mva").get<double>() == 100.0);
}

TEST_CASE("deterministic solve writes the documented objective") {
    fs::path dir = fresh_dir("det2");
    RunResult r = run_cli("solve --case " + data("case2.m") +
                          " --mode deterministic --out " + dir.string());
    CHECK(r.exit_code == 0);
    Json sol = read_json(dir / "solution.json");
    CHECK(sol.at("status") == "optimal");
    CHECK(std::abs(sol.at("objective").get<double>() - 12.0) <= 1e-5);
    CHECK(fs::exists(dir / "solver_log.csv"));
    CHECK(fs::exists(dir / "manifest.json"));
}

TEST_CASE("robust solve with a zero box reproduces the deterministic run") {
    fs::path det_dir = fresh_dir("zdet"), rob_dir = fresh_dir("zrob");
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode deterministic --out " + det_dir.string()).exit_code == 0);
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode robust --load-unc 0 --res-unc 0 --out " +
                    rob_dir.string()).exit_code == 0);
    Json det = read_json(det_dir / "solution.json");
    Json rob = read_json(rob_dir / "solution.json");
    CHECK(std::abs(det.at("objective").get<double>() -
                   rob.at("objective").get<double>()) <= 1e-5);
    const auto &dpg = det.at("setpoints").at("pg");
    const auto &rpg = rob.at("setpoints").at("pg");
    REQUIRE(dpg.size() == rpg.size());
    for (size_t g = 0; g < dpg.size(); ++g)
        CHECK(std::abs(dpg[g].get<double>() - rpg[g].get<double>()) <= 1e-5);
}

TEST_CASE("robust worst case sits at a box vertex") {
    fs::path dir = fresh_dir("vertex");
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode robust --load-unc 0.05 --res-unc 0.05 --gamma full --out " +
                    dir.string()).exit_code == 0);
    Json sol = read_json(dir / "solution.json");
    const auto &mu = sol.at("setpoints").at("mu_star");
    REQUIRE(mu.size() == 3);
    const double bars[3] = {0.03, 0.045, 0.015}; // 5% of the nominal injections
    for (size_t j = 0; j < mu.size(); ++j)
        CHECK(std::abs(std::abs(mu[j].get<double>()) - bars[j]) <= 1e-9);
    // strong-duality diagnostics ride along
    CHECK(sol.at("diagnostics").at("strong_duality").at("rel_gap").get<double>() <= 1e-5);
}

TEST_CASE("identical configs write byte-identical solutions") {
    fs::path a = fresh_dir("rep_a"), b = fresh_dir("rep_b");
    const std::string args = "solve --case " + data("case3.json") +
                             " --mode robust --load-unc 0.05 --res-unc 0.05 --gamma 2";
    REQUIRE(run_cli(args + " --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli(args + " --out " + b.string()).exit_code == 0);
    CHECK(read_bytes(a / "solution.json") == read_bytes(b / "solution.json"));
}

TEST_CASE("validation pipeline exit codes") {
    fs::path rob = fresh_dir("v_rob");
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode robust --load-unc 0.05 --res-unc 0.05 --out " +
                    rob.string()).exit_code == 0);

    SUBCASE("robust setpoints in range exit clean") {
        fs::path out = fresh_dir("v_ok");
        RunResult r = run_cli("validate --case " + data("case3.json") +
                              " --load-unc 0.05 --res-unc 0.05 --setpoints " +
                              (rob / "solution.json").string() +
                              " --ns 300 --seed 9 --out " + out.string());
        CHECK(r.exit_code == 0);
        Json rep = read_json(out / "report.json");
        CHECK(rep.at("violation_probability").get<double>() == 0.0);
        CHECK(fs::exists(out / "flow_vs_limit.csv"));
        CHECK(fs::exists(out / "voltage_envelope.csv"));
        CHECK(fs::exists(out / "generation_envelope.csv"));
    }
    SUBCASE("out-of-range violations are informational") {
        fs::path out = fresh_dir("v_oor");
        RunResult r = run_cli("validate --case " + data("case3.json") +
                              " --load-unc 0.05 --res-unc 0.05 --mode out-of-range"
                              " --setpoints " + (rob / "solution.json").string() +
                              " --ns 200 --seed 9 --out " + out.string());
        CHECK(r.exit_code == 0);
    }
    SUBCASE("missing setpoints file") {
        RunResult r = run_cli("validate --case " + data("case3.json") +
                              " --setpoints /nonexistent.json --out " +
                              fresh_dir("v_missing").string());
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("deterministic setpoints fail validation on the stressed fixture") {
    fs::path det = fresh_dir("frag_det");
    REQUIRE(run_cli("solve --case " + data("case14_stressed.json") +
                    " --mode deterministic --out " + det.string()).exit_code == 0);
    fs::path out = fresh_dir("frag_val");
    RunResult r = run_cli("validate --case " + data("case14_stressed.json") +
                          " --load-unc 0.05 --res-unc 0.15 --setpoints " +
                          (det / "solution.json").string() +
                          " --ns 200 --seed 5 --out " + out.string());
    CHECK(r.exit_code == 4);
    Json rep = read_json(out / "report.json");
    CHECK(rep.at("violation_probability").get<double>() >= 0.99);
}

TEST_CASE("infeasible cases exit with the documented code") {
    // a load far beyond the generation capacity
    fs::path dir = fresh_dir("infeas");
    const std::string case_path = (dir / "bad.json").string();
    std::ofstream out(case_path);
    out << R"({"base_mva":100,"buses":[
      {"id":1,"type":"reference","v_min":0.94,"v_max":1.06},
      {"id":2,"type":"load_only","v_min":0.94,"v_max":1.06}],
      "branches":[{"from":1,"to":2,"r":0.01,"x":0.1,"p_max":5.0}],
      "generators":[{"bus":1,"a":10.0,"b":0.0,"p_min":0.0,"p_max":1.0,
                     "q_min":-1.0,"q_max":1.0}],
      "loads":[{"bus":2,"p_d":3.0,"q_d":0.5}],"res_units":[]})";
    out.close();
    RunResult r = run_cli("solve --case " + case_path + " --mode deterministic --out " +
                          (dir / "run").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("report merges runs into a comparison table") {
    fs::path a = fresh_dir("tbl_a"), b = fresh_dir("tbl_b");
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode deterministic --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode robust --load-unc 0.05 --res-unc 0.05 --out " +
                    b.string()).exit_code == 0);
    fs::path table = fresh_dir("tbl") / "comparison.csv";
    RunResult r = run_cli("report --runs " + a.string() + " " + b.string() +
                          " --out " + table.string());
    CHECK(r.exit_code == 0);
    std::string csv = read_bytes(table);
    CHECK(csv.find("run,case,mode,gamma") != std::string::npos);
    CHECK(csv.find("deterministic") != std::string::npos);
    CHECK(csv.find("robust") != std::string::npos);
}

TEST_CASE("validation reports are byte-identical for the same config") {
    fs::path rob = fresh_dir("rep_sp");
    REQUIRE(run_cli("solve --case " + data("case3.json") +
                    " --mode robust --load-unc 0.05 --res-unc 0.05 --out " +
                    rob.string()).exit_code == 0);
    fs::path a = fresh_dir("repv_a"), b = fresh_dir("repv_b");
    const std::string args = "validate --case " + data("case3.json") +
                             " --load-unc 0.05 --res-unc 0.05 --ns 100 --seed 4"
                             " --setpoints " + (rob / "solution.json").string();
    REQUIRE(run_cli(args + " --out " + a.string()).exit_code == 0);
    REQUIRE(run_cli(args + " --out " + b.string()).exit_code == 0);
    CHECK(read_bytes(a / "report.json") == read_bytes(b / "report.json"));
    CHECK(read_bytes(a / "envelope.csv") == read_bytes(b / "envelope.csv"));
}

TEST_CASE("the environment variable overrides the output directory") {
    fs::path flag_dir = fresh_dir("env_flag");
    fs::path env_dir = fresh_dir("env_real");
    const std::string cmd = std::string("ROPF_OUT_DIR=") + env_dir.string() +
                            " " + ROPF_CLI_PATH + " solve --case " +
                            data("case2.m") + " --mode deterministic --out " +
                            flag_dir.string() + " > /dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    CHECK(fs::exists(env_dir / "solution.json"));
    CHECK(!fs::exists(flag_dir / "solution.json"));
}
