// Command-line front end: reproducible solve / validate / convert / report
// runs over network cases, with JSON artifacts keyed by a config hash.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ropf/mcsval.hpp"
#include "ropf/robustcore.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace ropf;

namespace {

constexpr const char *kVersion = "ropf 0.1.0";

enum ExitCode {
    kOk = 0,
    kUsageOrIo = 1,
    kInfeasible = 2,
    kNumerical = 3,
    kViolations = 4,
};

struct StudyConfig {
    std::string case_path;
    std::string format = "auto"; // auto | mcase | json
    std::string mode = "deterministic";
    double res_penetration = 0.0;
    unsigned res_seed = 1;
    double load_unc = 0.0;
    double res_unc = 0.0;
    std::string gamma = "full";
    double eps_theta = 0.05;
    double ramp_fraction = 0.75;
    std::string ramp_mode = "pmax"; // pmax | base | proportional
    double tolerance = 1e-8;
    bool refine_rho = false;
    int n_scenarios = 10000;
    std::uint64_t seed = 1;
    std::string validation_mode = "in-range";
    bool convert_quadratic = false;

    Json to_json() const {
        Json j;
        j["case"] = case_path;
        j["format"] = format;
        j["mode"] = mode;
        j["res_penetration"] = res_penetration;
        j["res_seed"] = res_seed;
        j["load_unc"] = load_unc;
        j["res_unc"] = res_unc;
        j["gamma"] = gamma;
        j["eps_theta"] = eps_theta;
        j["ramp_fraction"] = ramp_fraction;
        j["ramp_mode"] = ramp_mode;
        j["tolerance"] = tolerance;
        j["refine_rho"] = refine_rho;
        j["n_scenarios"] = n_scenarios;
        j["seed"] = seed;
        j["validation_mode"] = validation_mode;
        j["convert_quadratic"] = convert_quadratic;
        return j;
    }

    // FNV-1a over the canonical dump: stable run identity
    std::string hash() const {
        const std::string text = to_json().dump();
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char ch : text) {
            h ^= ch;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
        return buf;
    }
};

void add_case_options(CLI::App *cmd, StudyConfig &cfg) {
    cmd->add_option("--case", cfg.case_path, "case file (.m or .json)")
        ->required();
    cmd->add_option("--format", cfg.format, "mcase | json | auto")
        ->check(CLI::IsMember({"auto", "mcase", "json"}));
    cmd->add_option("--res-penetration", cfg.res_penetration,
                    "RES share of conventional capacity, [0,1]");
    cmd->add_option("--res-seed", cfg.res_seed, "seed for randomized placement");
    cmd->add_flag("--convert-quadratic", cfg.convert_quadratic,
                  "convert quadratic gencost rows by the tangent at p_max/2");
}

void add_uncertainty_options(CLI::App *cmd, StudyConfig &cfg) {
    cmd->add_option("--load-unc", cfg.load_unc, "load deviation fraction");
    cmd->add_option("--res-unc", cfg.res_unc, "RES deviation fraction");
    cmd->add_option("--eps-theta", cfg.eps_theta, "arctangent band, radians");
    cmd->add_option("--ramp-frac", cfg.ramp_fraction, "ramp fraction");
    cmd->add_option("--ramp-mode", cfg.ramp_mode,
                    "pmax | base | proportional")
        ->check(CLI::IsMember({"pmax", "base", "proportional"}));
    cmd->add_option("--tol", cfg.tolerance, "solver tolerance");
}

net::NetworkCase load_configured_case(const StudyConfig &cfg) {
    net::ParseOptions po;
    po.convert_quadratic_cost = cfg.convert_quadratic;
    net::NetworkCase c = [&] {
        if (cfg.format == "auto") return net::load_case(cfg.case_path, po);
        std::ifstream in(cfg.case_path);
        if (!in) throw Error("cannot open case file " + cfg.case_path);
        return net::parse_case(in,
                               cfg.format == "mcase" ? net::CaseFormat::mcase
                                                     : net::CaseFormat::native_json,
                               fs::path(cfg.case_path).filename().string(), po);
    }();
    if (cfg.res_penetration > 0.0)
        c = net::place_res(c, cfg.res_penetration, cfg.res_seed);
    return c;
}

opf::BuildOptions build_options(const StudyConfig &cfg,
                                const net::NetworkCase &c) {
    opf::BuildOptions opts;
    opts.eps_theta = cfg.eps_theta;
    opts.ramp_fraction = cfg.ramp_fraction;
    if (cfg.ramp_mode == "pmax") {
        opts.ramp_mode = opf::RampMode::fraction_of_pmax;
    } else if (cfg.ramp_mode == "proportional") {
        opts.ramp_mode = opf::RampMode::proportional_to_base;
    } else {
        opts.ramp_mode = opf::RampMode::from_base_point;
        conic::ConicSolution det = ipm::solve(opf::build_deterministic(c, opts));
        if (det.status != conic::SolveStatus::optimal)
            throw SolverError("base-point dispatch solve ended " +
                              conic::to_string(det.status));
        conic::ConicProgram p = opf::build_deterministic(c, opts);
        Eigen::VectorXd pg(c.generators().size());
        for (size_t g = 0; g < c.generators().size(); ++g)
            pg[(long)g] = det.primal[p.column(opf::names::pg((int)g))];
        opts.base_point_pg = pg;
    }
    return opts;
}

fs::path resolve_out_dir(std::string out) {
    if (const char *env = std::getenv("ROPF_OUT_DIR"); env && *env) out = env;
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path &path, const std::string &content) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

Json setpoints_json(const net::NetworkCase &c, const robust::RobustSetpoints &sp) {
    Json j;
    j["objective"] = sp.objective;
    j["pg"] = Json::array();
    for (long g = 0; g < sp.pg.size(); ++g) j["pg"].push_back(sp.pg[g]);
    j["cii"] = Json::array();
    for (size_t k = 0; k < sp.cii_bus.size(); ++k) {
        Json e;
        e["bus"] = c.buses()[sp.cii_bus[k]].id;
        e["value"] = sp.cii[(long)k];
        j["cii"].push_back(e);
    }
    j["qr"] = Json::array();
    for (long r = 0; r < sp.qr_schedule.size(); ++r)
        j["qr"].push_back(sp.qr_schedule[r]);
    j["mu_star"] = Json::array();
    for (long k = 0; k < sp.mu_star.size(); ++k) j["mu_star"].push_back(sp.mu_star[k]);
    j["alpha"] = Json::array();
    for (long k = 0; k < sp.alpha.size(); ++k) j["alpha"].push_back(sp.alpha[k]);
    j["psi_star"] = sp.psi_star;
    return j;
}

robust::RobustSetpoints setpoints_from_json(const net::NetworkCase &c,
                                            const Json &j) {
    robust::RobustSetpoints sp;
    const auto &pg = j.at("pg");
    sp.pg.resize((long)pg.size());
    for (size_t g = 0; g < pg.size(); ++g) sp.pg[(long)g] = pg[g].get<double>();
    std::vector<double> cii;
    for (const auto &e : j.at("cii")) {
        sp.cii_bus.push_back(c.bus_index(e.at("bus").get<int>()));
        cii.push_back(e.at("value").get<double>());
    }
    sp.cii = Eigen::Map<Eigen::VectorXd>(cii.data(), (long)cii.size());
    const auto &qr = j.at("qr");
    sp.qr_schedule.resize((long)qr.size());
    for (size_t r = 0; r < qr.size(); ++r) sp.qr_schedule[(long)r] = qr[r].get<double>();
    const auto &mu = j.at("mu_star");
    sp.mu_star.resize((long)mu.size());
    for (size_t k = 0; k < mu.size(); ++k) sp.mu_star[(long)k] = mu[k].get<double>();
    sp.psi_star = j.value("psi_star", 0.0);
    sp.objective = j.value("objective", 0.0);
    return sp;
}

std::string trace_csv(const std::vector<conic::IterationStat> &trace) {
    std::ostringstream os;
    os << "iter,gap,pres,dres,step,sigma,tau,kappa\n";
    os.precision(10);
    for (const auto &t : trace)
        os << t.iter << "," << t.gap << "," << t.pres << "," << t.dres << ","
           << t.step << "," << t.sigma << "," << t.tau << "," << t.kappa << "\n";
    return os.str();
}

void write_manifest(const fs::path &dir, const StudyConfig &cfg, double wall_s) {
    Json m;
    m["config_hash"] = cfg.hash();
    m["config"] = cfg.to_json();
    m["version"] = kVersion;
    m["wall_time_s"] = wall_s;
    m["timestamp"] =
        (long long)std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    write_file(dir / "manifest.json", m.dump(2) + "\n");
}

int cmd_solve(const StudyConfig &cfg, const std::string &out) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = resolve_out_dir(out);
    net::NetworkCase c = load_configured_case(cfg);
    opf::BuildOptions opts = build_options(cfg, c);
    ipm::SolverSettings settings;
    settings.tolerance = cfg.tolerance;

    Json out_json;
    out_json["config_hash"] = cfg.hash();
    out_json["mode"] = cfg.mode;

    if (cfg.mode == "deterministic") {
        conic::ConicProgram det = opf::build_deterministic(c, opts);
        conic::ConicSolution sol = ipm::solve(det, settings);
        write_file(dir / "solver_log.csv", trace_csv(sol.trace));
        if (sol.status == conic::SolveStatus::infeasible ||
            sol.status == conic::SolveStatus::unbounded) {
            std::cerr << "deterministic solve: " << conic::to_string(sol.status)
                      << "\n";
            return kInfeasible;
        }
        if (sol.status != conic::SolveStatus::optimal) {
            std::cerr << "deterministic solve: " << conic::to_string(sol.status)
                      << "\n";
            return kNumerical;
        }
        robust::RobustSetpoints sp = robust::deterministic_setpoints(c, det, sol);
        out_json["status"] = "optimal";
        out_json["objective"] = sp.objective;
        out_json["setpoints"] = setpoints_json(c, sp);
        Json diag;
        diag["solver_gap"] = sol.gap;
        diag["iterations"] = sol.iterations;
        out_json["diagnostics"] = diag;
    } else {
        opf::UncertaintySpec unc =
            opf::UncertaintySpec::fractional(c, cfg.load_unc, cfg.res_unc);
        if (cfg.load_unc > 0.15 || cfg.res_unc > 0.15)
            std::cerr << "warning: deviation fractions beyond 0.15 leave the "
                         "short-term operating regime\n";
        robust::RobustSetpoints sp;
        if (cfg.gamma == "full") {
            robust::DualRcProgram rc =
                robust::build_dual_rc(c, unc, robust::RcMode::full, opts);
            sp = robust::solve_rc_and_recover(rc, settings);
        } else {
            const int gamma = std::stoi(cfg.gamma);
            robust::BudgetSelection bs =
                robust::select_budget(c, unc, gamma, opts, settings);
            sp = bs.setpoints;
        }
        write_file(dir / "solver_log.csv", trace_csv(sp.solver_trace));
        robust::GapReport gap =
            robust::cross_check_strong_duality(c, unc, sp, opts, settings);
        robust::ExactnessReport ex =
            robust::exactness_check(c, unc, sp, opts, settings);

        out_json["status"] = "optimal";
        out_json["objective"] = sp.objective;
        out_json["setpoints"] = setpoints_json(c, sp);
        Json diag;
        diag["solver_gap"] = sp.solver_gap;
        diag["sign_iterations"] = sp.sign_iterations;
        diag["complementarity_max"] =
            sp.complementarity.size() ? sp.complementarity.maxCoeff() : 0.0;
        diag["big_m_utilization"] = sp.max_r_vs_big_m;
        Json g;
        g["rc_objective"] = gap.rc_objective;
        g["primal_objective"] = gap.primal_objective;
        g["rel_gap"] = gap.rel_gap;
        g["max_setpoint_diff"] = gap.max_setpoint_diff;
        g["primal_feasible"] = gap.primal_feasible;
        diag["strong_duality"] = g;
        Json e;
        e["base_feasible"] = ex.base_feasible;
        e["base_cone_residual"] = ex.base_cone_residual;
        e["base_angle_residual"] = ex.base_angle_residual;
        e["hat_feasible"] = ex.hat_feasible;
        e["hat_cone_residual"] = ex.hat_cone_residual;
        e["hat_angle_residual"] = ex.hat_angle_residual;
        diag["exactness"] = e;
        if (cfg.refine_rho) {
            robust::ParticipationRefinement pr =
                robust::refine_participation(c, unc, sp, opts, settings);
            Json pj;
            pj["objective_fixed"] = pr.objective_fixed;
            pj["objective_refined"] = pr.objective_refined;
            pj["reduction_percent"] = pr.reduction_percent;
            pj["rho"] = Json::array();
            for (long g = 0; g < pr.rho.size(); ++g) pj["rho"].push_back(pr.rho[g]);
            diag["participation_refinement"] = pj;
        }
        out_json["diagnostics"] = diag;
    }

    write_file(dir / "solution.json", out_json.dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(dir, cfg, wall);
    std::cout << "objective " << out_json["objective"].get<double>() << " -> "
              << (dir / "solution.json").string() << "\n";
    return kOk;
}

void write_plot_data(const fs::path &dir, const mcs::ValidationReport &rep) {
    std::ostringstream flow, volt, gen;
    flow << "branch,max_abs_flow,limit\n";
    volt << "bus,max_v,min_v,v_max_limit\n";
    gen << "generator,quantity,max_value,limit\n";
    flow.precision(10);
    volt.precision(10);
    gen.precision(10);
    for (const auto &[key, env] : rep.envelopes) {
        const auto colon = key.find(':');
        const std::string fam = key.substr(0, colon);
        const std::string el = key.substr(colon + 1);
        if (fam == "flow")
            flow << el << "," << env.max_value << "," << env.limit << "\n";
        else if (fam == "voltage")
            volt << el << "," << env.max_value << "," << env.min_value << ","
                 << env.limit << "\n";
        else if (fam == "pg" || fam == "qg" || fam == "ramp")
            gen << el << "," << fam << "," << env.max_value << "," << env.limit
                << "\n";
    }
    write_file(dir / "flow_vs_limit.csv", flow.str());
    write_file(dir / "voltage_envelope.csv", volt.str());
    write_file(dir / "generation_envelope.csv", gen.str());
}

int cmd_validate(const StudyConfig &cfg, const std::string &setpoints_path,
                 const std::string &out) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = resolve_out_dir(out);
    net::NetworkCase c = load_configured_case(cfg);

    std::ifstream in(setpoints_path);
    if (!in) {
        std::cerr << "cannot open setpoints file " << setpoints_path << "\n";
        return kUsageOrIo;
    }
    Json sol_json = Json::parse(in);
    robust::RobustSetpoints sp =
        setpoints_from_json(c, sol_json.at("setpoints"));

    opf::UncertaintySpec unc =
        opf::UncertaintySpec::fractional(c, cfg.load_unc, cfg.res_unc);
    mcs::ValidateOptions vopts;
    vopts.build = build_options(cfg, c);
    const acpf::ScenarioLabel mode = cfg.validation_mode == "in-range"
                                         ? acpf::ScenarioLabel::in_range
                                         : acpf::ScenarioLabel::out_of_range;
    mcs::ValidationReport rep =
        mcs::validate(c, sp, unc, mode, cfg.n_scenarios, cfg.seed, vopts);

    Json rj = Json::parse(mcs::report_to_json(rep));
    rj["config_hash"] = cfg.hash();
    rj["setpoints_config_hash"] = sol_json.value("config_hash", "");
    write_file(dir / "report.json", rj.dump(2) + "\n");
    write_file(dir / "envelope.csv", mcs::envelopes_to_csv(rep));
    write_plot_data(dir, rep);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    write_manifest(dir, cfg, wall);

    std::cout << "violation probability "
              << rep.violation_probability * 100.0 << "% over "
              << rep.n_scenarios << " scenarios ("
              << (mode == acpf::ScenarioLabel::in_range ? "in-range"
                                                        : "out-of-range")
              << ")\n";
    if (mode == acpf::ScenarioLabel::in_range && !rep.robust_verdict)
        return kViolations;
    return kOk;
}

int cmd_convert(const StudyConfig &cfg, const std::string &out_path) {
    net::NetworkCase c = load_configured_case(cfg);
    write_file(out_path, net::to_canonical_json(c));
    std::cout << "wrote " << out_path << "\n";
    return kOk;
}

int cmd_report(const std::vector<std::string> &runs, const std::string &out_path) {
    struct Row {
        std::string name, mode, gamma, case_name;
        double load_unc = 0, res_unc = 0, objective = 0, wall = 0;
        std::optional<double> viol;
    };
    std::vector<Row> rows;
    for (const std::string &run : runs) {
        const fs::path dir(run);
        Json manifest, solution, report;
        std::ifstream m(dir / "manifest.json");
        if (m) manifest = Json::parse(m);
        std::ifstream s(dir / "solution.json");
        if (s) solution = Json::parse(s);
        std::ifstream r(dir / "report.json");
        if (r) report = Json::parse(r);
        const Json cfg = manifest.value("config", Json::object());
        Row row;
        row.name = dir.filename().string();
        row.mode = cfg.value("mode", "?");
        row.gamma = cfg.value("gamma", "?");
        row.case_name = fs::path(cfg.value("case", "?")).filename().string();
        row.load_unc = cfg.value("load_unc", 0.0);
        row.res_unc = cfg.value("res_unc", 0.0);
        row.objective = solution.value("objective", 0.0);
        row.wall = manifest.value("wall_time_s", 0.0);
        if (report.contains("violation_probability"))
            row.viol = report["violation_probability"].get<double>();
        rows.push_back(row);
    }

    std::ostringstream csv;
    csv.precision(10);
    csv << "run,case,mode,gamma,load_unc,res_unc,objective,wall_time_s,"
           "violation_probability\n";
    for (const Row &r : rows) {
        csv << r.name << "," << r.case_name << "," << r.mode << "," << r.gamma
            << "," << r.load_unc << "," << r.res_unc << "," << r.objective
            << "," << r.wall << ",";
        if (r.viol) csv << *r.viol;
        csv << "\n";
    }
    write_file(out_path, csv.str());

    // pivoted view: one line per (case, deviations), a column per budget
    std::vector<std::string> gammas;
    for (const Row &r : rows)
        if (r.mode == "robust" &&
            std::find(gammas.begin(), gammas.end(), r.gamma) == gammas.end())
            gammas.push_back(r.gamma);
    std::sort(gammas.begin(), gammas.end(), [](const auto &a, const auto &b) {
        if (a == "full") return false;
        if (b == "full") return true;
        return std::stoi(a) < std::stoi(b);
    });
    std::ostringstream table;
    table << "case            load/res unc   det obj";
    for (const std::string &g : gammas) table << "   G=" << g;
    table << "\n";
    std::vector<std::string> seen;
    for (const Row &base : rows) {
        if (base.mode != "robust") continue; // deviations come from robust runs
        const std::string key = base.case_name + "|" +
                                std::to_string(base.load_unc) + "|" +
                                std::to_string(base.res_unc);
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        char head[96];
        std::snprintf(head, sizeof head, "%-15s %.2f/%.2f     ",
                      base.case_name.c_str(), base.load_unc, base.res_unc);
        table << head;
        auto cell = [&](const std::string &mode, const std::string &gamma) {
            for (const Row &r : rows)
                if (r.case_name == base.case_name && r.mode == mode &&
                    (mode == "deterministic" ||
                     (r.gamma == gamma && r.load_unc == base.load_unc &&
                      r.res_unc == base.res_unc))) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%10.3f", r.objective);
                    return std::string(buf);
                }
            return std::string("         -");
        };
        table << cell("deterministic", "");
        for (const std::string &g : gammas) table << cell("robust", g);
        table << "\n";
    }
    if (seen.empty()) {
        for (const Row &r : rows) {
            char line[120];
            std::snprintf(line, sizeof line, "%-15s %-14s %12.4f\n",
                          r.case_name.c_str(), r.mode.c_str(), r.objective);
            table << line;
        }
    }
    std::cout << table.str() << "wrote " << out_path << "\n";
    return kOk;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"robust SOC-relaxed ACOPF toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    StudyConfig cfg;
    std::string out_dir = "out";
    std::string setpoints_path;
    std::string out_path;
    std::vector<std::string> runs;

    CLI::App *solve = app.add_subcommand("solve", "solve a dispatch problem");
    add_case_options(solve, cfg);
    add_uncertainty_options(solve, cfg);
    solve->add_option("--mode", cfg.mode, "deterministic | robust")
        ->check(CLI::IsMember({"deterministic", "robust"}));
    solve->add_option("--gamma", cfg.gamma, "budget: integer or 'full'");
    solve->add_flag("--refine-rho", cfg.refine_rho,
                    "re-solve with variable participation factors at the "
                    "frozen worst case and report the objective reduction");
    solve->add_option("--seed", cfg.seed, "study seed");
    solve->add_option("--out", out_dir, "output directory");

    CLI::App *validate = app.add_subcommand("validate", "Monte-Carlo robustness check");
    add_case_options(validate, cfg);
    add_uncertainty_options(validate, cfg);
    validate->add_option("--setpoints", setpoints_path, "solution.json path")
        ->required();
    validate->add_option("--mode", cfg.validation_mode, "in-range | out-of-range")
        ->check(CLI::IsMember({"in-range", "out-of-range"}));
    validate->add_option("--ns", cfg.n_scenarios, "scenario count");
    validate->add_option("--seed", cfg.seed, "sampling seed");
    validate->add_option("--out", out_dir, "output directory");

    CLI::App *convert = app.add_subcommand("convert", "dump the canonical JSON case");
    add_case_options(convert, cfg);
    convert->add_option("--out", out_path, "output JSON path")->required();

    CLI::App *report = app.add_subcommand("report", "merge runs into a comparison table");
    report->add_option("--runs", runs, "run directories")->required();
    report->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            cfg.mode = cfg.mode.empty() ? "deterministic" : cfg.mode;
            return cmd_solve(cfg, out_dir);
        }
        if (validate->parsed()) return cmd_validate(cfg, setpoints_path, out_dir);
        if (convert->parsed()) return cmd_convert(cfg, out_path);
        if (report->parsed()) return cmd_report(runs, out_path);
    } catch (const ParseError &e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kUsageOrIo;
    } catch (const SolverError &e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return kNumerical;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageOrIo;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageOrIo;
    }
    return kUsageOrIo;
}
