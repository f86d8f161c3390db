#include "ropf/netcase.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ropf::net {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const std::string &what) {
    if (!ok) throw ModelError(what);
}

} // namespace

NetworkCase NetworkCase::create(double base_mva, std::vector<Bus> buses,
                                std::vector<Branch> branches,
                                std::vector<Generator> generators,
                                std::vector<LoadPoint> loads,
                                std::vector<ResUnit> res_units) {
    require(base_mva > 0, "base_mva must be positive");
    require(!buses.empty(), "case has no buses");

    std::sort(buses.begin(), buses.end(),
              [](const Bus &a, const Bus &b) { return a.id < b.id; });

    NetworkCase c;
    c.base_mva_ = base_mva;
    c.bus_ids_.reserve(buses.size());
    int n_ref = 0;
    for (const Bus &bus : buses) {
        require(bus.v_min > 0, "bus " + std::to_string(bus.id) + ": v_min must be positive");
        require(bus.v_min <= bus.v_max,
                "bus " + std::to_string(bus.id) + ": v_min exceeds v_max");
        require(bus.theta_min <= bus.theta_max,
                "bus " + std::to_string(bus.id) + ": theta bounds inverted");
        if (!c.bus_ids_.empty() && c.bus_ids_.back() == bus.id)
            throw ModelError("duplicate bus id " + std::to_string(bus.id));
        if (bus.type == BusType::reference) {
            c.reference_index_ = static_cast<int>(c.bus_ids_.size());
            ++n_ref;
        }
        c.bus_ids_.push_back(bus.id);
    }
    require(n_ref == 1, "case must have exactly one reference bus, found " +
                            std::to_string(n_ref));
    c.buses_ = std::move(buses);

    auto check_bus = [&c](int id, const std::string &owner) {
        if (!std::binary_search(c.bus_ids_.begin(), c.bus_ids_.end(), id))
            throw ModelError(owner + " references unknown bus " + std::to_string(id));
    };

    for (const Branch &br : branches) {
        check_bus(br.from, "branch");
        check_bus(br.to, "branch");
        require(br.from != br.to, "branch endpoints coincide at bus " +
                                      std::to_string(br.from));
        require(br.x != 0.0, "branch " + std::to_string(br.from) + "-" +
                                 std::to_string(br.to) + ": x must be nonzero");
        require(br.p_max > 0, "branch " + std::to_string(br.from) + "-" +
                                  std::to_string(br.to) + ": p_max must be positive");
        require(br.theta_diff_max > 0, "branch theta_diff_max must be positive");
        require(br.tap_mag > 0, "branch tap magnitude must be positive");
    }
    c.branches_ = std::move(branches);

    c.gen_at_bus_.assign(c.buses_.size(), 0);
    double inv_cost_sum = 0.0;
    for (Generator &g : generators) {
        check_bus(g.bus, "generator");
        require(g.a > 0, "generator at bus " + std::to_string(g.bus) +
                             ": cost slope a must be positive");
        require(g.b >= 0, "generator at bus " + std::to_string(g.bus) +
                              ": cost constant b must be nonnegative");
        require(g.p_min <= g.p_max, "generator at bus " + std::to_string(g.bus) +
                                        ": p_min exceeds p_max");
        require(g.q_min <= g.q_max, "generator at bus " + std::to_string(g.bus) +
                                        ": q_min exceeds q_max");
        inv_cost_sum += 1.0 / g.a;
        c.gen_at_bus_[c.bus_index_impl(g.bus, c.bus_ids_)] = 1;
    }
    require(!generators.empty(), "case has no generators");

    double part_sum = 0.0;
    for (const Generator &g : generators) part_sum += g.participation;
    if (part_sum == 0.0) {
        // default AGC shares proportional to inverse cost slope
        for (Generator &g : generators) g.participation = (1.0 / g.a) / inv_cost_sum;
    } else {
        require(std::abs(part_sum - 1.0) <= 1e-9,
                "generator participation factors must sum to 1");
    }
    c.generators_ = std::move(generators);

    for (LoadPoint &l : loads) {
        check_bus(l.bus, "load");
        if (l.p_d > 0) {
            l.lr = l.q_d / l.p_d;
        } else {
            l.lr = 0.0; // q_d carried as a fixed injection
        }
        require(std::isfinite(l.lr), "load at bus " + std::to_string(l.bus) +
                                         ": reactive coupling not finite");
    }
    c.loads_ = std::move(loads);

    for (const ResUnit &r : res_units) {
        check_bus(r.bus, "res unit");
        require(r.p_r >= 0, "res unit at bus " + std::to_string(r.bus) +
                                ": p_r must be nonnegative");
        require(r.p_r <= r.s_max, "res unit at bus " + std::to_string(r.bus) +
                                      ": p_r exceeds rating s_max");
    }
    c.res_units_ = std::move(res_units);

    // connectivity over the branch graph
    std::vector<char> seen(c.buses_.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    std::vector<std::vector<int>> adj(c.buses_.size());
    for (const Branch &br : c.branches_) {
        int u = c.bus_index(br.from), v = c.bus_index(br.to);
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
    }
    require(std::all_of(seen.begin(), seen.end(), [](char s) { return s; }),
            "network graph is not connected");

    return c;
}

int NetworkCase::bus_index(int bus_id) const {
    return bus_index_impl(bus_id, bus_ids_);
}

int NetworkCase::bus_index_impl(int bus_id, const std::vector<int> &ids) {
    auto it = std::lower_bound(ids.begin(), ids.end(), bus_id);
    if (it == ids.end() || *it != bus_id)
        throw ModelError("unknown bus id " + std::to_string(bus_id));
    return static_cast<int>(it - ids.begin());
}

// ---------------------------------------------------------------------------
// MATPOWER-compatible .m subset
// ---------------------------------------------------------------------------

namespace {

struct MRow {
    std::vector<double> values;
    int line = 0;
};

// Extracts the numeric rows of "mpc.<name> = [ ... ];".
std::vector<MRow> read_matrix(const std::string &text, const std::string &name,
                              const std::string &src) {
    const std::string key = "mpc." + name;
    size_t pos = 0;
    while (true) {
        pos = text.find(key, pos);
        if (pos == std::string::npos) return {};
        size_t after = pos + key.size();
        while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after])))
            ++after;
        if (after < text.size() && text[after] == '=') break;
        pos = after;
    }
    int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
    size_t open = text.find('[', pos);
    size_t close = text.find(']', open);
    if (open == std::string::npos || close == std::string::npos)
        throw ParseError("unterminated matrix for " + key, src, line);

    std::vector<MRow> rows;
    MRow current;
    current.line = line;
    std::string token;
    int cur_line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + open, '\n'));
    auto flush_token = [&]() {
        if (token.empty()) return;
        try {
            size_t used = 0;
            double v = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            current.values.push_back(v);
        } catch (const std::exception &) {
            throw ParseError("bad numeric token '" + token + "' in " + key, src, cur_line);
        }
        token.clear();
    };
    auto flush_row = [&]() {
        flush_token();
        if (!current.values.empty()) rows.push_back(current);
        current = MRow{};
        current.line = cur_line;
    };
    for (size_t i = open + 1; i < close; ++i) {
        char ch = text[i];
        if (ch == '\n') {
            flush_row();
            ++cur_line;
        } else if (ch == ';') {
            flush_row();
        } else if (ch == '%') {
            flush_row();
            while (i < close && text[i] != '\n') ++i;
            --i;
        } else if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
            flush_token();
        } else {
            token.push_back(ch);
        }
    }
    flush_row();
    return rows;
}

double read_scalar(const std::string &text, const std::string &name,
                   const std::string &src) {
    const std::string key = "mpc." + name;
    size_t pos = text.find(key);
    if (pos == std::string::npos)
        throw ParseError("missing " + key, src, 1);
    int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + pos, '\n'));
    size_t eq = text.find('=', pos);
    size_t end = text.find(';', eq);
    if (eq == std::string::npos || end == std::string::npos)
        throw ParseError("malformed " + key, src, line);
    try {
        return std::stod(text.substr(eq + 1, end - eq - 1));
    } catch (const std::exception &) {
        throw ParseError("bad value for " + key, src, line);
    }
}

NetworkCase parse_mcase(std::istream &in, const std::string &src,
                        const ParseOptions &popts) {
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    const double base = read_scalar(text, "baseMVA", src);
    auto bus_rows = read_matrix(text, "bus", src);
    auto gen_rows = read_matrix(text, "gen", src);
    auto branch_rows = read_matrix(text, "branch", src);
    auto cost_rows = read_matrix(text, "gencost", src);
    if (bus_rows.empty()) throw ParseError("missing mpc.bus table", src, 1);
    if (gen_rows.empty()) throw ParseError("missing mpc.gen table", src, 1);
    if (branch_rows.empty()) throw ParseError("missing mpc.branch table", src, 1);
    if (cost_rows.size() != gen_rows.size())
        throw ParseError("gencost rows (" + std::to_string(cost_rows.size()) +
                             ") do not match gen rows (" +
                             std::to_string(gen_rows.size()) + ")",
                         src, cost_rows.empty() ? 1 : cost_rows.front().line);

    std::vector<Bus> buses;
    std::vector<LoadPoint> loads;
    for (const MRow &row : bus_rows) {
        const auto &v = row.values;
        if (v.size() < 13)
            throw ParseError("bus row needs 13 columns", src, row.line);
        Bus bus;
        bus.id = static_cast<int>(v[0]);
        int type = static_cast<int>(v[1]);
        switch (type) {
        case 3: bus.type = BusType::reference; break;
        case 2: bus.type = BusType::generator; break;
        case 1: bus.type = BusType::load_only; break;
        default:
            throw ParseError("unsupported bus type " + std::to_string(type), src, row.line);
        }
        if (v[4] != 0.0 || v[5] != 0.0)
            throw ParseError("bus shunts (GS/BS) are not supported", src, row.line);
        bus.v_max = v[11];
        bus.v_min = v[12];
        buses.push_back(bus);
        if (v[2] != 0.0 || v[3] != 0.0) {
            LoadPoint l;
            l.bus = bus.id;
            l.p_d = v[2] / base;
            l.q_d = v[3] / base;
            loads.push_back(l);
        }
    }

    std::vector<Generator> gens;
    for (size_t i = 0; i < gen_rows.size(); ++i) {
        const auto &v = gen_rows[i].values;
        if (v.size() < 10)
            throw ParseError("gen row needs 10 columns", src, gen_rows[i].line);
        if (v.size() > 7 && v[7] == 0.0) continue; // out of service
        Generator g;
        g.bus = static_cast<int>(v[0]);
        g.q_max = v[3] / base;
        g.q_min = v[4] / base;
        g.p_max = v[8] / base;
        g.p_min = v[9] / base;

        const auto &cv = cost_rows[i].values;
        if (cv.size() < 4 || static_cast<int>(cv[0]) != 2)
            throw ParseError("only polynomial gencost (model 2) is supported", src,
                             cost_rows[i].line);
        int ncost = static_cast<int>(cv[3]);
        if (static_cast<int>(cv.size()) < 4 + ncost)
            throw ParseError("gencost row is short of coefficients", src,
                             cost_rows[i].line);
        if (ncost == 2) {
            g.a = cv[4] * base; // $/MWh -> $/pu-h
            g.b = cv[5];
        } else if (ncost == 3) {
            if (!popts.convert_quadratic_cost)
                throw ParseError("quadratic gencost needs the tangent-line "
                                 "conversion option",
                                 src, cost_rows[i].line);
            // tangent line at p_max/2 keeps the cost linear
            double c2 = cv[4], c1 = cv[5], c0 = cv[6];
            double p0 = v[8] / 2.0; // MW
            g.a = (2.0 * c2 * p0 + c1) * base;
            g.b = c0 - c2 * p0 * p0;
        } else {
            throw ParseError("unsupported gencost ncost=" + std::to_string(ncost), src,
                             cost_rows[i].line);
        }
        gens.push_back(g);
    }

    std::vector<Branch> branches;
    for (const MRow &row : branch_rows) {
        const auto &v = row.values;
        if (v.size() < 13)
            throw ParseError("branch row needs 13 columns", src, row.line);
        if (v[10] == 0.0) continue; // out of service
        Branch br;
        br.from = static_cast<int>(v[0]);
        br.to = static_cast<int>(v[1]);
        br.r = v[2];
        br.x = v[3];
        br.b_sh = v[4];
        br.p_max = v[5] > 0 ? v[5] / base : 99.0;
        br.tap_mag = v[8] != 0.0 ? v[8] : 1.0;
        br.tap_shift = v[9] * kPi / 180.0;
        double angmax = v[12];
        if (angmax > 0.0 && angmax < 360.0)
            br.theta_diff_max = angmax * kPi / 180.0;
        branches.push_back(br);
    }

    return NetworkCase::create(base, std::move(buses), std::move(branches),
                               std::move(gens), std::move(loads), {});
}

// ---------------------------------------------------------------------------
// Native JSON schema
// ---------------------------------------------------------------------------

using Json = nlohmann::ordered_json;

NetworkCase parse_json_case(std::istream &in, const std::string &src) {
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(e.what(), src, 1);
    }
    try {
        std::vector<Bus> buses;
        for (const auto &jb : j.at("buses")) {
            Bus b;
            b.id = jb.at("id").get<int>();
            const std::string t = jb.at("type").get<std::string>();
            if (t == "reference") b.type = BusType::reference;
            else if (t == "generator") b.type = BusType::generator;
            else if (t == "load_only") b.type = BusType::load_only;
            else throw ModelError("unknown bus type '" + t + "'");
            b.v_min = jb.at("v_min").get<double>();
            b.v_max = jb.at("v_max").get<double>();
            b.theta_min = jb.value("theta_min", -kPi / 2);
            b.theta_max = jb.value("theta_max", kPi / 2);
            buses.push_back(b);
        }
        std::vector<Branch> branches;
        for (const auto &jb : j.at("branches")) {
            Branch br;
            br.from = jb.at("from").get<int>();
            br.to = jb.at("to").get<int>();
            br.r = jb.at("r").get<double>();
            br.x = jb.at("x").get<double>();
            br.b_sh = jb.value("b_sh", 0.0);
            br.tap_mag = jb.value("tap_mag", 1.0);
            br.tap_shift = jb.value("tap_shift", 0.0);
            br.p_max = jb.at("p_max").get<double>();
            br.theta_diff_max = jb.value("theta_diff_max", kPi / 4);
            branches.push_back(br);
        }
        std::vector<Generator> gens;
        for (const auto &jg : j.at("generators")) {
            Generator g;
            g.bus = jg.at("bus").get<int>();
            g.a = jg.at("a").get<double>();
            g.b = jg.at("b").get<double>();
            g.p_min = jg.at("p_min").get<double>();
            g.p_max = jg.at("p_max").get<double>();
            g.q_min = jg.at("q_min").get<double>();
            g.q_max = jg.at("q_max").get<double>();
            g.ramp_limit = jg.value("ramp_limit", -1.0);
            g.participation = jg.value("participation", 0.0);
            gens.push_back(g);
        }
        std::vector<LoadPoint> loads;
        for (const auto &jl : j.at("loads")) {
            LoadPoint l;
            l.bus = jl.at("bus").get<int>();
            l.p_d = jl.at("p_d").get<double>();
            l.q_d = jl.at("q_d").get<double>();
            loads.push_back(l);
        }
        std::vector<ResUnit> res;
        if (j.contains("res_units")) {
            for (const auto &jr : j.at("res_units")) {
                ResUnit r;
                r.bus = jr.at("bus").get<int>();
                r.p_r = jr.at("p_r").get<double>();
                r.s_max = jr.at("s_max").get<double>();
                res.push_back(r);
            }
        }
        return NetworkCase::create(j.at("base_mva").get<double>(), std::move(buses),
                                   std::move(branches), std::move(gens),
                                   std::move(loads), std::move(res));
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(e.what(), src, 1);
    }
}

} // namespace

NetworkCase parse_case(std::istream &in, CaseFormat format,
                       const std::string &source_name,
                       const ParseOptions &opts) {
    switch (format) {
    case CaseFormat::mcase: return parse_mcase(in, source_name, opts);
    case CaseFormat::native_json: return parse_json_case(in, source_name);
    }
    throw ModelError("unknown case format");
}

NetworkCase load_case(const std::filesystem::path &path,
                      const ParseOptions &opts) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open case file " + path.string());
    CaseFormat fmt = path.extension() == ".m" ? CaseFormat::mcase
                                              : CaseFormat::native_json;
    return parse_case(in, fmt, path.filename().string(), opts);
}

std::string to_canonical_json(const NetworkCase &c) {
    Json j;
    j["base_mva"] = c.base_mva();
    j["buses"] = Json::array();
    for (const Bus &b : c.buses()) {
        Json jb;
        jb["id"] = b.id;
        jb["type"] = b.type == BusType::reference    ? "reference"
                     : b.type == BusType::generator ? "generator"
                                                     : "load_only";
        jb["v_min"] = b.v_min;
        jb["v_max"] = b.v_max;
        jb["theta_min"] = b.theta_min;
        jb["theta_max"] = b.theta_max;
        j["buses"].push_back(jb);
    }
    j["branches"] = Json::array();
    for (const Branch &br : c.branches()) {
        Json jb;
        jb["from"] = br.from;
        jb["to"] = br.to;
        jb["r"] = br.r;
        jb["x"] = br.x;
        jb["b_sh"] = br.b_sh;
        jb["tap_mag"] = br.tap_mag;
        jb["tap_shift"] = br.tap_shift;
        jb["p_max"] = br.p_max;
        jb["theta_diff_max"] = br.theta_diff_max;
        j["branches"].push_back(jb);
    }
    j["generators"] = Json::array();
    for (const Generator &g : c.generators()) {
        Json jg;
        jg["bus"] = g.bus;
        jg["a"] = g.a;
        jg["b"] = g.b;
        jg["p_min"] = g.p_min;
        jg["p_max"] = g.p_max;
        jg["q_min"] = g.q_min;
        jg["q_max"] = g.q_max;
        jg["ramp_limit"] = g.ramp_limit;
        jg["participation"] = g.participation;
        j["generators"].push_back(jg);
    }
    j["loads"] = Json::array();
    for (const LoadPoint &l : c.loads()) {
        Json jl;
        jl["bus"] = l.bus;
        jl["p_d"] = l.p_d;
        jl["q_d"] = l.q_d;
        jl["lr"] = l.lr;
        j["loads"].push_back(jl);
    }
    j["res_units"] = Json::array();
    for (const ResUnit &r : c.res_units()) {
        Json jr;
        jr["bus"] = r.bus;
        jr["p_r"] = r.p_r;
        jr["s_max"] = r.s_max;
        j["res_units"].push_back(jr);
    }
    return j.dump(2) + "\n";
}

AdmittanceMatrix build_admittance(const NetworkCase &c) {
    const int n = static_cast<int>(c.buses().size());
    AdmittanceMatrix adm;
    adm.g.resize(n, n);
    adm.b.resize(n, n);
    const size_t nb = c.branches().size();
    adm.y_ff.resize(nb);
    adm.y_ft.resize(nb);
    adm.y_tf.resize(nb);
    adm.y_tt.resize(nb);

    std::vector<Eigen::Triplet<double>> tg, tb;
    for (size_t k = 0; k < nb; ++k) {
        const Branch &br = c.branches()[k];
        if (br.r == 0.0 && br.x == 0.0)
            throw ModelError("branch " + std::to_string(br.from) + "-" +
                             std::to_string(br.to) + " has zero series impedance");
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> ysh(0.0, br.b_sh / 2.0);
        const std::complex<double> tap =
            std::polar(br.tap_mag, br.tap_shift);

        adm.y_ff[k] = (ys + ysh) / std::norm(tap);
        adm.y_ft[k] = -ys / std::conj(tap);
        adm.y_tf[k] = -ys / tap;
        adm.y_tt[k] = ys + ysh;

        const int i = c.bus_index(br.from), j = c.bus_index(br.to);
        tg.emplace_back(i, i, adm.y_ff[k].real());
        tb.emplace_back(i, i, adm.y_ff[k].imag());
        tg.emplace_back(i, j, adm.y_ft[k].real());
        tb.emplace_back(i, j, adm.y_ft[k].imag());
        tg.emplace_back(j, i, adm.y_tf[k].real());
        tb.emplace_back(j, i, adm.y_tf[k].imag());
        tg.emplace_back(j, j, adm.y_tt[k].real());
        tb.emplace_back(j, j, adm.y_tt[k].imag());
    }
    adm.g.setFromTriplets(tg.begin(), tg.end());
    adm.b.setFromTriplets(tb.begin(), tb.end());
    return adm;
}

NetworkCase place_res(const NetworkCase &c, double penetration, unsigned seed,
                      ResPlacement mode) {
    require(penetration >= 0.0 && penetration <= 1.0,
            "penetration must lie in [0, 1]");
    if (penetration == 0.0) return c;

    double cap = 0.0;
    for (const Generator &g : c.generators()) cap += g.p_max;
    double target = penetration * cap;

    // aggregate load per bus
    std::map<int, double> load_at; // bus id -> p_d
    for (const LoadPoint &l : c.loads())
        if (l.p_d > 0) load_at[l.bus] += l.p_d;
    std::vector<std::pair<int, double>> hosts(load_at.begin(), load_at.end());
    if (mode == ResPlacement::largest_load_first) {
        std::stable_sort(hosts.begin(), hosts.end(),
                         [](const auto &a, const auto &b) {
                             if (a.second != b.second) return a.second > b.second;
                             return a.first < b.first;
                         });
    } else {
        std::mt19937 rng(seed);
        std::shuffle(hosts.begin(), hosts.end(), rng);
    }

    std::vector<ResUnit> res = c.res_units();
    double remaining = target;
    for (const auto &[bus, pd] : hosts) {
        if (remaining <= 1e-12) break;
        ResUnit r;
        r.bus = bus;
        r.p_r = std::min(remaining, pd);
        r.s_max = 1.1 * r.p_r;
        remaining -= r.p_r;
        res.push_back(r);
    }
    // remaining > 0 means the load buses cannot host the requested
    // penetration; the placed total is reported by the case itself.

    return NetworkCase::create(c.base_mva(), c.buses(), c.branches(),
                               c.generators(), c.loads(), std::move(res));
}

} // namespace ropf::net
