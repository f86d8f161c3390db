#include "ropf/mcsval.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace ropf::mcs {

using acpf::Scenario;
using acpf::ScenarioLabel;

namespace {

// splitmix64; decouples the per-scenario streams from the master seed
std::uint64_t mix(std::uint64_t v) {
    v += 0x9e3779b97f4a7c15ULL;
    v = (v ^ (v >> 30)) * 0xbf58476d1ce4ebdbULL;
    v = (v ^ (v >> 27)) * 0x94d049bb133111ebULL;
    return v ^ (v >> 31);
}

} // namespace

std::vector<Scenario> generate_scenarios(const opf::UncertaintySpec &unc,
                                         ScenarioLabel mode, int n_scenarios,
                                         std::uint64_t seed) {
    if (n_scenarios < 1) throw ModelError("scenario count must be at least 1");
    const int nu = unc.size();
    if (mode == ScenarioLabel::out_of_range) {
        bool degenerate = true;
        for (const auto &uc : unc.coords)
            if (uc.mu_bar > 0.0) degenerate = false;
        if (degenerate)
            throw ModelError("out-of-range sampling needs a nonzero deviation box");
    }

    std::vector<Scenario> out(static_cast<size_t>(n_scenarios));
    for (int k = 0; k < n_scenarios; ++k) {
        Scenario &sc = out[static_cast<size_t>(k)];
        sc.id = static_cast<std::uint64_t>(k);
        sc.label = mode;
        sc.mu.resize(nu);
        std::mt19937_64 rng(mix(seed ^ mix(static_cast<std::uint64_t>(k) + 1)));
        for (int j = 0; j < nu; ++j) {
            const auto &uc = unc.coords[j];
            if (mode == ScenarioLabel::in_range) {
                if (uc.mu_bar <= 0.0) {
                    sc.mu[j] = 0.0;
                    continue;
                }
                std::uniform_real_distribution<double> dist(-uc.mu_bar, uc.mu_bar);
                sc.mu[j] = dist(rng);
            } else {
                const double band = 0.05 * std::abs(uc.nominal);
                if (band <= 0.0) {
                    sc.mu[j] = 0.0;
                    continue;
                }
                const bool high = (rng() & 1) != 0;
                std::uniform_real_distribution<double> dist(0.0, band);
                const double extra = band - dist(rng); // in (0, band]
                sc.mu[j] = high ? uc.mu_bar + extra : -(uc.mu_bar + extra);
            }
        }
    }
    return out;
}

namespace {

struct Partial {
    int violated = 0;
    int diverged = 0;
    std::map<std::string, int> per_family;
    std::map<std::string, EnvelopeEntry> env;
};

void track(std::map<std::string, EnvelopeEntry> &env, const std::string &key,
           double value, double limit) {
    EnvelopeEntry &e = env[key];
    e.max_value = std::max(e.max_value, value);
    e.min_value = std::min(e.min_value, value);
    e.limit = limit;
}

void merge(Partial &into, const Partial &from) {
    into.violated += from.violated;
    into.diverged += from.diverged;
    for (const auto &[k, v] : from.per_family) into.per_family[k] += v;
    for (const auto &[k, e] : from.env) {
        EnvelopeEntry &t = into.env[k];
        t.max_value = std::max(t.max_value, e.max_value);
        t.min_value = std::min(t.min_value, e.min_value);
        t.limit = e.limit;
    }
}

Partial process_range(const net::NetworkCase &c,
                      const robust::RobustSetpoints &sp,
                      const opf::UncertaintySpec &unc,
                      const std::vector<Scenario> &scenarios, size_t begin,
                      size_t end, const ValidateOptions &opts) {
    Partial part;
    opf::BuildOptions build = opts.build;
    if (build.ramp_mode != opf::RampMode::fraction_of_pmax && !build.base_point_pg)
        build.base_point_pg = sp.pg; // base-point limits priced at the schedule
    for (size_t k = begin; k < end; ++k) {
        const Scenario &sc = scenarios[k];
        acpf::PfSolution pf = acpf::run_pf(c, sp, unc, sc, opts.pf);
        if (!pf.converged) {
            ++part.diverged;
            ++part.violated;
            ++part.per_family["divergence"];
            continue;
        }
        acpf::ViolationRecord rec =
            acpf::evaluate_constraints(c, unc, sc, pf, build);
        if (rec.any()) ++part.violated;
        for (const acpf::Violation &v : rec.worst_per_family)
            if (v.margin < -1e-6) ++part.per_family[v.family];

        for (size_t b = 0; b < c.branches().size(); ++b) {
            const double worst = std::max(std::abs(pf.flow_from[b]),
                                          std::abs(pf.flow_to[b]));
            track(part.env, "flow:" + std::to_string(b), worst,
                  c.branches()[b].p_max);
        }
        for (size_t i = 0; i < c.buses().size(); ++i)
            track(part.env, "voltage:" + std::to_string(c.buses()[i].id),
                  pf.v[static_cast<long>(i)], c.buses()[i].v_max);
        const Eigen::VectorXd ramp = opf::resolve_ramp_limits(c, build);
        for (size_t g = 0; g < c.generators().size(); ++g) {
            track(part.env, "pg:" + std::to_string(g),
                  pf.pg_hat[static_cast<long>(g)], c.generators()[g].p_max);
            track(part.env, "qg:" + std::to_string(g),
                  pf.qg_hat[static_cast<long>(g)], c.generators()[g].q_max);
            track(part.env, "ramp:" + std::to_string(g),
                  std::abs(c.generators()[g].participation * pf.psi),
                  ramp[static_cast<long>(g)]);
        }
    }
    return part;
}

} // namespace

ValidationReport validate(const net::NetworkCase &c,
                          const robust::RobustSetpoints &sp,
                          const opf::UncertaintySpec &unc, ScenarioLabel mode,
                          int n_scenarios, std::uint64_t seed,
                          const ValidateOptions &opts) {
    const std::vector<Scenario> scenarios =
        generate_scenarios(unc, mode, n_scenarios, seed);

    int threads = opts.threads > 0
                      ? opts.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp(threads, 1, 16);
    const size_t chunk =
        (scenarios.size() + static_cast<size_t>(threads) - 1) /
        static_cast<size_t>(threads);

    std::vector<std::future<Partial>> futures;
    for (int t = 0; t < threads; ++t) {
        const size_t begin = static_cast<size_t>(t) * chunk;
        const size_t end = std::min(scenarios.size(), begin + chunk);
        if (begin >= end) break;
        futures.push_back(std::async(std::launch::async, [&, begin, end] {
            return process_range(c, sp, unc, scenarios, begin, end, opts);
        }));
    }
    Partial total;
    for (auto &f : futures) merge(total, f.get());

    ValidationReport rep;
    rep.n_scenarios = n_scenarios;
    rep.mode = mode;
    rep.violated_scenarios = total.violated;
    rep.divergences = total.diverged;
    rep.violation_probability =
        static_cast<double>(total.violated) / static_cast<double>(n_scenarios);
    rep.robust_verdict = total.violated == 0 && total.diverged == 0;
    rep.violations_per_family = std::move(total.per_family);
    rep.envelopes = std::move(total.env);

    if (opts.reference) {
        double eta = 0.0;
        if (opts.reference->pg.size() == sp.pg.size())
            for (long g = 0; g < sp.pg.size(); ++g)
                eta = std::max(eta, std::abs(sp.pg[g] - opts.reference->pg[g]));
        if (opts.reference->cii.size() == sp.cii.size())
            for (long i = 0; i < sp.cii.size(); ++i)
                eta = std::max(eta, std::abs(sp.cii[i] - opts.reference->cii[i]));
        rep.eta = eta;
    }
    return rep;
}

std::string report_to_json(const ValidationReport &r) {
    nlohmann::ordered_json j;
    j["n_scenarios"] = r.n_scenarios;
    j["mode"] = r.mode == ScenarioLabel::in_range ? "in-range" : "out-of-range";
    j["violated_scenarios"] = r.violated_scenarios;
    j["divergences"] = r.divergences;
    j["violation_probability"] = r.violation_probability;
    j["robust"] = r.robust_verdict;
    j["violations_per_family"] = r.violations_per_family;
    if (r.eta) j["eta"] = *r.eta;
    return j.dump(2) + "\n";
}

std::string envelopes_to_csv(const ValidationReport &r) {
    std::ostringstream os;
    os.precision(12);
    os << "key,max_value,min_value,limit\n";
    for (const auto &[k, e] : r.envelopes)
        os << k << "," << e.max_value << "," << e.min_value << "," << e.limit
           << "\n";
    return os.str();
}

} // namespace ropf::mcs
