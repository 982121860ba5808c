// lumpbound: bounds on marginal and limit expectations of a CTMC through a
// lumped imprecise chain. One JSON report on stdout per run, a human summary
// on stderr.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lumpbound/lumpbound.hpp"

namespace {

using nlohmann::json;
using namespace lumpbound;

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_failure = 3;
constexpr int exit_delta = 4;

struct Common {
    bool no_timestamp = false;
    std::string command;
};

struct MarginalArgs {
    std::string model;
    std::vector<std::string> functions;
    double time = 0.0;
    double eps = 1e-6;
    std::string method = "auto";
    bool exact = false;
};

struct LimitArgs {
    std::string model;
    std::vector<std::string> functions;
    std::optional<double> delta;
    bool auto_delta = false;
    double tol = 1e-10;
    std::size_t max_iter = 1'000'000;
    bool exact = false;
    std::vector<double> sweep;
    bool trace = false;
};

struct GenArgs {
    std::string kind = "random";
    std::size_t n = 8;
    std::size_t coarse = 3;
    double lo = 0.1;
    double hi = 5.0;
    double density = 0.3;
    std::size_t m = 3;
    std::size_t k = 6;
    double mu0 = 1.0;
    std::vector<double> mu;
    std::vector<double> p;
    std::uint64_t max_states = 1'000'000;
    std::uint64_t seed = 1;
    std::string out;
};

struct VerifyArgs {
    std::string suite = "quick";
    std::uint64_t seed = 1;
    std::string witness = "lumpbound-witness.json";
};

std::string join_argv(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

json base_report(const Common& c) {
    json r{{"command", c.command}, {"version", version}};
    if (!c.no_timestamp) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::ostringstream ts;
        ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
        r["timestamp"] = ts.str();
    }
    return r;
}

void emit(json& report, const Common& c, std::chrono::steady_clock::time_point start) {
    if (!c.no_timestamp) {
        report["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    std::cout << report.dump(2) << '\n';
}

std::optional<std::size_t> oracle_cap_override() {
    const char* env = std::getenv("LUMPBOUND_ORACLE_CAP");
    if (!env || !*env) return std::nullopt;
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(env, &pos);
        if (pos != std::string(env).size()) throw std::invalid_argument(env);
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, std::string("LUMPBOUND_ORACLE_CAP is not an integer: ") + env);
    }
}

VerifySettings verify_settings() {
    VerifySettings vs;
    if (auto cap = oracle_cap_override()) vs.marginal_cap = vs.stationary_cap = *cap;
    return vs;
}

LumpedModel lumped_from(const Model& m) {
    if (m.initial.is_positive()) return {m.rates, m.initial, m.lumping};
    warn("initial distribution has zero entries; mixing in 1e-9 of the uniform distribution");
    return LumpedModel::with_smoothed_initial(m.rates, m.initial, m.lumping);
}

json settings_json(const MarginalSettings& s) {
    return {{"eps", s.eps}, {"operation_cap", s.operation_cap}, {"uniformization_work", s.uniformization_work}};
}

int run_marginal(const MarginalArgs& a, const Common& c) {
    const auto start = std::chrono::steady_clock::now();
    const auto model = load_model(a.model);
    const auto lumped = lumped_from(model);
    auto vs = verify_settings();
    vs.marginal.eps = a.eps;
    if (a.method == "grid") vs.marginal.method = MarginalMethod::grid;
    if (a.method == "uniformized") vs.marginal.method = MarginalMethod::uniformized;

    json report = base_report(c);
    report["settings"] = settings_json(vs.marginal);
    report["settings"]["time"] = a.time;
    report["settings"]["method"] = a.method;
    report["settings"]["exact"] = a.exact;
    report["model"] = model_digest(lumped);
    report["results"] = json::array();
    bool all_pass = true;
    for (const auto& name : a.functions) {
        const auto& f = model.function(name);
        json row{{"function", name}};
        BoundResult b;
        bool oracle_done = false;
        if (a.exact) {
            try {
                const auto rep = verify_bracketing(lumped, f, BoundKind::marginal, a.time, vs);
                b = rep.bounds;
                row["oracle"] = {{"exact", rep.exact}, {"slack", rep.slack}, {"verdict", rep.pass ? "PASS" : "FAIL"}};
                all_pass = all_pass && rep.pass;
                oracle_done = true;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::OracleCapExceeded) throw;
                warn(e.what());
                row["oracle"] = {{"skipped", e.what()}};
            }
        }
        if (!oracle_done) b = marginal_bounds(lumped, f, a.time, vs.marginal);
        row["bounds"] = to_json(b);
        std::cerr << name << ": E f(X_" << a.time << ") in [" << std::setprecision(10) << b.lower << ", " << b.upper
                  << "] (" << b.method << ", " << b.steps << " steps)";
        if (oracle_done) std::cerr << "  exact " << row["oracle"]["exact"].get<double>() << "  "
                                   << row["oracle"]["verdict"].get<std::string>();
        std::cerr << '\n';
        report["results"].push_back(std::move(row));
    }
    if (a.exact) report["verdict"] = all_pass ? "PASS" : "FAIL";
    emit(report, c, start);
    return all_pass ? exit_ok : exit_failure;
}

int run_limit(const LimitArgs& a, const Common& c) {
    const auto start = std::chrono::steady_clock::now();
    const auto model = load_model(a.model);
    const auto lumped = lumped_from(model);
    auto vs = verify_settings();
    vs.limit.tol = a.tol;
    vs.limit.max_iter = a.max_iter;
    vs.limit.trace = a.trace;
    vs.limit.delta = a.auto_delta ? std::nullopt : a.delta;
    const double delta = vs.limit.delta.value_or(default_delta(lumped.rates()));

    json report = base_report(c);
    report["settings"] = {{"delta", delta}, {"tol", a.tol}, {"max_iter", a.max_iter}, {"exact", a.exact}};
    report["model"] = model_digest(lumped);
    report["results"] = json::array();
    bool all_pass = true;
    for (const auto& name : a.functions) {
        const auto& f = model.function(name);
        json row{{"function", name}};
        std::optional<double> exact;
        if (a.exact) {
            try {
                const auto rep = verify_bracketing(lumped, f, BoundKind::limit, 0.0, vs);
                exact = rep.exact;
                row["bounds"] = to_json(rep.bounds);
                row["oracle"] = {{"exact", rep.exact}, {"slack", rep.slack}, {"verdict", rep.pass ? "PASS" : "FAIL"}};
                all_pass = all_pass && rep.pass;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::OracleCapExceeded) throw;
                warn(e.what());
                row["oracle"] = {{"skipped", e.what()}};
            }
        }
        if (!row.contains("bounds")) row["bounds"] = to_json(limit_bounds(lumped, f, vs.limit));
        const auto& b = row["bounds"];
        std::cerr << name << ": limit in [" << std::setprecision(10) << b["lower"].get<double>() << ", "
                  << b["upper"].get<double>() << "] after " << b["iterations"].get<std::size_t>()
                  << " iterations, gap " << b["convergence_gap"].get<double>()
                  << (b["converged"].get<bool>() ? "" : " (not converged)");
        if (exact) std::cerr << "  exact " << *exact << "  " << row["oracle"]["verdict"].get<std::string>();
        std::cerr << '\n';

        if (!a.sweep.empty()) {
            json table = json::array();
            std::cerr << "  delta            lower            upper            iterations\n";
            for (const auto& s : delta_sweep(lumped, f, a.sweep, a.tol, a.max_iter)) {
                json entry = to_json(s);
                if (exact) {
                    const double slack = vs.limit_slack;
                    entry["verdict"] = (s.lower - slack <= *exact && *exact <= s.upper + slack) ? "PASS" : "FAIL";
                    all_pass = all_pass && entry["verdict"] == "PASS";
                }
                std::cerr << "  " << std::setw(16) << std::left << s.delta << " " << std::setw(16) << s.lower << " "
                          << std::setw(16) << s.upper << " " << s.steps << '\n';
                table.push_back(std::move(entry));
            }
            row["sweep"] = std::move(table);
        }
        report["results"].push_back(std::move(row));
    }
    if (a.exact) report["verdict"] = all_pass ? "PASS" : "FAIL";
    emit(report, c, start);
    return all_pass ? exit_ok : exit_failure;
}

int run_gen(const GenArgs& a, const Common& c) {
    const auto start = std::chrono::steady_clock::now();
    json report = base_report(c);
    Model model = [&] {
        if (a.kind == "random") {
            RandomModelSpec spec;
            spec.states = a.n;
            spec.lumped_states = a.coarse;
            spec.rate_lo = a.lo;
            spec.rate_hi = a.hi;
            spec.density = a.density;
            spec.seed = a.seed;
            auto m = random_model(spec);
            m.functions.emplace("constant", StateFunction::constant(m.space(), 1.0));
            report["settings"] = {{"kind", a.kind}, {"n", a.n},   {"coarse", a.coarse},   {"lo", a.lo},
                                  {"hi", a.hi},     {"density", a.density}, {"seed", a.seed}};
            return m;
        }
        QueueNetworkSpec spec;
        spec.servers = a.m;
        spec.customers = a.k;
        spec.series_rate = a.mu0;
        spec.parallel_rates = a.mu.size() == 1 ? std::vector<double>(a.m, a.mu[0]) : a.mu;
        if (a.mu.empty()) spec.parallel_rates.assign(a.m, 0.5);
        spec.routing = a.p.empty() ? std::vector<double>(a.m, 1.0 / static_cast<double>(a.m)) : a.p;
        spec.max_states = a.max_states;
        report["settings"] = {{"kind", a.kind},     {"m", a.m},       {"k", a.k},
                              {"mu0", a.mu0},       {"mu", spec.parallel_rates}, {"p", spec.routing},
                              {"max_states", a.max_states}};
        return build_queueing_network(spec).to_model();
    }();
    save_model(model, a.out);
    report["output"] = a.out;
    report["model"] = {{"states", model.space()->size()}, {"lumped_states", model.lumping.coarse_size()}};
    std::vector<std::string> names;
    for (const auto& [name, f] : model.functions) names.push_back(name);
    report["functions"] = names;
    std::cerr << "wrote " << a.out << ": " << model.space()->size() << " states, " << model.lumping.coarse_size()
              << " lumped states\n";
    emit(report, c, start);
    return exit_ok;
}

int run_verify(const VerifyArgs& a, const Common& c) {
    const auto start = std::chrono::steady_clock::now();
    const auto counts = a.suite == "full" ? SuiteCounts::full() : SuiteCounts::quick();
    const auto suite = run_verification_suite(counts, a.seed);

    json report = base_report(c);
    report["settings"] = {{"suite", a.suite},
                          {"seed", a.seed},
                          {"models", counts.models},
                          {"times", counts.times},
                          {"collapse_models", counts.collapse_models},
                          {"envelope_triples", counts.envelope_triples},
                          {"envelope_samples", counts.envelope_samples}};
    report["checks"] = json::array();
    json witnesses = json::array();
    for (const auto& check : suite.checks) {
        json row{{"name", check.name}, {"cases", check.cases}, {"failures", check.failures},
                 {"verdict", check.pass() ? "PASS" : "FAIL"}};
        if (!check.pass()) {
            row["first_failure"] = check.first_failure;
            witnesses.push_back({{"check", check.name}, {"witness", check.witness}});
        }
        std::cerr << (check.pass() ? "PASS " : "FAIL ") << check.name << " (" << check.cases << " cases, "
                  << check.failures << " failures)\n";
        report["checks"].push_back(std::move(row));
    }
    report["verdict"] = suite.pass() ? "PASS" : "FAIL";
    if (!suite.pass()) {
        std::ofstream out(a.witness);
        if (!out) throw Error(ErrorKind::IoError, "cannot write witness file " + a.witness);
        out << witnesses.dump(1) << '\n';
        report["witness_file"] = a.witness;
        std::cerr << "witness written to " << a.witness << '\n';
    }
    emit(report, c, start);
    return suite.pass() ? exit_ok : exit_failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bounds on CTMC expectations through lumped imprecise chains"};
    app.require_subcommand(1);
    Common common;
    common.command = join_argv(argc, argv);
    app.add_flag("--no-timestamp", common.no_timestamp, "Omit timestamp and wall time from the report");
    app.set_version_flag("--version", std::string(version));

    MarginalArgs ma;
    auto* marginal = app.add_subcommand("marginal", "Bounds on E f(X_t)");
    marginal->add_option("--model", ma.model, "Model file")->required();
    marginal->add_option("--function", ma.functions, "Function name (repeatable)")->required();
    marginal->add_option("--time", ma.time, "Time horizon t")->required();
    marginal->add_option("--eps", ma.eps, "Error budget")->capture_default_str();
    marginal->add_option("--method", ma.method, "auto, grid or uniformized")
        ->check(CLI::IsMember({"auto", "grid", "uniformized"}))
        ->capture_default_str();
    marginal->add_flag("--exact", ma.exact, "Also compute pi0 T_t f and a bracketing verdict");
    marginal->add_flag("--no-timestamp", common.no_timestamp);

    LimitArgs la;
    auto* limit = app.add_subcommand("limit", "Bounds on the limit expectation");
    limit->add_option("--model", la.model, "Model file")->required();
    limit->add_option("--function", la.functions, "Function name (repeatable)")->required();
    auto* delta_opt = limit->add_option("--delta", la.delta, "Skeleton step; needs delta * max|Q(x,x)| < 1");
    limit->add_flag("--auto-delta", la.auto_delta, "Use delta = 0.1 / max|Q(x,x)|")->excludes(delta_opt);
    limit->add_option("--tol", la.tol, "Stall tolerance")->capture_default_str();
    limit->add_option("--max-iter", la.max_iter, "Iteration cap")->capture_default_str();
    limit->add_flag("--exact", la.exact, "Also compute pi_inf f and a bracketing verdict");
    limit->add_option("--delta-sweep", la.sweep, "Comma-separated deltas")->delimiter(',');
    limit->add_flag("--trace", la.trace, "Record the per-iteration min sequence");
    limit->add_flag("--no-timestamp", common.no_timestamp);

    GenArgs ga;
    auto* gen = app.add_subcommand("gen", "Write a generated model file");
    gen->add_option("--kind", ga.kind, "random or queue")->check(CLI::IsMember({"random", "queue"}))->capture_default_str();
    gen->add_option("--n", ga.n, "States (random)")->capture_default_str();
    gen->add_option("--coarse", ga.coarse, "Lumped states (random); equal to --n gives identity")->capture_default_str();
    gen->add_option("--lo", ga.lo, "Lowest rate (random)")->capture_default_str();
    gen->add_option("--hi", ga.hi, "Highest rate (random)")->capture_default_str();
    gen->add_option("--density", ga.density, "Extra edge probability (random)")->capture_default_str();
    gen->add_option("--m", ga.m, "Parallel servers (queue)")->capture_default_str();
    gen->add_option("--k", ga.k, "Customers (queue)")->capture_default_str();
    gen->add_option("--mu0", ga.mu0, "Series service rate (queue)")->capture_default_str();
    gen->add_option("--mu", ga.mu, "Parallel rates, one value or M comma-separated (queue)")->delimiter(',');
    gen->add_option("--p", ga.p, "Routing probabilities, M comma-separated (queue)")->delimiter(',');
    gen->add_option("--max-states", ga.max_states, "State-space cap (queue)")->capture_default_str();
    gen->add_option("--seed", ga.seed, "Seed")->capture_default_str();
    gen->add_option("--out", ga.out, "Output model file")->required();
    gen->add_flag("--no-timestamp", common.no_timestamp);

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "Randomized soundness suites");
    verify->add_option("--suite", va.suite, "quick or full")->check(CLI::IsMember({"quick", "full"}))->capture_default_str();
    verify->add_option("--seed", va.seed, "Base seed")->capture_default_str();
    verify->add_option("--witness", va.witness, "Where to write failing witnesses")->capture_default_str();
    verify->add_flag("--no-timestamp", common.no_timestamp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }

    try {
        if (*marginal) return run_marginal(ma, common);
        if (*limit) return run_limit(la, common);
        if (*gen) return run_gen(ga, common);
        if (*verify) return run_verify(va, common);
    } catch (const Error& e) {
        std::cerr << "lumpbound: " << to_string(e.kind()) << ": " << e.what() << '\n';
        return e.kind() == ErrorKind::DeltaTooLarge ? exit_delta : exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "lumpbound: error: " << e.what() << '\n';
        return exit_validation;
    }
    return exit_validation;
}
