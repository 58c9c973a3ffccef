// Command-line front-end: ingest operators, run analyses and experiments,
// emit reports. Single binary, one subcommand per analysis.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "obsb/io.hpp"

namespace {

using obsb::json;

struct CommonFlags {
    std::optional<double> delta_upper;
    bool attest = false;
    std::string output;
    std::string format = "json";
    std::uint64_t seed = 12345;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& fl) {
    cmd->add_option("--delta-upper", fl.delta_upper,
                    "attested analytic upper bound on the ergodicity coefficient");
    cmd->add_flag("--attest", fl.attest,
                  "confirm the --delta-upper value is an analytically certified bound");
    cmd->add_option("-o,--output", fl.output, "write the report to this path instead of stdout");
    cmd->add_option("--format", fl.format, "output format")
        ->check(CLI::IsMember({"json", "csv"}));
    cmd->add_option("--seed", fl.seed, "root random seed");
    cmd->add_option("--threads", fl.threads, "thread cap (0 = OBSB_THREADS env or 1)");
}

std::optional<double> attested_upper(const CommonFlags& fl) {
    if (fl.delta_upper && !fl.attest)
        throw obsb::precondition_error("--delta-upper requires the explicit --attest flag");
    return fl.delta_upper;
}

void apply_threads(const CommonFlags& fl) {
    int t = fl.threads;
    if (t == 0)
        if (const char* env = std::getenv("OBSB_THREADS")) t = std::atoi(env);
    if (t > 0) Eigen::setNbThreads(t);
}

void emit(const CommonFlags& fl, const std::string& text) {
    if (fl.output.empty()) std::cout << text << "\n";
    else obsb::write_text_file(fl.output, text);
}

void log_resolved(const std::string& subcommand, json config) {
    config["subcommand"] = subcommand;
    std::cerr << json{{"resolved_config", config}}.dump() << "\n";
}

obsb::SpaceDescriptor space_from_flags(const std::string& kind, int n, int d, double p) {
    if (kind == "classical") return obsb::SpaceDescriptor::classical(n);
    if (kind == "pcone") return obsb::SpaceDescriptor::pcone(d, p);
    if (kind == "quantum") return obsb::SpaceDescriptor::quantum(d);
    throw obsb::malformed_error("unknown space kind: " + kind);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Markov operator toolkit: ergodicity coefficients, classification, "
                 "and perturbation bounds on ordered Banach spaces with a base"};
    app.require_subcommand(1);

    // analyze ---------------------------------------------------------------
    auto* analyze = app.add_subcommand("analyze", "classify an operator and emit its certificate");
    std::string analyze_path;
    CommonFlags analyze_fl;
    int analyze_nmax = 512, analyze_ncheck = 256, analyze_trace = 64, analyze_attest_power = 1;
    analyze->add_option("operator", analyze_path, "operator JSON file")->required();
    analyze->add_option("--n-max", analyze_nmax, "contractive-power search horizon");
    analyze->add_option("--n-check", analyze_ncheck, "envelope verification horizon");
    analyze->add_option("--trace-limit", analyze_trace, "per-n trace length");
    analyze->add_option("--attest-power", analyze_attest_power,
                        "power the attested bound refers to");
    add_common(analyze, analyze_fl);

    // delta -----------------------------------------------------------------
    auto* delta = app.add_subcommand("delta", "ergodicity coefficient of T, T^k, or A_n(T)");
    std::string delta_path;
    CommonFlags delta_fl;
    int delta_power = 1, delta_cesaro = 0, delta_budget = 64, delta_iters = 500;
    delta->add_option("operator", delta_path, "operator JSON file")->required();
    auto* popt = delta->add_option("--power", delta_power, "evaluate on T^k");
    auto* copt = delta->add_option("--cesaro", delta_cesaro, "evaluate on A_n(T)");
    popt->excludes(copt);
    delta->add_option("--budget", delta_budget, "extreme-point / restart budget");
    delta->add_option("--iters", delta_iters, "hill-climb iterations per restart");
    add_common(delta, delta_fl);

    // bounds ----------------------------------------------------------------
    auto* bounds = app.add_subcommand("bounds", "perturbation bounds for a pair (T, S)");
    std::string bounds_T, bounds_S;
    CommonFlags bounds_fl;
    std::optional<int> bounds_m;
    int bounds_horizon = 16;
    bounds->add_option("T", bounds_T, "unperturbed operator JSON file")->required();
    bounds->add_option("S", bounds_S, "perturbed operator JSON file")->required();
    bounds->add_option("-m,--m", bounds_m, "contraction power (default: certified n0)");
    bounds->add_option("--horizon", bounds_horizon, "trajectory horizon");
    add_common(bounds, bounds_fl);

    // transfer --------------------------------------------------------------
    auto* transfer = app.add_subcommand("transfer", "contraction-transfer verdict for (T, S)");
    std::string transfer_T, transfer_S;
    CommonFlags transfer_fl;
    int transfer_m = 1;
    transfer->add_option("T", transfer_T, "unperturbed operator JSON file")->required();
    transfer->add_option("S", transfer_S, "perturbed operator JSON file")->required();
    transfer->add_option("-m,--m", transfer_m, "contraction power")->required();
    add_common(transfer, transfer_fl);

    // suite -----------------------------------------------------------------
    auto* suite = app.add_subcommand("suite", "randomized property suite over one space");
    CommonFlags suite_fl;
    std::string suite_kind = "classical";
    int suite_n = 4, suite_d = 2, suite_trials = 100, suite_nmax = 64, suite_horizon = 16;
    double suite_p = 2.0;
    suite->add_option("--space", suite_kind, "space kind")
        ->check(CLI::IsMember({"classical", "pcone", "quantum"}));
    suite->add_option("-n,--n", suite_n, "classical state count");
    suite->add_option("-d,--d", suite_d, "pcone tail / quantum Hilbert dimension");
    suite->add_option("-p,--p", suite_p, "pcone exponent");
    suite->add_option("--trials", suite_trials, "trials per invariant");
    suite->add_option("--n-max", suite_nmax, "classification horizon inside the suite");
    suite->add_option("--horizon", suite_horizon, "trajectory horizon inside the suite");
    add_common(suite, suite_fl);

    // experiment ------------------------------------------------------------
    auto* experiment = app.add_subcommand("experiment", "tightness or density experiment");
    CommonFlags exp_fl;
    std::string exp_which, exp_config;
    std::vector<double> exp_epsilons = {0.1, 0.5, 1.0, 1.9};
    experiment->add_option("which", exp_which, "experiment name")
        ->required()
        ->check(CLI::IsMember({"tightness", "density"}));
    experiment->add_option("--config", exp_config, "experiment config JSON file")->required();
    experiment->add_option("--epsilons", exp_epsilons, "density mixture strengths");
    add_common(experiment, exp_fl);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << json{{"error", {{"type", "usage"}, {"message", e.what()}}}}.dump() << "\n";
        return 2;
    }

    try {
        if (*analyze) {
            apply_threads(analyze_fl);
            obsb::ClassifyOptions opts;
            opts.n_max = analyze_nmax;
            opts.n_check = analyze_ncheck;
            opts.trace_limit = analyze_trace;
            opts.seed = analyze_fl.seed;
            opts.delta_upper = attested_upper(analyze_fl);
            opts.attest_power = analyze_attest_power;
            log_resolved("analyze",
                         {{"operator", analyze_path},
                          {"n_max", opts.n_max},
                          {"n_check", opts.n_check},
                          {"trace_limit", opts.trace_limit},
                          {"seed", opts.seed},
                          {"delta_upper", opts.delta_upper ? json(*opts.delta_upper) : json()},
                          {"attest_power", opts.attest_power},
                          {"format", analyze_fl.format}});
            obsb::MarkovOperator T = obsb::operator_from_json(obsb::load_json_file(analyze_path));
            obsb::ErgodicityReport rep = obsb::classify(T, opts);
            emit(analyze_fl, obsb::to_json(rep).dump(2));
        } else if (*delta) {
            apply_threads(delta_fl);
            log_resolved("delta", {{"operator", delta_path},
                                   {"power", delta_power},
                                   {"cesaro", delta_cesaro},
                                   {"budget", delta_budget},
                                   {"iters", delta_iters},
                                   {"seed", delta_fl.seed}});
            obsb::MarkovOperator T = obsb::operator_from_json(obsb::load_json_file(delta_path));
            obsb::DeltaEstimate est;
            if (copt->count() > 0) {
                auto [Tn, An] = obsb::power_and_cesaro(T, delta_cesaro);
                est = obsb::dobrushin_delta(An, delta_budget, delta_fl.seed, delta_iters);
            } else {
                auto [Tn, An] = obsb::power_and_cesaro(T, std::max(1, delta_power));
                est = obsb::dobrushin_delta(Tn, delta_budget, delta_fl.seed, delta_iters);
            }
            emit(delta_fl, obsb::to_json(est).dump(2));
        } else if (*bounds) {
            apply_threads(bounds_fl);
            obsb::TightnessOptions opts;
            opts.m = bounds_m;
            opts.horizon = bounds_horizon;
            opts.seed = bounds_fl.seed;
            opts.delta_upper = attested_upper(bounds_fl);
            log_resolved("bounds",
                         {{"T", bounds_T},
                          {"S", bounds_S},
                          {"m", bounds_m ? json(*bounds_m) : json()},
                          {"horizon", bounds_horizon},
                          {"seed", opts.seed},
                          {"delta_upper", opts.delta_upper ? json(*opts.delta_upper) : json()},
                          {"format", bounds_fl.format}});
            obsb::MarkovOperator T = obsb::operator_from_json(obsb::load_json_file(bounds_T));
            obsb::MarkovOperator S = obsb::operator_from_json(obsb::load_json_file(bounds_S));
            obsb::PerturbationReport rep = obsb::tightness_report(T, S, opts);
            if (bounds_fl.format == "csv") emit(bounds_fl, obsb::perturbation_csv(rep));
            else emit(bounds_fl, obsb::to_json(rep).dump(2));
        } else if (*transfer) {
            apply_threads(transfer_fl);
            auto upper = attested_upper(transfer_fl);
            log_resolved("transfer",
                         {{"T", transfer_T},
                          {"S", transfer_S},
                          {"m", transfer_m},
                          {"delta_upper", upper ? json(*upper) : json()},
                          {"seed", transfer_fl.seed}});
            obsb::MarkovOperator T = obsb::operator_from_json(obsb::load_json_file(transfer_T));
            obsb::MarkovOperator S = obsb::operator_from_json(obsb::load_json_file(transfer_S));
            double delta_m;
            bool certified = false;
            if (T.space.kind == obsb::SpaceKind::Classical) {
                auto [Tm, Am] = obsb::power_and_cesaro(T, transfer_m);
                delta_m = obsb::dobrushin_delta(Tm).value;
                certified = true;
            } else if (upper) {
                delta_m = *upper;
            } else {
                throw obsb::certification_error(
                    "transfer: certified delta(T^m) unavailable off the classical space; "
                    "supply --delta-upper with --attest");
            }
            obsb::Element x0 = obsb::fixed_point(T);
            obsb::TransferResult tr = obsb::stability_transfer(T, S, transfer_m, x0, delta_m);
            json out;
            out["verdict"] = tr.applies ? "Applies" : "DoesNotApply";
            out["m"] = transfer_m;
            out["delta_Tm"] = delta_m;
            out["delta_certified"] = certified;
            out["attested_delta_upper"] = upper ? json(*upper) : json();
            out["norm_TmSm"] = tr.norm_TmSm;
            out["margin"] = tr.margin;
            out["rho"] = tr.rho;
            out["x0"] = obsb::to_json(x0);
            if (tr.applies) {
                out["z0"] = obsb::to_json(*tr.z0);
                out["per62"] = tr.bound;
                out["actual"] = tr.actual;
            }
            emit(transfer_fl, out.dump(2));
        } else if (*suite) {
            apply_threads(suite_fl);
            obsb::ExperimentConfig config;
            config.space = space_from_flags(suite_kind, suite_n, suite_d, suite_p);
            config.trials = suite_trials;
            config.seed = suite_fl.seed;
            config.n_max = suite_nmax;
            config.horizon = suite_horizon;
            log_resolved("suite", obsb::to_json(config));
            obsb::SuiteResult res = obsb::run_property_suite(config);
            emit(suite_fl, obsb::to_json(res).dump(2));
            if (!res.all_pass()) return 1;
        } else if (*experiment) {
            apply_threads(exp_fl);
            obsb::ExperimentConfig config = obsb::config_from_json(obsb::load_json_file(exp_config));
            if (exp_fl.seed != 12345) config.seed = exp_fl.seed;
            json logged = obsb::to_json(config);
            logged["which"] = exp_which;
            logged["format"] = exp_fl.format;
            if (exp_which == "density") logged["epsilons"] = exp_epsilons;
            log_resolved("experiment", logged);
            std::string out_text;
            if (exp_which == "tightness") {
                obsb::TightnessTable table = obsb::tightness_experiment(config);
                out_text = exp_fl.format == "csv" ? obsb::tightness_csv(table)
                                                  : obsb::to_json(table).dump(2);
            } else {
                auto rows = obsb::density_experiment(config, exp_epsilons);
                out_text = exp_fl.format == "csv" ? obsb::density_csv(rows)
                                                  : obsb::to_json(rows).dump(2);
            }
            if (!config.output_path.empty() && exp_fl.output.empty())
                obsb::write_text_file(config.output_path, out_text);
            else emit(exp_fl, out_text);
        }
    } catch (const obsb::malformed_error& e) {
        std::cerr << json{{"error", {{"type", "malformed"}, {"message", e.what()}}}}.dump() << "\n";
        return 2;
    } catch (const obsb::certification_error& e) {
        std::cerr << json{{"error", {{"type", "certification"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    } catch (const obsb::precondition_error& e) {
        std::cerr << json{{"error", {{"type", "precondition"}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    } catch (const obsb::numerical_error& e) {
        std::cerr << json{{"error", {{"type", "numerical"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump() << "\n";
        return 1;
    }
    return 0;
}
