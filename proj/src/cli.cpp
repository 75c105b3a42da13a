#include "qphen/cli.hpp"

#include "qphen/bootstrap.hpp"
#include "qphen/dataset.hpp"
#include "qphen/diagnostics.hpp"
#include "qphen/eq.hpp"
#include "qphen/errors.hpp"
#include "qphen/lqm.hpp"
#include "qphen/lqmm.hpp"
#include "qphen/meq.hpp"
#include "qphen/parallel.hpp"
#include "qphen/qr.hpp"
#include "qphen/ranef.hpp"
#include "qphen/report.hpp"
#include "qphen/simgen.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>

namespace qphen::cli {

namespace {

Schema parse_schema(const std::string& text) {
    Schema schema;
    if (text.empty()) return schema;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string tok = text.substr(pos, next - pos);
        const auto colon = tok.find(':');
        CovariateDecl decl;
        if (colon == std::string::npos) {
            decl.name = tok;
            decl.kind = CovariateKind::real;
        } else {
            decl.name = tok.substr(0, colon);
            const std::string kind = tok.substr(colon + 1);
            if (kind == "binary") decl.kind = CovariateKind::binary;
            else if (kind == "real") decl.kind = CovariateKind::real;
            else throw UsageError("covariate kind must be binary or real, got \"" + kind + "\"");
        }
        if (decl.name.empty()) throw UsageError("empty covariate name in --covariates");
        schema.covariates.push_back(std::move(decl));
        pos = next + 1;
    }
    return schema;
}

struct LoadedData {
    Dataset ds;
    std::array<double, 2> year_range{0.0, 0.0};
};

LoadedData load_input(const std::string& input, const Schema& schema, bool center_given,
                      int center_year, std::size_t min_count) {
    Dataset raw = center_given ? load_csv(input, schema, center_year) : load_csv(input, schema);
    Dataset ds = filter_min_count(raw, std::max<std::size_t>(min_count, 1));
    if (ds.empty())
        throw DataError("no observations remain after --min-count " + std::to_string(min_count));
    LoadedData out{std::move(ds), {0.0, 0.0}};
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& o : out.ds.observations()) {
        lo = std::min(lo, static_cast<double>(o.year));
        hi = std::max(hi, static_cast<double>(o.year));
    }
    out.year_range = {lo, hi};
    return out;
}

void write_meta(const std::string& path, const std::map<std::string, std::string>& flags,
                std::uint64_t seed) {
    nlohmann::json j;
    j["tool_version"] = kToolVersion;
    j["seed"] = seed;
    j["flags"] = flags;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

std::vector<std::array<double, 2>> ranef_rows(const std::vector<std::string>& report_groups,
                                              const std::vector<std::string>& fit_groups,
                                              const Eigen::MatrixXd& u,
                                              const Eigen::Vector2d& fixed_head) {
    std::vector<std::array<double, 2>> rows(report_groups.size(), {0.0, 0.0});
    for (std::size_t g = 0; g < report_groups.size(); ++g) {
        const auto it = std::find(fit_groups.begin(), fit_groups.end(), report_groups[g]);
        if (it == fit_groups.end()) throw DataError("group mismatch in random-effect mapping");
        const auto idx = static_cast<Eigen::Index>(std::distance(fit_groups.begin(), it));
        rows[g] = {fixed_head(0) + u(idx, 0), fixed_head(1) + u(idx, 1)};
    }
    return rows;
}

int cmd_fit(const std::string& method, const std::string& input, const std::string& covariates,
            const std::string& tau_grid_text, bool center_given, int center_year,
            std::size_t min_count, bool weighted, const std::string& criterion, int knots,
            bool multi_start, std::uint64_t seed, int jobs, const std::string& out_prefix) {
    static const std::set<std::string> known{"eq", "qr", "lqm", "meq", "lqmm", "qr-interact"};
    if (!known.count(method)) throw UsageError("unknown method \"" + method + "\"");
    const Schema schema = parse_schema(covariates);
    const LoadedData data = load_input(input, schema, center_given, center_year, min_count);
    const Dataset& ds = data.ds;

    const bool multi = method == "meq" || method == "lqmm" || method == "qr-interact";
    TauGrid grid = tau_grid_text.empty()
                       ? (multi ? TauGrid::multi_species_default() : TauGrid::single_species_default())
                       : TauGrid::parse(tau_grid_text);

    FitReport report;
    report.method = method;
    report.seed = seed;
    report.center_year = ds.center_year();
    report.year_range = data.year_range;
    report.tau_grid = grid.values;
    report.flags = {{"method", method},
                    {"input", input},
                    {"covariates", covariates},
                    {"tau-grid", tau_grid_text},
                    {"center-year", center_given ? std::to_string(center_year) : ""},
                    {"min-count", std::to_string(min_count)},
                    {"weighted", weighted ? "true" : "false"},
                    {"criterion", criterion},
                    {"knots", std::to_string(knots)},
                    {"multi-start", multi_start ? "true" : "false"},
                    {"seed", std::to_string(seed)},
                    {"jobs", std::to_string(jobs)}};

    const bool per_group_output = multi;
    if (per_group_output) report.groups = ds.groups();

    CellTable cells;
    if (method == "eq" || method == "meq") cells = build_cells(ds);

    report.fits.assign(grid.values.size(), TauFitRecord{});
    std::mutex name_mutex;
    parallel_for(grid.values.size(), jobs, [&](std::size_t t) {
        const double tau = grid.values[t];
        TauFitRecord rec;
        rec.tau = tau;
        try {
            if (method == "eq") {
                const EqFit fit = fit_eq(cells, tau, weighted);
                rec.fixed.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
                rec.sigma2 = fit.sigma2;
                if (std::isfinite(fit.loglik)) rec.loglik = fit.loglik;
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else if (method == "qr") {
                const QuantileFit fit = fit_qr(ds, tau);
                rec.fixed.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
                rec.objective = fit.objective;
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else if (method == "lqm") {
                const LqmFit fit = fit_lqm(ds, tau, LqmMethod::nelder_mead);
                rec.fixed.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
                rec.objective = fit.pinball_sum;
                rec.loglik = fit.loglik;
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else if (method == "meq") {
                MeqOptions opts;
                opts.criterion = criterion == "ml" ? MixedCriterion::ML : MixedCriterion::REML;
                opts.weighted = weighted;
                const MeqFit fit = fit_meq(cells, tau, opts);
                rec.fixed.assign(fit.params.beta.data(),
                                 fit.params.beta.data() + fit.params.beta.size());
                rec.sigma = fit.params.sigma;
                rec.psi = {fit.params.psi(0, 0), fit.params.psi(0, 1), fit.params.psi(1, 1)};
                rec.loglik = fit.loglik;
                const RanefMatrix ranef = predict_ranef_meq(fit, cells);
                rec.per_group = ranef_rows(report.groups, ranef.groups, ranef.u,
                                           fit.params.beta.head(2));
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else if (method == "lqmm") {
                LqmmOptions opts;
                opts.knots = knots;
                opts.multi_start = multi_start;
                opts.multi_start_seed = seed;
                const LqmmFit fit = fit_lqmm(ds, tau, opts);
                rec.fixed.assign(fit.params.beta.data(),
                                 fit.params.beta.data() + fit.params.beta.size());
                rec.sigma = fit.params.sigma;
                rec.psi = {fit.params.psi(0, 0), fit.params.psi(0, 1), fit.params.psi(1, 1)};
                rec.loglik = fit.loglik;
                const RanefMatrix ranef = blup(fit.params, ds, BlupMode::block, fit.groups);
                rec.per_group = ranef_rows(report.groups, ranef.groups, ranef.u,
                                           fit.params.beta.head(2));
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else if (method == "qr-interact") {
                const InteractionFit fit = fit_qr_interactions(ds, tau);
                rec.fixed.assign(fit.beta.data(), fit.beta.data() + fit.beta.size());
                rec.objective = fit.objective;
                rec.per_group.resize(report.groups.size());
                for (std::size_t g = 0; g < report.groups.size(); ++g) {
                    const auto& pg = fit.per_group.at(report.groups[g]);
                    rec.per_group[g] = {pg.first, pg.second};
                }
                std::lock_guard<std::mutex> lock(name_mutex);
                if (report.coefficient_names.empty())
                    report.coefficient_names = fit.coefficient_names;
            } else {
                throw UsageError("unknown method \"" + method + "\"");
            }
            rec.ok = true;
        } catch (const UsageError&) {
            throw;
        } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        report.fits[t] = std::move(rec);
    });

    const auto ok_count = static_cast<std::size_t>(
        std::count_if(report.fits.begin(), report.fits.end(), [](const auto& f) { return f.ok; }));
    if (ok_count == 0)
        throw SolverError("cmd_fit: every tau failed; first error: " + report.fits.front().error);

    write_report_json(report, out_prefix + ".json");
    write_report_csv(report, out_prefix + ".csv");
    std::cout << "fit: method=" << method << " taus=" << grid.values.size()
              << " ok=" << ok_count << " -> " << out_prefix << ".json\n";
    return 0;
}

int cmd_bootstrap(const std::string& methods_text, const std::string& input,
                  const std::string& covariates, const std::string& tau_grid_text,
                  bool center_given, int center_year, std::size_t min_count, bool weighted,
                  std::size_t replicates, std::uint64_t seed, double lower, double upper, int jobs,
                  const std::string& out_prefix) {
    const Schema schema = parse_schema(covariates);
    const LoadedData data = load_input(input, schema, center_given, center_year, min_count);
    const Dataset& ds = data.ds;
    TauGrid grid = tau_grid_text.empty() ? TauGrid::single_species_default()
                                         : TauGrid::parse(tau_grid_text);

    std::set<BootMethod> methods;
    std::map<BootMethod, std::string> method_names;
    std::size_t pos = 0;
    while (pos <= methods_text.size() && !methods_text.empty()) {
        std::size_t next = methods_text.find(',', pos);
        if (next == std::string::npos) next = methods_text.size();
        const std::string tok = methods_text.substr(pos, next - pos);
        if (tok == "eq") methods.insert(BootMethod::eq);
        else if (tok == "qr") methods.insert(BootMethod::qr);
        else if (tok == "lqm") methods.insert(BootMethod::lqm);
        else throw UsageError("unknown bootstrap method \"" + tok + "\"");
        pos = next + 1;
    }
    if (methods.empty()) throw UsageError("--methods must name at least one of eq,qr,lqm");
    method_names[BootMethod::eq] = "eq";
    method_names[BootMethod::qr] = "qr";
    method_names[BootMethod::lqm] = "lqm";

    const BootstrapPlan plan = [&] {
        BootstrapPlan p = make_plan(ds.size(), replicates, seed);
        p.lower = lower;
        p.upper = upper;
        return p;
    }();
    const SharedRunResult shared = run_shared(ds, methods, grid.values, plan, {}, weighted, jobs);

    CellTable cells;
    if (methods.count(BootMethod::eq)) cells = build_cells(ds);

    for (BootMethod m : methods) {
        FitReport report;
        report.method = method_names[m] + "+bootstrap";
        report.seed = seed;
        report.center_year = ds.center_year();
        report.year_range = data.year_range;
        report.tau_grid = grid.values;
        report.coefficient_names = shared.coefficient_names;
        report.flags = {{"methods", methods_text}, {"input", input},
                        {"covariates", covariates}, {"tau-grid", tau_grid_text},
                        {"B", std::to_string(replicates)}, {"seed", std::to_string(seed)},
                        {"lower", std::to_string(lower)}, {"upper", std::to_string(upper)},
                        {"min-count", std::to_string(min_count)},
                        {"weighted", weighted ? "true" : "false"},
                        {"jobs", std::to_string(jobs)}};

        // point estimates on the original data
        for (double tau : grid.values) {
            TauFitRecord rec;
            rec.tau = tau;
            try {
                Eigen::VectorXd beta;
                if (m == BootMethod::eq) beta = fit_eq(cells, tau, weighted).beta;
                else if (m == BootMethod::qr) beta = fit_qr(ds, tau).beta;
                else beta = fit_lqm(ds, tau, LqmMethod::nelder_mead).beta;
                rec.fixed.assign(beta.data(), beta.data() + beta.size());
                rec.ok = true;
            } catch (const Error& e) {
                rec.ok = false;
                rec.error = e.what();
            }
            report.fits.push_back(std::move(rec));
        }

        const CiTable table = ci(shared.per_method.at(m).estimates, lower, upper);
        CiRecord cir;
        cir.mean_width = table.mean_width;
        cir.replicates = plan.replicates;
        cir.excluded = table.excluded;
        for (const auto& per_tau : table.intervals) {
            std::vector<std::array<double, 2>> row;
            for (const auto& iv : per_tau) row.push_back({iv.lower, iv.upper});
            cir.intervals.push_back(std::move(row));
        }
        report.ci = std::move(cir);

        const std::string prefix = out_prefix + "_" + method_names[m];
        write_report_json(report, prefix + ".json");
        write_report_csv(report, prefix + ".csv");
        std::cout << "bootstrap: method=" << method_names[m] << " B=" << replicates << " -> "
                  << prefix << ".json\n";
    }
    return 0;
}

int cmd_ranef(const std::string& input, const std::string& fit_path, const std::string& mode_text,
              const std::string& out_path, int jobs) {
    const FitReport fit = read_report_json(fit_path);
    if (fit.method != "lqmm")
        throw UsageError("cmd_ranef expects a fit produced by --method lqmm, got \"" + fit.method +
                         "\"");
    BlupMode mode;
    if (mode_text == "dense") mode = BlupMode::dense;
    else if (mode_text == "block") mode = BlupMode::block;
    else if (mode_text == "sequential") mode = BlupMode::sequential;
    else throw UsageError("--mode must be dense, block or sequential");

    const Schema schema = parse_schema(fit.flags.count("covariates") ? fit.flags.at("covariates") : "");
    std::size_t min_count = 1;
    if (fit.flags.count("min-count")) min_count = std::stoul(fit.flags.at("min-count"));
    const LoadedData data = load_input(input, schema, true, fit.center_year, min_count);

    struct Row {
        double tau;
        std::string group;
        double u0, u1;
    };
    std::vector<std::vector<Row>> rows(fit.fits.size());
    parallel_for(fit.fits.size(), jobs, [&](std::size_t t) {
        const TauFitRecord& rec = fit.fits[t];
        if (!rec.ok || !rec.sigma || !rec.psi) return;
        MixedParams params;
        params.beta = Eigen::Map<const Eigen::VectorXd>(rec.fixed.data(),
                                                        static_cast<Eigen::Index>(rec.fixed.size()));
        params.sigma = *rec.sigma;
        params.psi << (*rec.psi)[0], (*rec.psi)[1], (*rec.psi)[1], (*rec.psi)[2];
        params.tau = rec.tau;
        const RanefMatrix u = blup(params, data.ds, mode, fit.groups);
        for (std::size_t g = 0; g < u.groups.size(); ++g)
            rows[t].push_back(
                {rec.tau, u.groups[g], u.u(static_cast<Eigen::Index>(g), 0),
                 u.u(static_cast<Eigen::Index>(g), 1)});
    });

    std::string csv = "tau,group,u_intercept,u_slope\n";
    char buf[256];
    for (const auto& per_tau : rows)
        for (const auto& r : per_tau) {
            std::snprintf(buf, sizeof buf, "%.17g,%s,%.9f,%.9f\n", r.tau, r.group.c_str(), r.u0,
                          r.u1);
            csv += buf;
        }
    {
        const std::string tmp = out_path + ".tmp";
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        out << csv;
        out.close();
        if (std::rename(tmp.c_str(), out_path.c_str()) != 0)
            throw DataError("cannot rename " + tmp);
    }
    write_meta(out_path + ".meta.json",
               {{"input", input}, {"fit", fit_path}, {"mode", mode_text}}, fit.seed);
    std::cout << "ranef: mode=" << mode_text << " -> " << out_path << "\n";
    return 0;
}

int cmd_simulate(const std::string& spec_path, const std::string& out_path, bool seed_given,
                 std::uint64_t seed) {
    SimSpec spec = read_simspec(spec_path);
    if (seed_given) spec.seed = seed;
    const Dataset ds = simulate(spec);
    write_csv(ds, out_path);
    write_meta(out_path + ".meta.json", {{"spec", spec_path}, {"out", out_path}}, spec.seed);
    std::cout << "simulate: groups=" << spec.groups << " n=" << ds.size() << " -> " << out_path
              << "\n";
    return 0;
}

int cmd_diagnose(const std::string& report_path, double tol, const std::string& out_path) {
    const FitReport report = read_report_json(report_path);
    const Diagnostics d = diagnose(report, tol);
    const std::string csv = diagnostics_csv(d);
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        const std::string tmp = out_path + ".tmp";
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp);
        out << csv;
        out.close();
        if (std::rename(tmp.c_str(), out_path.c_str()) != 0)
            throw DataError("cannot rename " + tmp);
    }
    std::cout << "diagnose: monotonicity_violations=" << d.monotonicity.size() << " (above tol "
              << d.monotonicity_above_tol() << "), crossings=" << d.crossings.size()
              << " (above tol " << d.crossings_above_tol() << ")\n";
    return 0;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"quantile models for grouped event-timing data"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "fit one method over a tau grid");
    std::string method, input, covariates, tau_grid, criterion = "reml", out_prefix = "fit";
    int center_year = 0, knots = 13, jobs = 1;
    std::size_t min_count = 150;
    bool weighted = true, multi_start = false;
    std::uint64_t seed = 0;
    fit->add_option("--method", method, "eq|qr|lqm|meq|lqmm|qr-interact")->required();
    fit->add_option("--input", input, "observation CSV")->required();
    fit->add_option("--covariates", covariates, "declared covariates, name:kind comma list");
    fit->add_option("--tau-grid", tau_grid, "comma list or start:stop:step");
    auto* fit_center = fit->add_option("--center-year", center_year, "year centering override");
    fit->add_option("--min-count", min_count, "drop groups with fewer observations");
    fit->add_flag("--weighted,!--unweighted", weighted, "cell weighting (eq/meq)");
    fit->add_option("--criterion", criterion, "ml|reml (meq)")
        ->check(CLI::IsMember({"ml", "reml"}));
    fit->add_option("--knots", knots, "quadrature knots per dimension (lqmm)");
    fit->add_flag("--multi-start", multi_start, "5 jittered starts (lqmm)");
    fit->add_option("--seed", seed, "seed echoed into outputs");
    fit->add_option("--jobs", jobs, "parallel tau fits");
    fit->add_option("--out", out_prefix, "output prefix");

    // bootstrap
    auto* boot = app.add_subcommand("bootstrap", "pairs bootstrap with shared resamples");
    std::string methods_text = "qr";
    std::size_t replicates = 1000;
    double lower = 0.025, upper = 0.975;
    std::string boot_input, boot_cov, boot_grid, boot_out = "bootstrap";
    int boot_center = 0, boot_jobs = 1;
    std::size_t boot_min = 150;
    bool boot_weighted = true;
    std::uint64_t boot_seed = 0;
    boot->add_option("--methods", methods_text, "comma subset of eq,qr,lqm");
    boot->add_option("--input", boot_input, "observation CSV")->required();
    boot->add_option("--covariates", boot_cov, "declared covariates");
    boot->add_option("--tau-grid", boot_grid, "comma list or start:stop:step");
    auto* boot_center_opt = boot->add_option("--center-year", boot_center, "year centering override");
    boot->add_option("--min-count", boot_min, "drop groups with fewer observations");
    boot->add_flag("--weighted,!--unweighted", boot_weighted, "cell weighting (eq)");
    boot->add_option("--B", replicates, "bootstrap replicates");
    boot->add_option("--seed", boot_seed, "resampling seed");
    boot->add_option("--lower", lower, "lower percentile");
    boot->add_option("--upper", upper, "upper percentile");
    boot->add_option("--jobs", boot_jobs, "parallel replicates");
    boot->add_option("--out", boot_out, "output prefix");

    // ranef
    auto* ranef_cmd = app.add_subcommand("ranef", "predict lqmm random effects");
    std::string ranef_input, ranef_fit, ranef_mode = "block", ranef_out = "ranef.csv";
    int ranef_jobs = 1;
    ranef_cmd->add_option("--input", ranef_input, "observation CSV")->required();
    ranef_cmd->add_option("--fit", ranef_fit, "lqmm fit report JSON")->required();
    ranef_cmd->add_option("--mode", ranef_mode, "dense|block|sequential");
    ranef_cmd->add_option("--jobs", ranef_jobs, "parallel taus");
    ranef_cmd->add_option("--out", ranef_out, "output CSV");

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate synthetic data");
    std::string sim_spec, sim_out = "simulated.csv";
    std::uint64_t sim_seed = 0;
    sim->add_option("--spec", sim_spec, "plain-text key=value spec")->required();
    sim->add_option("--out", sim_out, "output CSV");
    auto* sim_seed_opt = sim->add_option("--seed", sim_seed, "seed override");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "monotonicity and crossing diagnostics");
    std::string diag_report, diag_out;
    double diag_tol = 1e-10;
    diag->add_option("--report", diag_report, "fit report JSON")->required();
    diag->add_option("--tol", diag_tol, "numerical-noise threshold");
    diag->add_option("--out", diag_out, "diagnostics CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed())
            return cmd_fit(method, input, covariates, tau_grid, fit_center->count() > 0,
                           center_year, min_count, weighted, criterion, knots, multi_start, seed,
                           jobs, out_prefix);
        if (boot->parsed())
            return cmd_bootstrap(methods_text, boot_input, boot_cov, boot_grid,
                                 boot_center_opt->count() > 0, boot_center, boot_min,
                                 boot_weighted, replicates, boot_seed, lower, upper, boot_jobs,
                                 boot_out);
        if (ranef_cmd->parsed())
            return cmd_ranef(ranef_input, ranef_fit, ranef_mode, ranef_out, ranef_jobs);
        if (sim->parsed())
            return cmd_simulate(sim_spec, sim_out, sim_seed_opt->count() > 0, sim_seed);
        if (diag->parsed()) return cmd_diagnose(diag_report, diag_tol, diag_out);
        throw UsageError("no subcommand given");
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 5;
    }
}

} // namespace qphen::cli
