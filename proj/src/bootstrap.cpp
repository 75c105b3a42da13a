#include "qphen/bootstrap.hpp"

#include "qphen/eq.hpp"
#include "qphen/errors.hpp"
#include "qphen/lqm.hpp"
#include "qphen/parallel.hpp"
#include "qphen/qr.hpp"
#include "qphen/rng.hpp"

#include <algorithm>
#include <cmath>

namespace qphen {

BootstrapPlan make_plan(std::size_t n, std::size_t replicates, std::uint64_t seed) {
    if (replicates < 1) throw DataError("make_plan: need at least one replicate");
    if (n < 1) throw DataError("make_plan: need at least one observation");
    BootstrapPlan plan;
    plan.replicates = replicates;
    plan.seed = seed;
    plan.indices.resize(replicates);
    Rng rng(seed);
    for (auto& list : plan.indices) {
        list.resize(n);
        for (auto& idx : list) idx = static_cast<std::uint32_t>(rng.below(n));
    }
    return plan;
}

Dataset resample(const Dataset& ds, const std::vector<std::uint32_t>& indices) {
    std::vector<Observation> obs;
    obs.reserve(indices.size());
    for (std::uint32_t i : indices) {
        Observation o = ds.observations()[i];
        o.year += ds.center_year(); // re-centered identically by the constructor
        obs.push_back(std::move(o));
    }
    return Dataset(ds.schema(), std::move(obs), ds.center_year());
}

SharedRunResult run_shared(const Dataset& ds, const std::set<BootMethod>& methods,
                           const std::vector<double>& taus, const BootstrapPlan& plan,
                           const DesignSpec& design, bool eq_weighted, int jobs) {
    if (methods.empty()) throw DataError("run_shared: no methods requested");
    if (taus.empty()) throw DataError("run_shared: empty tau grid");

    SharedRunResult out;
    out.taus = taus;
    out.coefficient_names = design_names(ds.schema(), design);
    for (BootMethod m : methods) {
        MethodReplicates mr;
        mr.estimates.assign(taus.size(), std::vector<Eigen::VectorXd>(plan.replicates));
        mr.failures_per_tau.assign(taus.size(), 0);
        out.per_method.emplace(m, std::move(mr));
    }

    std::vector<std::map<BootMethod, std::vector<Eigen::VectorXd>>> results(plan.replicates);

    parallel_for(plan.replicates, jobs, [&](std::size_t b) {
        const Dataset res = resample(ds, plan.indices[b]);
        auto& slot = results[b];
        for (BootMethod m : methods) slot[m].assign(taus.size(), Eigen::VectorXd());

        CellTable cells;
        bool cells_ok = true;
        if (methods.count(BootMethod::eq)) {
            try {
                cells = build_cells(res); // rebuilt per resample
            } catch (const Error&) {
                cells_ok = false;
            }
        }
        for (std::size_t t = 0; t < taus.size(); ++t) {
            for (BootMethod m : methods) {
                try {
                    switch (m) {
                        case BootMethod::eq: {
                            if (!cells_ok) throw DesignError("cells unavailable");
                            const EqFit fit = fit_eq(cells, taus[t], eq_weighted);
                            slot[m][t] = fit.beta;
                            break;
                        }
                        case BootMethod::qr: {
                            const QuantileFit fit = fit_qr(res, taus[t], design);
                            slot[m][t] = fit.beta;
                            break;
                        }
                        case BootMethod::lqm: {
                            const LqmFit fit = fit_lqm(res, taus[t], LqmMethod::nelder_mead, design);
                            slot[m][t] = fit.beta;
                            break;
                        }
                    }
                } catch (const Error&) {
                    // recorded below as a failed replicate for this method/tau
                }
            }
        }
    });

    for (std::size_t b = 0; b < plan.replicates; ++b) {
        for (BootMethod m : methods) {
            auto& mr = out.per_method.at(m);
            for (std::size_t t = 0; t < taus.size(); ++t) {
                mr.estimates[t][b] = results[b].at(m)[t];
                if (mr.estimates[t][b].size() == 0) ++mr.failures_per_tau[t];
            }
        }
    }
    return out;
}

CiTable ci(const ReplicateEstimates& estimates, double lower, double upper) {
    if (estimates.empty()) throw DataError("ci: no estimates");
    CiTable table;
    table.intervals.resize(estimates.size());
    std::size_t min_included = std::numeric_limits<std::size_t>::max();
    std::size_t max_excluded = 0;

    Eigen::Index p = -1;
    for (const auto& per_tau : estimates)
        for (const auto& est : per_tau)
            if (est.size() > 0) p = est.size();
    if (p <= 0) throw DataError("ci: all replicates failed");
    table.mean_width.assign(static_cast<std::size_t>(p), 0.0);

    for (std::size_t t = 0; t < estimates.size(); ++t) {
        std::size_t ok = 0;
        for (const auto& est : estimates[t])
            if (est.size() > 0) ++ok;
        if (ok < 2) throw DataError("ci: fewer than 2 successful replicates at a tau");
        min_included = std::min(min_included, ok);
        max_excluded = std::max(max_excluded, estimates[t].size() - ok);

        table.intervals[t].resize(static_cast<std::size_t>(p));
        std::vector<double> values;
        values.reserve(ok);
        for (Eigen::Index k = 0; k < p; ++k) {
            values.clear();
            for (const auto& est : estimates[t])
                if (est.size() > 0) values.push_back(est(k));
            std::sort(values.begin(), values.end());
            Interval iv;
            iv.lower = empirical_quantile(values, lower);
            iv.upper = empirical_quantile(values, upper);
            table.intervals[t][static_cast<std::size_t>(k)] = iv;
            table.mean_width[static_cast<std::size_t>(k)] += (iv.upper - iv.lower);
        }
    }
    for (auto& w : table.mean_width) w /= static_cast<double>(estimates.size());
    table.included = min_included;
    table.excluded = max_excluded;
    return table;
}

} // namespace qphen
