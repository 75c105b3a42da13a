#include "qphen/diagnostics.hpp"

#include "qphen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace qphen {

std::size_t Diagnostics::monotonicity_above_tol() const {
    return static_cast<std::size_t>(std::count_if(monotonicity.begin(), monotonicity.end(),
                                                  [](const auto& v) { return !v.numerical; }));
}

std::size_t Diagnostics::crossings_above_tol() const {
    return static_cast<std::size_t>(
        std::count_if(crossings.begin(), crossings.end(), [](const auto& v) { return !v.numerical; }));
}

namespace {

struct Trajectory {
    std::string scope;
    std::vector<double> taus;
    std::vector<double> intercepts;
    std::vector<double> slopes;
};

std::vector<Trajectory> extract(const FitReport& r) {
    std::vector<Trajectory> out;
    const bool has_year = r.coefficient_names.size() > 1 && r.coefficient_names[1] == "year";
    Trajectory fixed;
    fixed.scope = "fixed";
    std::vector<Trajectory> per_group(r.groups.size());
    for (std::size_t g = 0; g < r.groups.size(); ++g) per_group[g].scope = r.groups[g];

    for (const auto& f : r.fits) {
        if (!f.ok || f.fixed.empty()) continue;
        fixed.taus.push_back(f.tau);
        fixed.intercepts.push_back(f.fixed[0]);
        fixed.slopes.push_back(has_year ? f.fixed[1] : 0.0);
        for (std::size_t g = 0; g < f.per_group.size() && g < per_group.size(); ++g) {
            per_group[g].taus.push_back(f.tau);
            per_group[g].intercepts.push_back(f.per_group[g][0]);
            per_group[g].slopes.push_back(f.per_group[g][1]);
        }
    }
    out.push_back(std::move(fixed));
    for (auto& t : per_group)
        if (!t.taus.empty()) out.push_back(std::move(t));
    return out;
}

} // namespace

Diagnostics diagnose(const FitReport& report, double tol) {
    if (report.fits.size() < 2) throw DataError("diagnose: need at least two tau values");
    Diagnostics d;
    d.tol = tol;
    const double lo = report.year_range[0];
    const double hi = report.year_range[1];

    for (const auto& traj : extract(report)) {
        for (std::size_t k = 0; k + 1 < traj.taus.size(); ++k) {
            const double drop = traj.intercepts[k] - traj.intercepts[k + 1];
            if (drop > 0.0) {
                MonotonicityViolation v;
                v.scope = traj.scope;
                v.tau_low = traj.taus[k];
                v.tau_high = traj.taus[k + 1];
                v.magnitude = drop;
                v.numerical = drop <= tol;
                d.monotonicity.push_back(v);
            }
        }
        // pairwise line crossings inside [lo, hi]
        for (std::size_t i = 0; i < traj.taus.size(); ++i) {
            for (std::size_t j = i + 1; j < traj.taus.size(); ++j) {
                const double a1 = traj.intercepts[i], b1 = traj.slopes[i];
                const double a2 = traj.intercepts[j], b2 = traj.slopes[j];
                if (b1 == b2) continue; // parallel lines never cross
                const double year = (a1 - a2) / (b2 - b1);
                if (year < lo || year > hi) continue;
                const double gap_lo = (a2 + b2 * lo) - (a1 + b1 * lo);
                const double gap_hi = (a2 + b2 * hi) - (a1 + b1 * hi);
                const double depth = std::max(0.0, std::max(-gap_lo, -gap_hi));
                if (depth <= 0.0) continue; // tangent at the boundary, ordering intact
                CrossingReport c;
                c.scope = traj.scope;
                c.tau_low = traj.taus[i];
                c.tau_high = traj.taus[j];
                c.crossing_year = year;
                c.magnitude = depth;
                c.numerical = depth <= tol;
                d.crossings.push_back(c);
            }
        }
    }
    return d;
}

std::string diagnostics_csv(const Diagnostics& d) {
    std::string out = "kind,scope,tau_low,tau_high,year,magnitude,classification\n";
    char buf[256];
    for (const auto& v : d.monotonicity) {
        std::snprintf(buf, sizeof buf, "monotonicity,%s,%.17g,%.17g,,%.17g,%s\n", v.scope.c_str(),
                      v.tau_low, v.tau_high, v.magnitude, v.numerical ? "numerical" : "violation");
        out += buf;
    }
    for (const auto& c : d.crossings) {
        std::snprintf(buf, sizeof buf, "crossing,%s,%.17g,%.17g,%.17g,%.17g,%s\n", c.scope.c_str(),
                      c.tau_low, c.tau_high, c.crossing_year, c.magnitude,
                      c.numerical ? "numerical" : "violation");
        out += buf;
    }
    return out;
}

} // namespace qphen
