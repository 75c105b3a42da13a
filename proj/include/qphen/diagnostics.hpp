#pragma once

#include "qphen/report.hpp"

#include <string>
#include <vector>

namespace qphen {

// One decrease of an intercept trajectory between consecutive grid quantiles.
struct MonotonicityViolation {
    std::string scope; // "fixed" or a group id
    double tau_low = 0.0;
    double tau_high = 0.0;
    double magnitude = 0.0;
    bool numerical = false; // at or below the tolerance
};

// Two fitted quantile lines intersecting inside the observed year range.
struct CrossingReport {
    std::string scope;
    double tau_low = 0.0;
    double tau_high = 0.0;
    double crossing_year = 0.0;
    double magnitude = 0.0; // deepest ordering violation at the range ends
    bool numerical = false;
};

struct Diagnostics {
    double tol = 0.0;
    std::vector<MonotonicityViolation> monotonicity;
    std::vector<CrossingReport> crossings;

    std::size_t monotonicity_above_tol() const;
    std::size_t crossings_above_tol() const;
};

// Intercept monotonicity across the tau grid plus pairwise quantile-crossing
// detection, for the fixed coefficients and for every per-group trajectory.
Diagnostics diagnose(const FitReport& report, double tol = 1e-10);

std::string diagnostics_csv(const Diagnostics& d);

} // namespace qphen
