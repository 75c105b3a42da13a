#pragma once

#include "qphen/dataset.hpp"
#include "qphen/design.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace qphen {

// Pairs bootstrap: resample observations (birds) with replacement. Identical
// seed yields identical index sets.
struct BootstrapPlan {
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;
    double lower = 0.025;
    double upper = 0.975;
    std::vector<std::vector<std::uint32_t>> indices; // B lists of N indices
};

BootstrapPlan make_plan(std::size_t n, std::size_t replicates, std::uint64_t seed);

Dataset resample(const Dataset& ds, const std::vector<std::uint32_t>& indices);

enum class BootMethod { eq, qr, lqm };

// [tau][replicate]; a failed replicate holds an empty vector
using ReplicateEstimates = std::vector<std::vector<Eigen::VectorXd>>;

struct MethodReplicates {
    ReplicateEstimates estimates;
    std::vector<std::size_t> failures_per_tau;
};

struct SharedRunResult {
    std::vector<double> taus;
    std::vector<std::string> coefficient_names;
    std::map<BootMethod, MethodReplicates> per_method;
};

// Each resample is materialized once and every requested method fits it, so
// the resulting intervals are comparable across methods. Per-replicate
// failures are recorded per method and the run continues.
SharedRunResult run_shared(const Dataset& ds, const std::set<BootMethod>& methods,
                           const std::vector<double>& taus, const BootstrapPlan& plan,
                           const DesignSpec& design = {}, bool eq_weighted = true, int jobs = 1);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct CiTable {
    std::vector<std::vector<Interval>> intervals; // [tau][coef]
    std::vector<double> mean_width;               // per coefficient, averaged over taus
    std::size_t included = 0;                     // successful replicates (min over taus)
    std::size_t excluded = 0;
};

// Percentile intervals through the type-1 empirical quantile.
CiTable ci(const ReplicateEstimates& estimates, double lower = 0.025, double upper = 0.975);

} // namespace qphen
