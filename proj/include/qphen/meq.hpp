#pragma once

#include "qphen/dataset.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace qphen {

// Shared by the meq and lqmm models: fixed effects, random-effect covariance
// and a residual scale (Gaussian sigma for meq, AL sigma_eps for lqmm).
struct MixedParams {
    Eigen::VectorXd beta;
    Eigen::Matrix2d psi = Eigen::Matrix2d::Zero();
    double sigma = 1.0;
    double tau = 0.5;
};

void validate(const MixedParams& p);

enum class RanefMethod { conditional_mode, blup };

struct RanefMatrix {
    std::vector<std::string> groups;
    Eigen::MatrixXd u; // M x 2: intercept and slope deviations
    RanefMethod method = RanefMethod::conditional_mode;
    bool ridged = false; // posterior system was ridged because psi was singular
};

enum class MixedCriterion { ML, REML };

struct MeqOptions {
    MixedCriterion criterion = MixedCriterion::REML;
    bool weighted = true;
    std::optional<Eigen::Matrix2d> fix_psi; // skip psi estimation (diagnostic use)
};

struct MeqFit {
    MixedParams params;
    MixedCriterion criterion = MixedCriterion::REML;
    bool weighted = true;
    double criterion_value = 0.0; // minimized deviance (-2 log lik, or REML analogue)
    double loglik = 0.0;          // ML marginal log-likelihood at the estimates
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<std::string> groups;
    std::vector<std::string> coefficient_names;
};

// Random intercept + year slope per group on cell quantiles; cell weights
// divide the residual variance, keeping the Gaussian marginal closed-form.
// Optimizes a log-Cholesky parameterization of psi plus log sigma with the
// fixed effects profiled out by GLS.
MeqFit fit_meq(const CellTable& cells, double tau, MeqOptions opts = {});

// ML marginal log-likelihood at arbitrary parameters (beta not profiled).
double meq_loglik(const MixedParams& params, const CellTable& cells, bool weighted);

// Closed-form Gaussian posterior modes of the per-group random effects.
RanefMatrix predict_ranef_meq(const MeqFit& fit, const CellTable& cells);

} // namespace qphen
