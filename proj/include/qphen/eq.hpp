#pragma once

#include "qphen/dataset.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace qphen {

struct EqFit {
    double tau = 0.5;
    Eigen::VectorXd beta;      // intercept, year, covariate effects
    double sigma2 = 0.0;       // weighted mean squared residual, Sum(w) denominator
    bool weighted = true;
    bool degenerate = false;   // cells lie exactly on a hyperplane
    double loglik = 0.0;       // attained weighted Gaussian log-likelihood
    std::vector<std::string> coefficient_names;
};

// Weighted least squares on cell quantiles; weight = cell member count when
// weighted, 1 otherwise. sigma^2 is the likelihood MLE (denominator Sum w).
EqFit fit_eq(const CellTable& cells, double tau, bool weighted);

// Design/response assembly shared with tests: one row (1, year, covariates)
// per cell, response the cell's tau-quantile.
void eq_design(const CellTable& cells, double tau, Eigen::MatrixXd& X, Eigen::VectorXd& y,
               Eigen::VectorXd& w, bool weighted);

// Weighted Gaussian log-likelihood of the cell quantiles under (beta, sigma2).
double eq_loglik(const CellTable& cells, double tau, bool weighted, const Eigen::VectorXd& beta,
                 double sigma2);

} // namespace qphen
