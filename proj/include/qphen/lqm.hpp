#pragma once

#include "qphen/dataset.hpp"
#include "qphen/design.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace qphen {

enum class LqmMethod { gradient, nelder_mead };

struct LqmFit {
    double tau = 0.5;
    Eigen::VectorXd beta;
    double loglik = 0.0;       // N log(tau(1-tau)) - pinball sum, scale fixed at 1
    double pinball_sum = 0.0;
    LqmMethod method = LqmMethod::nelder_mead;
    std::size_t iterations = 0;
    std::vector<std::string> coefficient_names;
};

LqmFit fit_lqm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau, LqmMethod method);
LqmFit fit_lqm(const Dataset& ds, double tau, LqmMethod method,
               const DesignSpec& design = {});

// Per-tau, per-coefficient discrepancies between the gradient, Nelder-Mead
// and interior-point routes. The gradient method is expected to disagree on
// some designs; the table reports, it does not assert.
struct MethodComparison {
    std::vector<double> taus;
    std::vector<std::string> coefficient_names;
    // [tau][coef] estimates per method
    std::vector<std::vector<double>> gradient;
    std::vector<std::vector<double>> nelder_mead;
    std::vector<std::vector<double>> interior_point;
    // absolute differences, same shape
    std::vector<std::vector<double>> abs_grad_vs_nm;
    std::vector<std::vector<double>> abs_grad_vs_ip;
    std::vector<std::vector<double>> abs_nm_vs_ip;
    // relative differences against the interior-point estimate
    std::vector<std::vector<double>> rel_grad_vs_ip;
    std::vector<std::vector<double>> rel_nm_vs_ip;
};

MethodComparison compare_methods(const Dataset& ds, const std::vector<double>& taus,
                                 const DesignSpec& design = {});

} // namespace qphen
