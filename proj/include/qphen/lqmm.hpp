#pragma once

#include "qphen/dataset.hpp"
#include "qphen/design.hpp"
#include "qphen/meq.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qphen {

// Physicists' Gauss-Hermite rule (weight e^{-x^2}), nodes symmetrized about 0.
void gauss_hermite(int knots, Eigen::VectorXd& nodes, Eigen::VectorXd& weights);

// 2-d product rule standardized by the PSD square root of psi: evaluating
// sum exp(logw_k) f(node_k) approximates E[f(U)] for U ~ N(0, psi).
struct QuadratureRule {
    int knots_per_dim = 13;
    Eigen::MatrixXd nodes;       // 2 x K^2
    Eigen::VectorXd log_weights; // K^2, probability-scale weights sum to 1
};

QuadratureRule make_quadrature(int knots, const Eigen::Matrix2d& psi);

// Quadrature approximation of the marginal AL likelihood, log-sum-exp per
// group. Group and observation order do not affect the value.
double loglik_lqmm(const MixedParams& params, const Dataset& ds, const QuadratureRule& rule,
                   const DesignSpec& design = {});

struct LqmmOptions {
    int knots = 13;
    bool multi_start = false;       // 5 jittered starts, best likelihood wins
    std::uint64_t multi_start_seed = 1;
    std::optional<Eigen::Matrix2d> fix_psi;
    std::optional<MixedParams> start;
    DesignSpec design;
};

struct LqmmFit {
    MixedParams params;
    double loglik = 0.0; // attained quadrature approximation
    int knots = 13;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<std::string> groups;
    std::vector<std::string> coefficient_names;
};

// Nelder-Mead over (beta, log sigma_eps, log-Cholesky psi). Default start:
// pooled interior-point fit for beta, mean pinball residual for sigma_eps,
// per-group fit deviations for psi.
LqmmFit fit_lqmm(const Dataset& ds, double tau, LqmmOptions opts = {});

// Species-specific coefficients: fixed (intercept, slope) plus predicted
// random effects, per group.
std::vector<std::pair<std::string, Eigen::Vector2d>> species_coefficients(
    const MixedParams& fit, const RanefMatrix& ranef);

} // namespace qphen
