#pragma once

#include "qphen/dataset.hpp"
#include "qphen/design.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace qphen {

enum class QrSolver { interior_point, oracle };

struct QuantileFit {
    double tau = 0.5;
    Eigen::VectorXd beta;
    double objective = 0.0; // attained pinball sum, recomputed from data
    QrSolver solver = QrSolver::interior_point;
    bool dual_feasible = false;
    std::size_t iterations = 0;
    std::vector<std::string> coefficient_names;
};

struct QrOptions {
    double gap_tol = 1e-10; // relative duality gap
    std::size_t max_iter = 100;
};

// Exact minimization of the pinball objective by a Mehrotra-style primal-dual
// interior point method on the bounded dual LP. Matrix-level entry point;
// the Dataset overload builds the design from the schema.
QuantileFit fit_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                   QrOptions opts = {});
QuantileFit fit_qr(const Dataset& ds, double tau, const DesignSpec& design = {},
                   QrOptions opts = {});

// Species-interaction design: baseline group contributes no offset columns;
// groups beyond it get intercept and year-slope offsets.
struct InteractionFit {
    double tau = 0.5;
    std::string baseline_group;
    Eigen::VectorXd beta; // intercept, year, then (offset_int, offset_slope) per non-baseline group
    double objective = 0.0;
    // baseline + offset, keyed by group id
    std::map<std::string, std::pair<double, double>> per_group;
    std::vector<std::string> coefficient_names;
};

InteractionFit fit_qr_interactions(const Dataset& ds, double tau, QrOptions opts = {});

// Exhaustive vertex enumeration over exact-fit subsets; the verification
// oracle for small instances. Dataset form enforces the published guard
// (N <= 14, columns <= 3); the matrix form allows wider designs for
// interaction tests but stays capped at N <= 14.
QuantileFit oracle_qr(const Dataset& ds, double tau, const DesignSpec& design = {});
QuantileFit oracle_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                      Eigen::Index max_cols = 3);

double pinball_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& beta, double tau);

} // namespace qphen
