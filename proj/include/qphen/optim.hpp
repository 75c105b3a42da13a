#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>

namespace qphen {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

enum class Termination { tolerance, max_iter, stalled };

struct OptimResult {
    Eigen::VectorXd argmin;
    double objective = 0.0; // re-evaluated at argmin on return
    std::size_t iterations = 0;
    bool converged = false;
    Termination termination = Termination::max_iter;
};

struct OptimOptions {
    double tol = 1e-8;
    std::optional<std::size_t> max_iter; // defaults to 5000 * dimension
};

// Standard simplex method (reflect / expand / contract / shrink). The initial
// simplex offsets x0 by max(0.05 |x0_k|, 0.1) per coordinate; terminates when
// the simplex objective spread drops below tol.
OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, OptimOptions opts = {});

// Descent with step-halving line search (initial step 1, factor 0.5). Every
// accepted step strictly decreases f; stops when the step size or the
// objective decrease falls below tol. Suited to generalized gradients of
// piecewise-linear objectives, which may park it away from the true argmin.
OptimResult gradient_search(const Objective& f, const Gradient& g, const Eigen::VectorXd& x0,
                            OptimOptions opts = {});

} // namespace qphen
