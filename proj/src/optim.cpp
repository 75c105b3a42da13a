#include "qphen/optim.hpp"

#include "qphen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace qphen {

namespace {

double checked_eval(const Objective& f, const Eigen::VectorXd& x, const char* who) {
    const double v = f(x);
    if (!std::isfinite(v)) throw DataError(std::string(who) + ": objective is non-finite at start");
    return v;
}

} // namespace

OptimResult nelder_mead(const Objective& f, const Eigen::VectorXd& x0, OptimOptions opts) {
    const auto d = static_cast<std::size_t>(x0.size());
    const std::size_t max_iter = opts.max_iter.value_or(5000 * std::max<std::size_t>(d, 1));
    const double f0 = checked_eval(f, x0, "nelder_mead");

    OptimResult res;
    res.argmin = x0;
    res.objective = f0;
    if (max_iter == 0 || d == 0) {
        res.termination = Termination::max_iter;
        return res;
    }

    // vertices[0..d], values aligned
    std::vector<Eigen::VectorXd> vx(d + 1, x0);
    std::vector<double> fv(d + 1, f0);
    for (std::size_t k = 0; k < d; ++k) {
        vx[k + 1](static_cast<Eigen::Index>(k)) +=
            std::max(0.05 * std::abs(x0(static_cast<Eigen::Index>(k))), 0.1);
        fv[k + 1] = f(vx[k + 1]);
    }

    constexpr double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;
    std::size_t iter = 0;
    std::vector<std::size_t> order(d + 1);
    while (iter < max_iter) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[d], second_worst = order[d - 1];

        if (fv[worst] - fv[best] < opts.tol) {
            res.argmin = vx[best];
            res.objective = f(vx[best]);
            res.iterations = iter;
            res.converged = true;
            res.termination = Termination::tolerance;
            return res;
        }
        ++iter;

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k <= d; ++k)
            if (k != worst) centroid += vx[k];
        centroid /= static_cast<double>(d);

        const Eigen::VectorXd xr = centroid + alpha * (centroid - vx[worst]);
        const double fr = f(xr);
        if (fr < fv[best]) {
            const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            const double fe = f(xe);
            if (fe < fr) {
                vx[worst] = xe;
                fv[worst] = fe;
            } else {
                vx[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second_worst]) {
            vx[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        // contraction: outside if the reflected point improved on the worst
        const bool outside = fr < fv[worst];
        Eigen::VectorXd xc;
        if (outside)
            xc = centroid + rho * (xr - centroid);
        else
            xc = centroid - rho * (centroid - vx[worst]);
        const double fc = f(xc);
        if (fc < std::min(fr, fv[worst])) {
            vx[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k <= d; ++k) {
            if (k == best) continue;
            vx[k] = vx[best] + shrink * (vx[k] - vx[best]);
            fv[k] = f(vx[k]);
        }
    }

    const auto best_it = std::min_element(fv.begin(), fv.end());
    const auto best_k = static_cast<std::size_t>(std::distance(fv.begin(), best_it));
    res.argmin = vx[best_k];
    res.objective = f(vx[best_k]);
    res.iterations = iter;
    res.converged = false;
    res.termination = Termination::max_iter;
    return res;
}

OptimResult gradient_search(const Objective& f, const Gradient& g, const Eigen::VectorXd& x0,
                            OptimOptions opts) {
    const auto d = static_cast<std::size_t>(x0.size());
    const std::size_t max_iter = opts.max_iter.value_or(5000 * std::max<std::size_t>(d, 1));
    double fx = checked_eval(f, x0, "gradient_search");

    OptimResult res;
    res.argmin = x0;
    res.objective = fx;

    Eigen::VectorXd x = x0;
    std::size_t iter = 0;
    while (iter < max_iter) {
        const Eigen::VectorXd grad = g(x);
        if (!grad.allFinite()) throw DataError("gradient_search: non-finite gradient");
        if (grad.norm() == 0.0) {
            res.converged = true;
            res.termination = Termination::tolerance;
            break;
        }
        ++iter;

        double step = 1.0;
        bool accepted = false;
        while (step >= opts.tol) {
            const Eigen::VectorXd cand = x - step * grad;
            const double fc = f(cand);
            if (fc < fx) {
                const double decrease = fx - fc;
                x = cand;
                fx = fc;
                accepted = true;
                if (decrease < opts.tol) {
                    res.converged = true;
                    res.termination = Termination::tolerance;
                    iter = max_iter + 1; // leave the outer loop as well
                }
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // no admissible step left at this subgradient
            res.converged = true;
            res.termination = Termination::stalled;
            break;
        }
    }
    if (iter == max_iter) {
        res.converged = false;
        res.termination = Termination::max_iter;
    }

    res.argmin = x;
    res.objective = f(x);
    res.iterations = std::min(iter, max_iter);
    return res;
}

} // namespace qphen
