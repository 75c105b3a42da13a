#include "qphen/lqm.hpp"

#include "qphen/distributions.hpp"
#include "qphen/errors.hpp"
#include "qphen/optim.hpp"
#include "qphen/qr.hpp"

#include <algorithm>
#include <cmath>

namespace qphen {

namespace {

// Least-squares start with the intercept shifted so the tau-quantile of the
// residuals is zero.
Eigen::VectorXd starting_beta(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau) {
    Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    std::vector<double> resid(static_cast<std::size_t>(y.size()));
    const Eigen::VectorXd r = y - X * beta;
    for (Eigen::Index i = 0; i < r.size(); ++i) resid[static_cast<std::size_t>(i)] = r(i);
    std::sort(resid.begin(), resid.end());
    beta(0) += empirical_quantile(resid, tau);
    return beta;
}

} // namespace

LqmFit fit_lqm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau, LqmMethod method) {
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("fit_lqm: tau must lie in (0,1)");
    if (X.rows() <= X.cols()) throw DesignError("fit_lqm: need more observations than columns");
    {
        std::vector<std::string> anon;
        check_full_rank(X, anon);
    }
    const double n = static_cast<double>(X.rows());

    auto objective = [&](const Eigen::VectorXd& b) { return pinball_objective(X, y, b, tau); };
    // generalized gradient with the right-derivative convention at zero
    auto gradient = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd r = y - X * b;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(X.cols());
        for (Eigen::Index j = 0; j < r.size(); ++j) {
            const double psi = (r(j) < 0.0) ? (tau - 1.0) : tau;
            g -= X.row(j).transpose() * psi;
        }
        return g;
    };

    const Eigen::VectorXd b0 = starting_beta(X, y, tau);
    OptimResult res;
    if (method == LqmMethod::gradient) {
        res = gradient_search(objective, gradient, b0, {1e-10, {}});
    } else {
        // restarted simplex: rebuild the simplex at the incumbent until the
        // objective stops improving, which rides out piecewise-linear ridges
        res = nelder_mead(objective, b0, {1e-12, {}});
        for (int restart = 0; restart < 20; ++restart) {
            OptimResult next = nelder_mead(objective, res.argmin, {1e-12, {}});
            next.iterations += res.iterations;
            const bool improved = next.objective < res.objective - 1e-12 * (1.0 + res.objective);
            res = next;
            if (!improved) break;
        }
    }

    LqmFit fit;
    fit.tau = tau;
    fit.method = method;
    fit.beta = res.argmin;
    fit.iterations = res.iterations;
    fit.pinball_sum = pinball_objective(X, y, fit.beta, tau);
    fit.loglik = n * std::log(tau * (1.0 - tau)) - fit.pinball_sum;
    return fit;
}

LqmFit fit_lqm(const Dataset& ds, double tau, LqmMethod method, const DesignSpec& design) {
    const Eigen::MatrixXd X = design_matrix(ds, design);
    const Eigen::VectorXd y = response_vector(ds);
    check_full_rank(X, design_names(ds.schema(), design));
    LqmFit fit = fit_lqm(X, y, tau, method);
    fit.coefficient_names = design_names(ds.schema(), design);
    return fit;
}

MethodComparison compare_methods(const Dataset& ds, const std::vector<double>& taus,
                                 const DesignSpec& design) {
    MethodComparison table;
    table.taus = taus;
    table.coefficient_names = design_names(ds.schema(), design);
    const auto p = table.coefficient_names.size();

    auto rel = [](double a, double b) {
        const double denom = std::max(std::abs(b), 1e-12);
        return std::abs(a - b) / denom;
    };

    for (double tau : taus) {
        const LqmFit grad = fit_lqm(ds, tau, LqmMethod::gradient, design);
        const LqmFit nm = fit_lqm(ds, tau, LqmMethod::nelder_mead, design);
        const QuantileFit ip = fit_qr(ds, tau, design);

        std::vector<double> g(p), m(p), q(p), agm(p), agq(p), amq(p), rgq(p), rmq(p);
        for (std::size_t k = 0; k < p; ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            g[k] = grad.beta(ki);
            m[k] = nm.beta(ki);
            q[k] = ip.beta(ki);
            agm[k] = std::abs(g[k] - m[k]);
            agq[k] = std::abs(g[k] - q[k]);
            amq[k] = std::abs(m[k] - q[k]);
            rgq[k] = rel(g[k], q[k]);
            rmq[k] = rel(m[k], q[k]);
        }
        table.gradient.push_back(std::move(g));
        table.nelder_mead.push_back(std::move(m));
        table.interior_point.push_back(std::move(q));
        table.abs_grad_vs_nm.push_back(std::move(agm));
        table.abs_grad_vs_ip.push_back(std::move(agq));
        table.abs_nm_vs_ip.push_back(std::move(amq));
        table.rel_grad_vs_ip.push_back(std::move(rgq));
        table.rel_nm_vs_ip.push_back(std::move(rmq));
    }
    return table;
}

} // namespace qphen
