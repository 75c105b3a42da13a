#include "qphen/eq.hpp"

#include "qphen/design.hpp"
#include "qphen/errors.hpp"

#include <cmath>
#include <numbers>

namespace qphen {

void eq_design(const CellTable& cells, double tau, Eigen::MatrixXd& X, Eigen::VectorXd& y,
               Eigen::VectorXd& w, bool weighted) {
    const auto m = static_cast<Eigen::Index>(cells.size());
    if (m == 0) throw DesignError("fit_eq: no cells");
    const auto p = static_cast<Eigen::Index>(cells.cells().front().covariates.size());
    X.resize(m, 2 + p);
    y.resize(m);
    w.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Cell& c = cells.cells()[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        X(i, 1) = static_cast<double>(c.year);
        for (Eigen::Index k = 0; k < p; ++k) X(i, 2 + k) = c.covariates[static_cast<std::size_t>(k)];
        y(i) = cell_quantile(c, tau);
        w(i) = weighted ? c.weight : 1.0;
    }
}

double eq_loglik(const CellTable& cells, double tau, bool weighted, const Eigen::VectorXd& beta,
                 double sigma2) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
    eq_design(cells, tau, X, y, w, weighted);
    const Eigen::VectorXd r = y - X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i)
        ll += w(i) * (-0.5 * std::log(2.0 * std::numbers::pi * sigma2) -
                      0.5 * r(i) * r(i) / sigma2);
    return ll;
}

EqFit fit_eq(const CellTable& cells, double tau, bool weighted) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
    eq_design(cells, tau, X, y, w, weighted);
    if (X.rows() <= X.cols())
        throw DesignError("fit_eq: need more cells (" + std::to_string(X.rows()) +
                          ") than columns (" + std::to_string(X.cols()) + ")");

    std::vector<std::string> names{"intercept", "year"};
    for (Eigen::Index k = 2; k < X.cols(); ++k) {
        const auto idx = static_cast<std::size_t>(k - 2);
        names.push_back(idx < cells.covariate_names().size() ? cells.covariate_names()[idx]
                                                             : "cov" + std::to_string(idx));
    }
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::MatrixXd Xw = sw.asDiagonal() * X;
    check_full_rank(Xw, names);

    EqFit fit;
    fit.tau = tau;
    fit.weighted = weighted;
    fit.coefficient_names = std::move(names);
    // QR of the sqrt-weighted design; the normal-equations route is kept in
    // the tests as an independent oracle
    fit.beta = Xw.householderQr().solve((sw.array() * y.array()).matrix());
    const Eigen::VectorXd r = y - X * fit.beta;
    const double wsum = w.sum();
    fit.sigma2 = (w.array() * r.array().square()).sum() / wsum;
    fit.degenerate = fit.sigma2 <= 1e-14 * (1.0 + y.squaredNorm() / static_cast<double>(y.size()));
    if (fit.degenerate) fit.sigma2 = std::max(fit.sigma2, 0.0);
    fit.loglik = fit.degenerate ? std::numeric_limits<double>::infinity()
                                : eq_loglik(cells, tau, weighted, fit.beta, fit.sigma2);
    return fit;
}

} // namespace qphen
