#include "qphen/meq.hpp"

#include "qphen/eq.hpp"
#include "qphen/errors.hpp"
#include "qphen/optim.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace qphen {

void validate(const MixedParams& p) {
    if (!(p.sigma > 0.0)) throw DataError("MixedParams: sigma must be > 0");
    if (std::abs(p.psi(0, 1) - p.psi(1, 0)) > 1e-12 * (1.0 + std::abs(p.psi(0, 1))))
        throw DataError("MixedParams: psi must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(p.psi);
    if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
        throw DataError("MixedParams: psi must be positive semidefinite");
}

namespace {

struct GroupCells {
    std::string group;
    Eigen::MatrixXd X; // cells x (2+p)
    Eigen::MatrixXd Z; // cells x 2
    Eigen::VectorXd y;
    Eigen::VectorXd w;
};

std::vector<GroupCells> split_cells(const CellTable& cells, double tau, bool weighted) {
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
    eq_design(cells, tau, X, y, w, weighted);
    std::vector<GroupCells> out;
    Eigen::Index start = 0;
    for (Eigen::Index i = 1; i <= X.rows(); ++i) {
        if (i == X.rows() ||
            cells.cells()[static_cast<std::size_t>(i)].group !=
                cells.cells()[static_cast<std::size_t>(start)].group) {
            GroupCells g;
            g.group = cells.cells()[static_cast<std::size_t>(start)].group;
            g.X = X.middleRows(start, i - start);
            g.Z = g.X.leftCols(2);
            g.y = y.segment(start, i - start);
            g.w = w.segment(start, i - start);
            out.push_back(std::move(g));
            start = i;
        }
    }
    return out;
}

Eigen::Matrix2d psi_from_theta(const Eigen::VectorXd& theta) {
    Eigen::Matrix2d L = Eigen::Matrix2d::Zero();
    L(0, 0) = std::exp(theta(0));
    L(1, 0) = theta(1);
    L(1, 1) = std::exp(theta(2));
    return L * L.transpose();
}

// log-Cholesky of a PSD matrix, diagonals floored away from zero
Eigen::Vector3d theta_from_psi(const Eigen::Matrix2d& psi, double floor_sd) {
    Eigen::Matrix2d a = psi;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(a);
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(floor_sd * floor_sd);
    a = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    const Eigen::LLT<Eigen::Matrix2d> llt(a);
    Eigen::Matrix2d L = llt.matrixL();
    if (llt.info() != Eigen::Success) {
        L.setZero();
        L(0, 0) = L(1, 1) = floor_sd;
    }
    return {std::log(std::max(L(0, 0), floor_sd)), L(1, 0),
            std::log(std::max(L(1, 1), floor_sd))};
}

struct Criterion {
    const std::vector<GroupCells>& groups;
    MixedCriterion kind;

    // deviance at (psi, sigma) with beta profiled by GLS
    double operator()(const Eigen::Matrix2d& psi, double sigma, Eigen::VectorXd* beta_out) const {
        const auto p = groups.front().X.cols();
        Eigen::MatrixXd xtvx = Eigen::MatrixXd::Zero(p, p);
        Eigen::VectorXd xtvy = Eigen::VectorXd::Zero(p);
        std::vector<Eigen::LDLT<Eigen::MatrixXd>> factors;
        factors.reserve(groups.size());
        double logdet = 0.0;
        double n_total = 0.0;
        for (const auto& g : groups) {
            Eigen::MatrixXd v = g.Z * psi * g.Z.transpose();
            v.diagonal() += (sigma * sigma) * g.w.cwiseInverse();
            factors.emplace_back(v);
            const auto& ldlt = factors.back();
            if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
            logdet += ldlt.vectorD().array().max(1e-300).log().sum();
            xtvx += g.X.transpose() * ldlt.solve(g.X);
            xtvy += g.X.transpose() * ldlt.solve(g.y);
            n_total += static_cast<double>(g.y.size());
        }
        const Eigen::VectorXd beta = xtvx.ldlt().solve(xtvy);
        if (beta_out) *beta_out = beta;
        double quad = 0.0;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const Eigen::VectorXd r = groups[i].y - groups[i].X * beta;
            quad += r.dot(factors[i].solve(r));
        }
        double dev = logdet + quad + n_total * std::log(2.0 * std::numbers::pi);
        if (kind == MixedCriterion::REML) {
            const Eigen::LDLT<Eigen::MatrixXd> xx(xtvx);
            dev += xx.vectorD().array().max(1e-300).log().sum() -
                   static_cast<double>(p) * std::log(2.0 * std::numbers::pi);
        }
        return dev;
    }
};

} // namespace

double meq_loglik(const MixedParams& params, const CellTable& cells, bool weighted) {
    const auto groups = split_cells(cells, params.tau, weighted);
    double ll = 0.0;
    for (const auto& g : groups) {
        Eigen::MatrixXd v = g.Z * params.psi * g.Z.transpose();
        v.diagonal() += (params.sigma * params.sigma) * g.w.cwiseInverse();
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
        const Eigen::VectorXd r = g.y - g.X * params.beta;
        ll += -0.5 * (ldlt.vectorD().array().max(1e-300).log().sum() + r.dot(ldlt.solve(r)) +
                      static_cast<double>(g.y.size()) * std::log(2.0 * std::numbers::pi));
    }
    return ll;
}

MeqFit fit_meq(const CellTable& cells, double tau, MeqOptions opts) {
    const auto groups = split_cells(cells, tau, opts.weighted);
    if (!opts.fix_psi && groups.size() < 2) throw DesignError("fit_meq: need at least 2 groups");
    for (const auto& g : groups) {
        std::set<double> years(g.X.col(1).begin(), g.X.col(1).end());
        if (years.size() < 2)
            throw DesignError("fit_meq: group \"" + g.group + "\" spans a single year");
        if (!opts.fix_psi && g.y.size() < 3)
            throw DesignError("fit_meq: group \"" + g.group + "\" has fewer than 3 cells");
    }

    // starting values: per-group OLS lines for psi, pooled residual scale
    const auto p = groups.front().X.cols();
    Eigen::MatrixXd coefs(static_cast<Eigen::Index>(groups.size()), 2);
    double sse = 0.0, n_cells = 0.0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        const Eigen::VectorXd b =
            (g.X.transpose() * g.X).ldlt().solve(g.X.transpose() * g.y);
        coefs.row(static_cast<Eigen::Index>(i)) = b.head(2).transpose();
        sse += (g.y - g.X * b).squaredNorm();
        n_cells += static_cast<double>(g.y.size());
    }
    const double sigma0 = std::sqrt(std::max(sse / n_cells, 1e-4));
    const Eigen::RowVector2d mean = coefs.colwise().mean();
    Eigen::Matrix2d psi0 = Eigen::Matrix2d::Zero();
    if (groups.size() > 1) {
        const Eigen::MatrixXd centered = coefs.rowwise() - mean;
        psi0 = (centered.transpose() * centered) / static_cast<double>(groups.size() - 1);
    }

    const Criterion crit{groups, opts.criterion};
    MeqFit fit;
    fit.criterion = opts.criterion;
    fit.weighted = opts.weighted;
    for (const auto& g : groups) fit.groups.push_back(g.group);
    fit.coefficient_names = {"intercept", "year"};
    for (Eigen::Index k = 2; k < p; ++k) {
        const auto idx = static_cast<std::size_t>(k - 2);
        fit.coefficient_names.push_back(idx < cells.covariate_names().size()
                                            ? cells.covariate_names()[idx]
                                            : "cov" + std::to_string(idx));
    }

    OptimResult res;
    if (opts.fix_psi) {
        const Eigen::Matrix2d psi = *opts.fix_psi;
        auto f = [&](const Eigen::VectorXd& t) { return crit(psi, std::exp(t(0)), nullptr); };
        Eigen::VectorXd t0(1);
        t0 << std::log(sigma0);
        res = nelder_mead(f, t0, {1e-10, {}});
        fit.params.psi = psi;
        fit.params.sigma = std::exp(res.argmin(0));
    } else {
        const Eigen::Vector3d chol0 = theta_from_psi(psi0, 1e-2 * sigma0);
        auto f = [&](const Eigen::VectorXd& t) {
            return crit(psi_from_theta(t), std::exp(t(3)), nullptr);
        };
        Eigen::VectorXd t0(4);
        t0 << chol0(0), chol0(1), chol0(2), std::log(sigma0);
        res = nelder_mead(f, t0, {1e-10, {}});
        fit.params.psi = psi_from_theta(res.argmin);
        fit.params.sigma = std::exp(res.argmin(res.argmin.size() - 1));
    }
    if (!res.converged) {
        std::vector<double> best(res.argmin.data(), res.argmin.data() + res.argmin.size());
        throw SolverError("fit_meq: optimizer did not converge", std::move(best), res.objective);
    }

    Eigen::VectorXd beta;
    fit.criterion_value = crit(fit.params.psi, fit.params.sigma, &beta);
    fit.params.beta = beta;
    fit.params.tau = tau;
    fit.iterations = res.iterations;
    fit.converged = res.converged;
    fit.loglik = meq_loglik(fit.params, cells, opts.weighted);
    return fit;
}

RanefMatrix predict_ranef_meq(const MeqFit& fit, const CellTable& cells) {
    if (!fit.converged) throw SolverError("predict_ranef_meq: fit did not converge");
    const auto groups = split_cells(cells, fit.params.tau, fit.weighted);

    RanefMatrix out;
    out.method = RanefMethod::conditional_mode;
    out.u.resize(static_cast<Eigen::Index>(groups.size()), 2);

    // posterior mode: (Z'R^-1 Z + psi^-1)^-1 Z'R^-1 r, ridging psi when singular
    Eigen::Matrix2d psi = fit.params.psi;
    const double ridge = 1e-10;
    if (std::abs(psi.determinant()) < ridge * (1.0 + psi.trace() * psi.trace())) {
        psi += ridge * Eigen::Matrix2d::Identity();
        out.ridged = true;
    }
    const Eigen::Matrix2d psi_inv = psi.inverse();
    const double s2 = fit.params.sigma * fit.params.sigma;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const auto& g = groups[i];
        out.groups.push_back(g.group);
        const Eigen::VectorXd r = g.y - g.X * fit.params.beta;
        const Eigen::Matrix2d a =
            g.Z.transpose() * (g.w.array() / s2).matrix().asDiagonal() * g.Z + psi_inv;
        const Eigen::Vector2d b = g.Z.transpose() * (g.w.array() / s2 * r.array()).matrix();
        const Eigen::LDLT<Eigen::Matrix2d> ldlt(a);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("predict_ranef_meq: singular posterior system for group " + g.group);
        out.u.row(static_cast<Eigen::Index>(i)) = ldlt.solve(b).transpose();
    }
    return out;
}

} // namespace qphen
