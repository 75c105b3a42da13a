#include "qphen/lqmm.hpp"

#include "qphen/distributions.hpp"
#include "qphen/errors.hpp"
#include "qphen/optim.hpp"
#include "qphen/qr.hpp"
#include "qphen/rng.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace qphen {

void gauss_hermite(int knots, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    if (knots < 1) throw DataError("gauss_hermite: need at least one knot");
    const Eigen::Index k = knots;
    // Golub-Welsch on the Hermite Jacobi matrix
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 1; i < k; ++i) {
        const double off = std::sqrt(static_cast<double>(i) / 2.0);
        jacobi(i, i - 1) = off;
        jacobi(i - 1, i) = off;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    nodes = es.eigenvalues();
    weights.resize(k);
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (Eigen::Index i = 0; i < k; ++i) {
        const double v0 = es.eigenvectors()(0, i);
        weights(i) = sqrt_pi * v0 * v0;
    }
    // enforce exact symmetry about zero
    for (Eigen::Index i = 0; i < k / 2; ++i) {
        const Eigen::Index j = k - 1 - i;
        const double x = 0.5 * (nodes(j) - nodes(i));
        nodes(i) = -x;
        nodes(j) = x;
        const double w = 0.5 * (weights(i) + weights(j));
        weights(i) = weights(j) = w;
    }
    if (k % 2 == 1) nodes(k / 2) = 0.0;
}

QuadratureRule make_quadrature(int knots, const Eigen::Matrix2d& psi) {
    Eigen::VectorXd x, w;
    gauss_hermite(knots, x, w);

    // PSD square root; tolerates singular psi (nodes collapse toward 0)
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(psi);
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0);
    const Eigen::Matrix2d root =
        es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();

    QuadratureRule rule;
    rule.knots_per_dim = knots;
    const Eigen::Index m = x.size() * x.size();
    rule.nodes.resize(2, m);
    rule.log_weights.resize(m);
    const double sqrt2 = std::numbers::sqrt2;
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        for (Eigen::Index j = 0; j < x.size(); ++j, ++c) {
            rule.nodes.col(c) = root * (sqrt2 * Eigen::Vector2d(x(i), x(j)));
            rule.log_weights(c) = std::log(w(i)) + std::log(w(j)) - std::log(std::numbers::pi);
        }
    }
    return rule;
}

namespace {

struct GroupObs {
    std::string group;
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    Eigen::VectorXd y;
};

std::vector<GroupObs> split_observations(const Dataset& ds, const DesignSpec& design) {
    const Eigen::MatrixXd X = design_matrix(ds, design);
    const Eigen::MatrixXd Zfull = design_matrix(ds, DesignSpec{true, std::vector<std::size_t>{}});
    const Eigen::VectorXd y = response_vector(ds);
    std::vector<GroupObs> out;
    for (const auto& [lo, hi] : ds.group_ranges()) {
        GroupObs g;
        g.group = ds.observations()[lo].group;
        const auto a = static_cast<Eigen::Index>(lo);
        const auto len = static_cast<Eigen::Index>(hi - lo);
        g.X = X.middleRows(a, len);
        g.Z = Zfull.middleRows(a, len);
        g.y = y.segment(a, len);
        out.push_back(std::move(g));
    }
    return out;
}

double group_loglik(const GroupObs& g, const MixedParams& p, const QuadratureRule& rule) {
    const Eigen::VectorXd base = g.y - g.X * p.beta;
    const double log_norm = std::log(p.tau * (1.0 - p.tau) / p.sigma);
    double best = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd vals(rule.log_weights.size());
    for (Eigen::Index k = 0; k < rule.log_weights.size(); ++k) {
        const Eigen::VectorXd shift = g.Z * rule.nodes.col(k);
        double s = 0.0;
        for (Eigen::Index j = 0; j < base.size(); ++j)
            s += log_norm - pinball(base(j) - shift(j), p.tau) / p.sigma;
        vals(k) = s + rule.log_weights(k);
        best = std::max(best, vals(k));
    }
    if (!std::isfinite(best)) return best;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < vals.size(); ++k) acc += std::exp(vals(k) - best);
    return best + std::log(acc);
}

} // namespace

double loglik_lqmm(const MixedParams& params, const Dataset& ds, const QuadratureRule& rule,
                   const DesignSpec& design) {
    const auto groups = split_observations(ds, design);
    double total = 0.0;
    for (const auto& g : groups) total += group_loglik(g, params, rule);
    return total;
}

namespace {

struct LqmmObjective {
    const std::vector<GroupObs>& groups;
    double tau;
    int knots;
    std::optional<Eigen::Matrix2d> fix_psi;
    Eigen::Index p;

    // theta layout: beta (p), log sigma_eps, then log-Cholesky psi unless fixed
    MixedParams unpack(const Eigen::VectorXd& theta) const {
        MixedParams m;
        m.beta = theta.head(p);
        m.sigma = std::exp(theta(p));
        m.tau = tau;
        if (fix_psi) {
            m.psi = *fix_psi;
        } else {
            Eigen::Matrix2d L = Eigen::Matrix2d::Zero();
            L(0, 0) = std::exp(theta(p + 1));
            L(1, 0) = theta(p + 2);
            L(1, 1) = std::exp(theta(p + 3));
            m.psi = L * L.transpose();
        }
        return m;
    }

    double operator()(const Eigen::VectorXd& theta) const {
        const MixedParams m = unpack(theta);
        const QuadratureRule rule = make_quadrature(knots, m.psi);
        double total = 0.0;
        for (const auto& g : groups) total += group_loglik(g, m, rule);
        return -total;
    }
};

} // namespace

LqmmFit fit_lqmm(const Dataset& ds, double tau, LqmmOptions opts) {
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("fit_lqmm: tau must lie in (0,1)");
    if (opts.knots < 3 || opts.knots % 2 == 0)
        throw DataError("fit_lqmm: knots must be odd and >= 3");
    const auto groups = split_observations(ds, opts.design);
    if (groups.size() < 2 && !opts.fix_psi) throw DesignError("fit_lqmm: need at least 2 groups");

    const Eigen::Index p = groups.front().X.cols();
    const auto n_theta = static_cast<Eigen::Index>(p + 1 + (opts.fix_psi ? 0 : 3));

    Eigen::VectorXd theta0(n_theta);
    if (opts.start) {
        theta0.head(p) = opts.start->beta;
        theta0(p) = std::log(opts.start->sigma);
        if (!opts.fix_psi) {
            const Eigen::LLT<Eigen::Matrix2d> llt(
                opts.start->psi + 1e-8 * Eigen::Matrix2d::Identity());
            const Eigen::Matrix2d L = llt.matrixL();
            theta0(p + 1) = std::log(std::max(L(0, 0), 1e-6));
            theta0(p + 2) = L(1, 0);
            theta0(p + 3) = std::log(std::max(L(1, 1), 1e-6));
        }
    } else {
        // pooled interior-point fit, residual scale, per-group deviations
        const QuantileFit pooled = fit_qr(ds, tau, opts.design);
        theta0.head(p) = pooled.beta;
        const double sigma0 =
            std::max(pooled.objective / static_cast<double>(ds.size()), 1e-3);
        theta0(p) = std::log(sigma0);
        if (!opts.fix_psi) {
            Eigen::MatrixXd devs(static_cast<Eigen::Index>(groups.size()), 2);
            Eigen::Index kept = 0;
            for (const auto& g : groups) {
                std::set<double> years(g.Z.col(1).data(), g.Z.col(1).data() + g.Z.rows());
                if (years.size() < 2 || g.y.size() <= g.Z.cols()) continue;
                try {
                    const QuantileFit gf = fit_qr(g.Z, g.y, tau);
                    devs(kept, 0) = gf.beta(0) - pooled.beta(0);
                    devs(kept, 1) = gf.beta(1) - pooled.beta(1);
                    ++kept;
                } catch (const Error&) {
                    // group too degenerate to contribute to the start
                }
            }
            Eigen::Matrix2d psi0 = 1e-2 * sigma0 * sigma0 * Eigen::Matrix2d::Identity();
            if (kept >= 2) {
                const Eigen::MatrixXd d = devs.topRows(kept);
                const Eigen::RowVector2d mean = d.colwise().mean();
                const Eigen::MatrixXd centered = d.rowwise() - mean;
                psi0 = (centered.transpose() * centered) / static_cast<double>(kept - 1);
            }
            const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(psi0);
            const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(1e-6);
            psi0 = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
            const Eigen::LLT<Eigen::Matrix2d> llt(psi0);
            const Eigen::Matrix2d L = llt.matrixL();
            theta0(p + 1) = std::log(std::max(L(0, 0), 1e-6));
            theta0(p + 2) = L(1, 0);
            theta0(p + 3) = std::log(std::max(L(1, 1), 1e-6));
        }
    }

    const LqmmObjective objective{groups, tau, opts.knots, opts.fix_psi, p};
    if (!std::isfinite(objective(theta0)))
        throw DataError(
            "fit_lqmm: likelihood is non-finite at the start; supply per-group qr starting values");

    std::vector<Eigen::VectorXd> starts{theta0};
    if (opts.multi_start) {
        Rng rng(opts.multi_start_seed);
        for (int s = 0; s < 4; ++s) {
            Eigen::VectorXd jittered = theta0;
            for (Eigen::Index k = 0; k < jittered.size(); ++k)
                jittered(k) += 0.25 * rng.normal() * (1.0 + std::abs(theta0(k)));
            starts.push_back(jittered);
        }
    }

    OptimResult best;
    best.objective = std::numeric_limits<double>::infinity();
    std::size_t total_iter = 0;
    bool any_converged = false;
    for (const auto& s0 : starts) {
        if (!std::isfinite(objective(s0))) continue;
        const OptimResult res = nelder_mead(objective, s0, {1e-9, {}});
        total_iter += res.iterations;
        any_converged = any_converged || res.converged;
        if (res.objective < best.objective) best = res;
    }
    if (!std::isfinite(best.objective)) throw SolverError("fit_lqmm: no usable start");
    if (!any_converged) {
        std::vector<double> iter(best.argmin.data(), best.argmin.data() + best.argmin.size());
        throw SolverError("fit_lqmm: optimizer did not converge", std::move(iter), best.objective);
    }

    LqmmFit fit;
    fit.params = objective.unpack(best.argmin);
    fit.loglik = -best.objective;
    fit.knots = opts.knots;
    fit.iterations = total_iter;
    fit.converged = any_converged;
    for (const auto& g : groups) fit.groups.push_back(g.group);
    fit.coefficient_names = design_names(ds.schema(), opts.design);
    return fit;
}

std::vector<std::pair<std::string, Eigen::Vector2d>> species_coefficients(
    const MixedParams& fit, const RanefMatrix& ranef) {
    std::vector<std::pair<std::string, Eigen::Vector2d>> out;
    for (std::size_t i = 0; i < ranef.groups.size(); ++i) {
        const Eigen::Vector2d u = ranef.u.row(static_cast<Eigen::Index>(i)).transpose();
        out.emplace_back(ranef.groups[i], Eigen::Vector2d(fit.beta.head(2)) + u);
    }
    return out;
}

} // namespace qphen
