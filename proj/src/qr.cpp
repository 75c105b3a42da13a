#include "qphen/qr.hpp"

#include "qphen/distributions.hpp"
#include "qphen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace qphen {

double pinball_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& beta, double tau) {
    const Eigen::VectorXd r = y - X * beta;
    double s = 0.0;
    for (Eigen::Index j = 0; j < r.size(); ++j) s += pinball(r(j), tau);
    return s;
}

namespace {

// Snap a converged interior iterate onto the best exact-fit vertex whose
// basis lies among the smallest-residual rows. Flat minimizer faces have no
// near-zero residuals and are left untouched, so degenerate problems keep
// the interior iterate.
Eigen::VectorXd polish_vertex(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                              const Eigen::VectorXd& beta) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n < p) return beta;
    const Eigen::VectorXd r = y - X * beta;
    const double scale = 1.0 + y.cwiseAbs().mean();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::sort(idx.begin(), idx.end(),
              [&](Eigen::Index a, Eigen::Index b) { return std::abs(r(a)) < std::abs(r(b)); });
    if (std::abs(r(idx[static_cast<std::size_t>(p) - 1])) > 1e-6 * scale) return beta;

    // candidate rows: the p + 4 smallest residuals; the optimal basis sits
    // among them once the duality gap is tight
    const auto pool = static_cast<std::size_t>(std::min<Eigen::Index>(n, p + 4));
    const auto pz = static_cast<std::size_t>(p);
    std::vector<std::size_t> comb(pz);
    std::iota(comb.begin(), comb.end(), std::size_t{0});

    const double f_old = pinball_objective(X, y, beta, tau);
    double f_best = f_old + 1e-9 * (1.0 + f_old);
    Eigen::VectorXd best = beta;
    Eigen::MatrixXd B(p, p);
    Eigen::VectorXd yb(p);
    for (;;) {
        for (std::size_t k = 0; k < pz; ++k) {
            B.row(static_cast<Eigen::Index>(k)) = X.row(idx[comb[k]]);
            yb(static_cast<Eigen::Index>(k)) = y(idx[comb[k]]);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
        qr.setThreshold(1e-10);
        if (qr.rank() == p) {
            const Eigen::VectorXd vertex = qr.solve(yb);
            if (vertex.allFinite()) {
                const double f_new = pinball_objective(X, y, vertex, tau);
                if (f_new < f_best) {
                    f_best = f_new;
                    best = vertex;
                }
            }
        }
        std::size_t k = pz;
        bool advanced = false;
        while (k > 0) {
            --k;
            if (comb[k] < pool - (pz - k)) {
                ++comb[k];
                for (std::size_t j = k + 1; j < pz; ++j) comb[j] = comb[j - 1] + 1;
                advanced = true;
                break;
            }
        }
        if (!advanced) break;
    }
    return best;
}

} // namespace

QuantileFit fit_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau, QrOptions opts) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("fit_qr: tau must lie in (0,1)");
    if (n <= p) throw DesignError("fit_qr: need more observations than columns");
    {
        std::vector<std::string> anon;
        check_full_rank(X, anon);
    }

    // Bounded dual LP: max y'a subject to X'a = (1-tau) X'1, 0 <= a <= 1.
    // The equality multipliers converge to the regression coefficients.
    const Eigen::VectorXd rhs = (1.0 - tau) * X.transpose() * Eigen::VectorXd::Ones(n);

    Eigen::VectorXd a = Eigen::VectorXd::Constant(n, 1.0 - tau);
    Eigen::VectorXd s = Eigen::VectorXd::Constant(n, tau);
    Eigen::VectorXd beta = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    Eigen::VectorXd r = y - X * beta;
    const double init = std::max(1e-2, 0.05 * r.cwiseAbs().mean());
    Eigen::VectorXd z = r.cwiseMax(0.0).array() + init;
    Eigen::VectorXd w = (-r).cwiseMax(0.0).array() + init;

    const double primal_scale = 1.0 + std::abs(pinball_objective(X, y, beta, tau));
    constexpr double step_damp = 0.99995;

    double gap = std::numeric_limits<double>::infinity();
    std::size_t iter = 0;
    for (; iter < opts.max_iter; ++iter) {
        const double primal_obj = pinball_objective(X, y, beta, tau);
        const double dual_obj = y.dot(a) - (1.0 - tau) * y.sum();
        gap = primal_obj - dual_obj;
        if (gap < opts.gap_tol * (1.0 + std::abs(primal_obj))) break;

        const Eigen::VectorXd r_p = rhs - X.transpose() * a;
        const Eigen::VectorXd r_d = y - X * beta - w + z;
        const Eigen::ArrayXd inv_a = a.array().inverse();
        const Eigen::ArrayXd inv_s = s.array().inverse();
        const Eigen::ArrayXd D = (z.array() * inv_a + w.array() * inv_s).inverse();

        auto solve_direction = [&](const Eigen::ArrayXd& g_a, const Eigen::ArrayXd& g_s,
                                   Eigen::VectorXd& da, Eigen::VectorXd& dbeta, Eigen::VectorXd& ds,
                                   Eigen::VectorXd& dz, Eigen::VectorXd& dw) {
            const Eigen::VectorXd rhs_n =
                (r_d.array() - g_s * inv_s + g_a * inv_a).matrix();
            const Eigen::MatrixXd M =
                X.transpose() * D.matrix().asDiagonal() * X;
            const Eigen::VectorXd mrhs = X.transpose() * (D * rhs_n.array()).matrix() - r_p;
            dbeta = M.ldlt().solve(mrhs);
            da = (D * (rhs_n - X * dbeta).array()).matrix();
            ds = -da;
            dz = ((g_a - z.array() * da.array()) * inv_a).matrix();
            dw = ((g_s - w.array() * ds.array()) * inv_s).matrix();
        };

        auto max_step = [](const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
            double alpha = 1.0;
            for (Eigen::Index j = 0; j < v.size(); ++j)
                if (dv(j) < 0.0) alpha = std::min(alpha, -v(j) / dv(j));
            return alpha;
        };

        // affine predictor
        Eigen::VectorXd da, dbeta, ds, dz, dw;
        solve_direction(-(a.array() * z.array()), -(s.array() * w.array()), da, dbeta, ds, dz, dw);
        if (!dbeta.allFinite()) break;
        const double alpha_p_aff = std::min(max_step(a, da), max_step(s, ds));
        const double alpha_d_aff = std::min(max_step(z, dz), max_step(w, dw));

        const double mu = (a.dot(z) + s.dot(w)) / (2.0 * static_cast<double>(n));
        const double mu_aff = ((a + alpha_p_aff * da).dot(z + alpha_d_aff * dz) +
                               (s + alpha_p_aff * ds).dot(w + alpha_d_aff * dw)) /
                              (2.0 * static_cast<double>(n));
        const double sigma = std::pow(std::max(mu_aff, 0.0) / mu, 3);

        // corrector
        const Eigen::ArrayXd g_a =
            sigma * mu - a.array() * z.array() - da.array() * dz.array();
        const Eigen::ArrayXd g_s =
            sigma * mu - s.array() * w.array() - ds.array() * dw.array();
        solve_direction(g_a, g_s, da, dbeta, ds, dz, dw);
        if (!dbeta.allFinite()) break;

        const double alpha_p = std::min(1.0, step_damp * std::min(max_step(a, da), max_step(s, ds)));
        const double alpha_d = std::min(1.0, step_damp * std::min(max_step(z, dz), max_step(w, dw)));
        a += alpha_p * da;
        s += alpha_p * ds;
        beta += alpha_d * dbeta;
        z += alpha_d * dz;
        w += alpha_d * dw;

        if (std::min(alpha_p, alpha_d) < 1e-14) break; // stalled
    }

    const double primal_obj = pinball_objective(X, y, beta, tau);
    const double dual_obj = y.dot(a) - (1.0 - tau) * y.sum();
    gap = primal_obj - dual_obj;
    if (!(gap < std::sqrt(opts.gap_tol) * (1.0 + std::abs(primal_obj)))) {
        std::vector<double> best(beta.data(), beta.data() + beta.size());
        throw SolverError("fit_qr: interior point did not converge (gap " + std::to_string(gap) +
                              " after " + std::to_string(iter) + " iterations)",
                          std::move(best), primal_obj);
    }

    QuantileFit fit;
    fit.tau = tau;
    fit.beta = polish_vertex(X, y, tau, beta);
    fit.objective = pinball_objective(X, y, fit.beta, tau);
    fit.solver = QrSolver::interior_point;
    fit.iterations = iter;
    const Eigen::VectorXd r_d = y - X * beta - w + z;
    fit.dual_feasible = r_d.cwiseAbs().maxCoeff() <= 1e-6 * primal_scale &&
                        a.minCoeff() >= -1e-12 && a.maxCoeff() <= 1.0 + 1e-12;
    return fit;
}

QuantileFit fit_qr(const Dataset& ds, double tau, const DesignSpec& design, QrOptions opts) {
    const Eigen::MatrixXd X = design_matrix(ds, design);
    const Eigen::VectorXd y = response_vector(ds);
    check_full_rank(X, design_names(ds.schema(), design));
    QuantileFit fit = fit_qr(X, y, tau, opts);
    fit.coefficient_names = design_names(ds.schema(), design);
    return fit;
}

namespace {

// interaction design: (1, year, then per non-baseline group [1(g), 1(g)*year])
Eigen::MatrixXd interaction_matrix(const Dataset& ds, const std::vector<std::string>& groups) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto m = static_cast<Eigen::Index>(groups.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 2 + 2 * (m - 1));
    for (Eigen::Index j = 0; j < n; ++j) {
        const Observation& o = ds.observations()[static_cast<std::size_t>(j)];
        X(j, 0) = 1.0;
        X(j, 1) = static_cast<double>(o.year);
        const auto g = static_cast<Eigen::Index>(
            std::distance(groups.begin(), std::find(groups.begin(), groups.end(), o.group)));
        if (g > 0) {
            X(j, 2 * g) = 1.0;
            X(j, 2 * g + 1) = static_cast<double>(o.year);
        }
    }
    return X;
}

} // namespace

InteractionFit fit_qr_interactions(const Dataset& ds, double tau, QrOptions opts) {
    const std::vector<std::string> groups = ds.groups();
    for (const auto& [lo, hi] : ds.group_ranges()) {
        std::set<int> years;
        for (std::size_t j = lo; j < hi; ++j) years.insert(ds.observations()[j].year);
        if (years.size() < 2)
            throw DesignError("fit_qr_interactions: group \"" + ds.observations()[lo].group +
                              "\" spans a single year");
    }

    InteractionFit out;
    out.tau = tau;
    out.baseline_group = groups.front();
    out.coefficient_names = {"intercept", "year"};
    for (std::size_t g = 1; g < groups.size(); ++g) {
        out.coefficient_names.push_back(groups[g] + ":intercept");
        out.coefficient_names.push_back(groups[g] + ":year");
    }

    if (groups.size() == 1) {
        const QuantileFit base = fit_qr(ds, tau, DesignSpec{true, std::vector<std::size_t>{}}, opts);
        out.beta = base.beta;
        out.objective = base.objective;
        out.per_group[groups[0]] = {base.beta(0), base.beta(1)};
        return out;
    }

    const Eigen::MatrixXd X = interaction_matrix(ds, groups);
    const Eigen::VectorXd y = response_vector(ds);
    check_full_rank(X, out.coefficient_names);
    const QuantileFit fit = fit_qr(X, y, tau, opts);
    out.beta = fit.beta;
    out.objective = fit.objective;
    out.per_group[groups[0]] = {fit.beta(0), fit.beta(1)};
    for (std::size_t g = 1; g < groups.size(); ++g) {
        const auto k = static_cast<Eigen::Index>(2 * g);
        out.per_group[groups[g]] = {fit.beta(0) + fit.beta(k), fit.beta(1) + fit.beta(k + 1)};
    }
    return out;
}

QuantileFit oracle_qr(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                      Eigen::Index max_cols) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n > 14) throw DesignError("oracle_qr: refusing N > 14");
    if (p > max_cols)
        throw DesignError("oracle_qr: refusing more than " + std::to_string(max_cols) + " columns");
    if (n < p) throw DesignError("oracle_qr: need at least as many observations as columns");

    QuantileFit best;
    best.tau = tau;
    best.solver = QrSolver::oracle;
    best.objective = std::numeric_limits<double>::infinity();

    // every p-subset of observations defines a candidate vertex; collinear
    // subsets are skipped
    std::vector<Eigen::Index> comb(static_cast<std::size_t>(p));
    std::iota(comb.begin(), comb.end(), Eigen::Index{0});
    const auto pz = static_cast<std::size_t>(p);
    for (;;) {
        Eigen::MatrixXd B(p, p);
        Eigen::VectorXd yb(p);
        for (std::size_t k = 0; k < pz; ++k) {
            B.row(static_cast<Eigen::Index>(k)) = X.row(comb[k]);
            yb(static_cast<Eigen::Index>(k)) = y(comb[k]);
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
        qr.setThreshold(1e-10);
        if (qr.rank() == p) {
            const Eigen::VectorXd candidate = qr.solve(yb);
            const double obj = pinball_objective(X, y, candidate, tau);
            if (obj < best.objective) {
                best.objective = obj;
                best.beta = candidate;
            }
        }
        // next combination
        std::size_t k = pz;
        while (k > 0) {
            --k;
            if (comb[k] < n - static_cast<Eigen::Index>(pz - k)) {
                ++comb[k];
                for (std::size_t j = k + 1; j < pz; ++j) comb[j] = comb[j - 1] + 1;
                break;
            }
            if (k == 0) {
                if (!std::isfinite(best.objective))
                    throw DesignError("oracle_qr: all observation subsets are collinear");
                return best;
            }
        }
    }
}

QuantileFit oracle_qr(const Dataset& ds, double tau, const DesignSpec& design) {
    const Eigen::MatrixXd X = design_matrix(ds, design);
    const Eigen::VectorXd y = response_vector(ds);
    QuantileFit fit = oracle_qr(X, y, tau, 3);
    fit.coefficient_names = design_names(ds.schema(), design);
    return fit;
}

} // namespace qphen
