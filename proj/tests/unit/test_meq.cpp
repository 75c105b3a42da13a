#include "qphen/eq.hpp"
#include "qphen/errors.hpp"
#include "qphen/meq.hpp"
#include "qphen/rng.hpp"
#include "qphen/simgen.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace qphen;

namespace {

SimSpec meq_spec(std::uint64_t seed, double psi_sd_int, double psi_sd_slope) {
    SimSpec spec;
    spec.groups = 5;
    spec.years = 12;
    spec.start_year = 1995;
    spec.family = ArrivalFamily::normal;
    spec.seed = seed;
    spec.laws.assign(spec.groups, GroupLaw{});
    qphen::Rng rng(seed * 7 + 1);
    for (auto& law : spec.laws) {
        law.location = 120.0 + psi_sd_int * rng.normal();
        law.slope = -0.3 + psi_sd_slope * rng.normal();
        law.scale = 4.0;
        law.nb_mean = 40.0;
        law.nb_dispersion = 8.0;
    }
    return spec;
}

} // namespace

TEST_CASE("fit_meq recovers simulated fixed effects") {
    const SimSpec spec = meq_spec(101, 3.0, 0.15);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);
    const MeqFit fit = fit_meq(cells, 0.5, {MixedCriterion::REML, true, {}});
    CHECK(fit.converged);
    // true median intercept/slope are the group means of the laws
    double a = 0.0, b = 0.0;
    for (const auto& law : spec.laws) {
        a += law.location / static_cast<double>(spec.groups);
        b += law.slope / static_cast<double>(spec.groups);
    }
    CHECK(std::abs(fit.params.beta(0) - a) < 4.0);
    CHECK(std::abs(fit.params.beta(1) - b) < 0.3);
    CHECK(fit.params.psi(0, 0) >= 0.0);
}

TEST_CASE("meq with psi fixed to zero reproduces fit_eq") {
    const SimSpec spec = meq_spec(77, 0.0, 0.0);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);

    SUBCASE("unweighted: beta and sigma agree exactly") {
        MeqOptions opts{MixedCriterion::ML, false, Eigen::Matrix2d::Zero()};
        const MeqFit fit = fit_meq(cells, 0.5, opts);
        const EqFit eq = fit_eq(cells, 0.5, false);
        CHECK((fit.params.beta - eq.beta).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(fit.params.sigma * fit.params.sigma == doctest::Approx(eq.sigma2).epsilon(1e-6));
    }
    SUBCASE("weighted: beta agrees exactly (sigma conventions differ)") {
        MeqOptions opts{MixedCriterion::ML, true, Eigen::Matrix2d::Zero()};
        const MeqFit fit = fit_meq(cells, 0.5, opts);
        const EqFit eq = fit_eq(cells, 0.5, true);
        CHECK((fit.params.beta - eq.beta).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("homogeneous groups drive psi to the boundary and beta to fit_eq") {
    // no group heterogeneity: the free optimizer pushes psi toward zero and
    // the fixed effects agree with the pooled eq fit within 2 standard errors
    const SimSpec spec = meq_spec(55, 0.0, 0.0);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);
    const MeqFit fit = fit_meq(cells, 0.5, {MixedCriterion::ML, true, {}});
    const EqFit eq = fit_eq(cells, 0.5, true);

    // eq standard errors from the weighted information
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
    eq_design(cells, 0.5, X, y, w, true);
    const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X / eq.sigma2;
    const Eigen::MatrixXd cov = info.inverse();
    for (Eigen::Index k = 0; k < eq.beta.size(); ++k) {
        const double se = std::sqrt(cov(k, k));
        CHECK(std::abs(fit.params.beta(k) - eq.beta(k)) <= 2.0 * se);
    }
    CHECK(fit.params.psi(0, 0) < 1.0);
    CHECK(fit.params.psi(1, 1) < 0.05);

    // groups identical to the population get near-zero predicted effects
    const RanefMatrix modes = predict_ranef_meq(fit, cells);
    CHECK(modes.u.col(0).cwiseAbs().maxCoeff() < 1.0);
    CHECK(modes.u.col(1).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("equal cell weights make weighted and unweighted criteria coincide") {
    // single-member cells everywhere -> weights identically 1
    std::vector<std::string> g;
    std::vector<int> yr;
    std::vector<double> day;
    qphen::Rng rng(5);
    for (int i = 0; i < 4; ++i)
        for (int t = -5; t <= 5; ++t) {
            g.push_back("G" + std::to_string(i));
            yr.push_back(t);
            day.push_back(100.0 + 2.0 * i + 0.5 * t + rng.normal());
        }
    const CellTable cells = build_cells(testutil::make_dataset(g, yr, day));
    const MeqFit w = fit_meq(cells, 0.5, {MixedCriterion::ML, true, {}});
    const MeqFit u = fit_meq(cells, 0.5, {MixedCriterion::ML, false, {}});
    CHECK((w.params.beta - u.params.beta).cwiseAbs().maxCoeff() < 1e-7);
    CHECK(w.criterion_value == doctest::Approx(u.criterion_value).epsilon(1e-9));
}

TEST_CASE("meq marginal likelihood dominates perturbed fixed effects") {
    const SimSpec spec = meq_spec(13, 2.0, 0.1);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);
    const MeqFit fit = fit_meq(cells, 0.5, {MixedCriterion::ML, true, {}});
    const double base = meq_loglik(fit.params, cells, true);
    qphen::Rng rng(9);
    for (int k = 0; k < 20; ++k) {
        MixedParams p = fit.params;
        for (Eigen::Index j = 0; j < p.beta.size(); ++j) p.beta(j) += 0.1 * rng.normal();
        CHECK(meq_loglik(p, cells, true) <= base + 1e-10);
    }
}

TEST_CASE("conditional modes match the normal-equations posterior") {
    const SimSpec spec = meq_spec(23, 4.0, 0.2);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);
    const MeqFit fit = fit_meq(cells, 0.5, {MixedCriterion::REML, true, {}});
    const RanefMatrix modes = predict_ranef_meq(fit, cells);
    REQUIRE(modes.groups.size() == spec.groups);

    // independent route: psi Z' V^{-1} r per group
    Eigen::MatrixXd X;
    Eigen::VectorXd y, w;
    eq_design(cells, 0.5, X, y, w, true);
    std::size_t row = 0;
    for (std::size_t gi = 0; gi < modes.groups.size(); ++gi) {
        std::size_t len = 0;
        while (row + len < cells.size() && cells.cells()[row + len].group == modes.groups[gi]) ++len;
        const Eigen::MatrixXd Xi = X.middleRows(static_cast<Eigen::Index>(row),
                                                static_cast<Eigen::Index>(len));
        const Eigen::MatrixXd Zi = Xi.leftCols(2);
        const Eigen::VectorXd ri =
            y.segment(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(len)) -
            Xi * fit.params.beta;
        Eigen::MatrixXd Vi = Zi * fit.params.psi * Zi.transpose();
        Vi.diagonal() += fit.params.sigma * fit.params.sigma *
                         w.segment(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(len))
                             .cwiseInverse();
        const Eigen::Vector2d oracle = fit.params.psi * Zi.transpose() * Vi.ldlt().solve(ri);
        CHECK((modes.u.row(static_cast<Eigen::Index>(gi)).transpose() - oracle).norm() < 1e-8);
        row += len;
    }

    SUBCASE("score equation: precision-weighted modes sum to zero") {
        // sum_i psi^{-1} u_hat_i equals sum_i Z' V^{-1} r_i, which the GLS
        // normal equations drive to zero over the intercept/slope columns
        Eigen::Vector2d acc = Eigen::Vector2d::Zero();
        std::size_t r2 = 0;
        for (std::size_t gi = 0; gi < modes.groups.size(); ++gi) {
            std::size_t len = 0;
            while (r2 + len < cells.size() && cells.cells()[r2 + len].group == modes.groups[gi])
                ++len;
            const Eigen::MatrixXd Xi = X.middleRows(static_cast<Eigen::Index>(r2),
                                                    static_cast<Eigen::Index>(len));
            const Eigen::MatrixXd Zi = Xi.leftCols(2);
            const Eigen::VectorXd ri =
                y.segment(static_cast<Eigen::Index>(r2), static_cast<Eigen::Index>(len)) -
                Xi * fit.params.beta;
            Eigen::MatrixXd Vi = Zi * fit.params.psi * Zi.transpose();
            Vi.diagonal() +=
                fit.params.sigma * fit.params.sigma *
                w.segment(static_cast<Eigen::Index>(r2), static_cast<Eigen::Index>(len))
                    .cwiseInverse();
            acc += Zi.transpose() * Vi.ldlt().solve(ri);
            r2 += len;
        }
        CHECK(acc.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("psi shrinking to zero drives the modes to zero") {
    const SimSpec spec = meq_spec(31, 2.0, 0.1);
    const Dataset ds = simulate(spec);
    const CellTable cells = build_cells(ds);
    MeqFit fit = fit_meq(cells, 0.5, {MixedCriterion::ML, true, {}});
    fit.params.psi = 1e-14 * Eigen::Matrix2d::Identity();
    const RanefMatrix modes = predict_ranef_meq(fit, cells);
    CHECK(modes.u.cwiseAbs().maxCoeff() < 1e-6);
    CHECK(modes.ridged); // near-singular psi trips the ridge guard
}

TEST_CASE("fit_meq design errors") {
    SUBCASE("single-year group is named") {
        std::vector<std::string> g{"A", "A", "A", "B", "B", "B"};
        std::vector<int> yr{0, 1, 2, 1, 1, 1};
        std::vector<double> day{1, 2, 3, 4, 5, 6};
        const CellTable cells = build_cells(testutil::make_dataset(g, yr, day));
        CHECK_THROWS_WITH_AS(fit_meq(cells, 0.5, {}), doctest::Contains("B"), DesignError);
    }
    SUBCASE("one group is rejected without fix_psi") {
        std::vector<std::string> g{"A", "A", "A", "A"};
        std::vector<int> yr{0, 1, 2, 3};
        std::vector<double> day{1, 2, 3, 4};
        const CellTable cells = build_cells(testutil::make_dataset(g, yr, day));
        CHECK_THROWS_AS(fit_meq(cells, 0.5, {}), DesignError);
    }
}
