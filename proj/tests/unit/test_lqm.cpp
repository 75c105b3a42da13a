#include "qphen/lqm.hpp"
#include "qphen/qr.hpp"
#include "qphen/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace qphen;

TEST_CASE("nelder-mead lqm matches the interior-point pinball objective") {
    qphen::Rng rng(55);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = testutil::random_instance(rng, 50, 1 + static_cast<Eigen::Index>(rng.below(2)));
        const double tau = 0.15 + 0.7 * rng.uniform01();
        const LqmFit nm = fit_lqm(inst.X, inst.y, tau, LqmMethod::nelder_mead);
        const QuantileFit ip = fit_qr(inst.X, inst.y, tau);
        CHECK(nm.pinball_sum == doctest::Approx(ip.objective).epsilon(1e-6));
    }
}

TEST_CASE("exact interpolation attains the loglik bound") {
    Eigen::MatrixXd X(3, 2);
    X << 1, 0, 1, 1, 1, 2;
    Eigen::VectorXd y(3);
    y << 2, 5, 8; // on the line 2 + 3x
    const double tau = 0.35;
    const LqmFit fit = fit_lqm(X, y, tau, LqmMethod::nelder_mead);
    CHECK(fit.loglik == doctest::Approx(3.0 * std::log(tau * (1.0 - tau))).epsilon(1e-9));
    CHECK(fit.pinball_sum == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("loglik never exceeds its algebraic bound") {
    qphen::Rng rng(66);
    for (int rep = 0; rep < 10; ++rep) {
        auto inst = testutil::random_instance(rng, 30, 1);
        const double tau = 0.1 + 0.8 * rng.uniform01();
        for (LqmMethod m : {LqmMethod::nelder_mead, LqmMethod::gradient}) {
            const LqmFit fit = fit_lqm(inst.X, inst.y, tau, m);
            const double bound = 30.0 * std::log(tau * (1.0 - tau));
            CHECK(fit.loglik <= bound + 1e-12);
            // identity: loglik = bound - pinball_sum
            CHECK(fit.loglik ==
                  doctest::Approx(bound - fit.pinball_sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("gradient and nelder-mead may disagree with a binary covariate") {
    // a design the gradient method is documented to struggle with; the table
    // reports the discrepancy without asserting equality
    qphen::Rng rng(91);
    std::vector<std::string> g;
    std::vector<int> yr;
    std::vector<double> day;
    std::vector<std::vector<double>> covs;
    Schema schema{{{"age", CovariateKind::binary}}};
    for (int i = 0; i < 60; ++i) {
        const double age = static_cast<double>(rng.below(2));
        g.push_back("A");
        yr.push_back(static_cast<int>(rng.below(10)) - 5);
        day.push_back(100.0 - 0.4 * yr.back() + 3.0 * age + rng.normal() * 5.0);
        covs.push_back({age});
    }
    const auto ds = testutil::make_dataset(g, yr, day, covs, schema);
    const MethodComparison table = compare_methods(ds, {0.25, 0.5, 0.75});
    REQUIRE(table.taus.size() == 3);
    REQUIRE(table.coefficient_names.size() == 3);
    for (std::size_t t = 0; t < table.taus.size(); ++t) {
        for (std::size_t k = 0; k < table.coefficient_names.size(); ++k) {
            // triangle inequality between the three pairwise columns
            CHECK(table.abs_grad_vs_ip[t][k] <=
                  table.abs_grad_vs_nm[t][k] + table.abs_nm_vs_ip[t][k] + 1e-12);
            CHECK(table.abs_grad_vs_nm[t][k] >= 0.0);
        }
        // nelder-mead tracks the interior point closely
        CHECK(table.abs_nm_vs_ip[t][1] < 0.5);
    }
}

TEST_CASE("compare_methods on identical fits yields a zero table") {
    // noise-free line: every method lands on the interpolant
    std::vector<std::string> g;
    std::vector<int> yr;
    std::vector<double> day;
    for (int t = -4; t <= 5; ++t) {
        g.push_back("A");
        yr.push_back(t);
        day.push_back(40.0 + 2.0 * t);
    }
    const auto ds = testutil::make_dataset(g, yr, day);
    const MethodComparison table = compare_methods(ds, {0.5});
    for (std::size_t k = 0; k < table.coefficient_names.size(); ++k) {
        CHECK(table.abs_grad_vs_ip[0][k] < 1e-6);
        CHECK(table.abs_nm_vs_ip[0][k] < 1e-6);
    }
}
