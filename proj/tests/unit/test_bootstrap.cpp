#include "qphen/bootstrap.hpp"
#include "qphen/errors.hpp"
#include "qphen/lqm.hpp"
#include "qphen/qr.hpp"
#include "qphen/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace qphen;

namespace {

Dataset linear_dataset(std::uint64_t seed, std::size_t n, double slope) {
    qphen::Rng rng(seed);
    std::vector<Observation> obs(n);
    for (auto& o : obs) {
        o.group = "A";
        o.year = static_cast<int>(rng.below(21)) - 10;
        o.day = 100.0 + slope * o.year + rng.normal() * 4.0;
    }
    return Dataset(Schema{}, std::move(obs), 0);
}

} // namespace

TEST_CASE("make_plan determinism and shape") {
    const BootstrapPlan p1 = make_plan(37, 100, 9);
    const BootstrapPlan p2 = make_plan(37, 100, 9);
    CHECK(p1.indices == p2.indices);
    CHECK(p1.indices.size() == 100);
    for (const auto& list : p1.indices) {
        CHECK(list.size() == 37);
        for (auto i : list) CHECK(i < 37);
    }
    const BootstrapPlan p3 = make_plan(37, 100, 10);
    CHECK(p1.indices != p3.indices);

    SUBCASE("n = 1 indices are all zero") {
        const BootstrapPlan p = make_plan(1, 5, 3);
        for (const auto& list : p.indices)
            for (auto i : list) CHECK(i == 0);
    }
    SUBCASE("default-sized plan per the protocol") {
        BootstrapPlan p;
        CHECK(p.replicates == 1000);
        CHECK(p.lower == 0.025);
        CHECK(p.upper == 0.975);
    }
}

TEST_CASE("ci percentile intervals") {
    SUBCASE("constant replicates collapse to zero width") {
        ReplicateEstimates est(1);
        for (int b = 0; b < 50; ++b) est[0].push_back(Eigen::VectorXd::Constant(2, 3.25));
        const CiTable t = ci(est);
        CHECK(t.intervals[0][0].lower == 3.25);
        CHECK(t.intervals[0][0].upper == 3.25);
        CHECK(t.mean_width[0] == 0.0);
    }
    SUBCASE("lower bound never exceeds the upper") {
        qphen::Rng rng(4);
        ReplicateEstimates est(3);
        for (int t = 0; t < 3; ++t)
            for (int b = 0; b < 40; ++b) {
                Eigen::VectorXd v(2);
                v << rng.normal(), rng.normal() * 2.0;
                est[static_cast<std::size_t>(t)].push_back(v);
            }
        const CiTable table = ci(est);
        for (const auto& per_tau : table.intervals)
            for (const auto& iv : per_tau) CHECK(iv.lower <= iv.upper);
    }
    SUBCASE("failed replicates are excluded and counted") {
        ReplicateEstimates est(1);
        for (int b = 0; b < 10; ++b) {
            if (b % 3 == 0) est[0].emplace_back(); // failed
            else est[0].push_back(Eigen::VectorXd::Constant(1, static_cast<double>(b)));
        }
        const CiTable t = ci(est);
        CHECK(t.excluded == 4);
        CHECK(t.included == 6);
    }
    SUBCASE("all replicates failed is an error") {
        ReplicateEstimates est(1);
        est[0].assign(5, Eigen::VectorXd());
        CHECK_THROWS_AS(ci(est), DataError);
    }
}

TEST_CASE("percentile intervals cover a normal mean at the nominal rate") {
    // synthetic replicate estimates: bootstrap-of-the-mean on normal samples
    qphen::Rng rng(314);
    const int metas = 200, n = 40, B = 120;
    int covered = 0;
    for (int m = 0; m < metas; ++m) {
        std::vector<double> sample(n);
        for (auto& v : sample) v = 5.0 + 2.0 * rng.normal();
        ReplicateEstimates est(1);
        for (int b = 0; b < B; ++b) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += sample[rng.below(n)];
            est[0].push_back(Eigen::VectorXd::Constant(1, acc / n));
        }
        const CiTable t = ci(est);
        if (t.intervals[0][0].lower <= 5.0 && 5.0 <= t.intervals[0][0].upper) ++covered;
    }
    const double rate = static_cast<double>(covered) / metas;
    CHECK(rate >= 0.91);
    CHECK(rate <= 0.99);
}

TEST_CASE("run_shared determinism and shared resamples") {
    const Dataset ds = linear_dataset(77, 60, -0.4);
    const BootstrapPlan plan = make_plan(ds.size(), 20, 123);
    const std::vector<double> taus{0.25, 0.5};

    const SharedRunResult a = run_shared(ds, {BootMethod::qr, BootMethod::lqm}, taus, plan, {}, true, 1);
    const SharedRunResult b = run_shared(ds, {BootMethod::qr, BootMethod::lqm}, taus, plan, {}, true, 4);

    // deterministic across thread counts
    for (BootMethod m : {BootMethod::qr, BootMethod::lqm})
        for (std::size_t t = 0; t < taus.size(); ++t)
            for (std::size_t r = 0; r < plan.replicates; ++r)
                CHECK(a.per_method.at(m).estimates[t][r] == b.per_method.at(m).estimates[t][r]);

    // per-replicate objectives agree across qr and lqm on the shared resample
    for (std::size_t r = 0; r < plan.replicates; ++r) {
        const Dataset res = resample(ds, plan.indices[r]);
        const Eigen::MatrixXd X = design_matrix(res);
        const Eigen::VectorXd y = response_vector(res);
        for (std::size_t t = 0; t < taus.size(); ++t) {
            const auto& bq = a.per_method.at(BootMethod::qr).estimates[t][r];
            const auto& bl = a.per_method.at(BootMethod::lqm).estimates[t][r];
            REQUIRE(bq.size() > 0);
            REQUIRE(bl.size() > 0);
            const double oq = pinball_objective(X, y, bq, taus[t]);
            const double ol = pinball_objective(X, y, bl, taus[t]);
            CHECK(std::abs(oq - ol) <= 1e-6 * (1.0 + std::abs(oq)));
        }
    }
}

TEST_CASE("run_shared records per-method failures and continues") {
    // 3 distinct years only; eq on a resample can drop below rank while qr
    // keeps working
    qphen::Rng rng(5);
    std::vector<Observation> obs;
    for (int t = 0; t < 3; ++t)
        for (int j = 0; j < 3; ++j) {
            Observation o;
            o.group = "A";
            o.year = t;
            o.day = 50.0 + t + rng.normal();
            obs.push_back(std::move(o));
        }
    const Dataset ds(Schema{}, obs, 0);
    const BootstrapPlan plan = make_plan(ds.size(), 200, 11);
    const SharedRunResult res =
        run_shared(ds, {BootMethod::eq, BootMethod::qr}, {0.5}, plan, {}, true, 1);
    const auto& eq_fails = res.per_method.at(BootMethod::eq).failures_per_tau[0];
    const auto& qr_fails = res.per_method.at(BootMethod::qr).failures_per_tau[0];
    CHECK(eq_fails > 0);      // some resamples lose a year entirely
    CHECK(qr_fails < eq_fails); // qr only needs n > p
    CHECK(eq_fails < plan.replicates);
}

TEST_CASE("single method reduces to a plain bootstrap") {
    const Dataset ds = linear_dataset(3, 40, 0.0);
    const BootstrapPlan plan = make_plan(ds.size(), 30, 2);
    const SharedRunResult res = run_shared(ds, {BootMethod::qr}, {0.5}, plan);
    const CiTable table = ci(res.per_method.at(BootMethod::qr).estimates);
    REQUIRE(table.intervals.size() == 1);
    CHECK(table.intervals[0].size() == 2);
    CHECK(table.intervals[0][1].lower <= table.intervals[0][1].upper);
}
