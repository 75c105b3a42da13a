#include "qphen/diagnostics.hpp"
#include "qphen/errors.hpp"
#include "qphen/report.hpp"
#include "qphen/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>

using namespace qphen;

namespace {

FitReport sample_report() {
    FitReport r;
    r.method = "qr";
    r.seed = 42;
    r.flags = {{"input", "x.csv"}, {"seed", "42"}};
    r.center_year = 2001;
    r.year_range = {-10.0, 9.0};
    r.tau_grid = {0.25, 0.5, 0.75};
    r.coefficient_names = {"intercept", "year"};
    r.groups = {"A", "B"};
    for (double tau : r.tau_grid) {
        TauFitRecord f;
        f.tau = tau;
        f.ok = true;
        f.fixed = {100.0 + 10.0 * tau, -0.5};
        f.per_group = {{100.0 + 10.0 * tau, -0.5}, {101.0 + 10.0 * tau, -0.45}};
        f.objective = 12.5 * tau;
        r.fits.push_back(std::move(f));
    }
    CiRecord ci;
    ci.intervals = {{{99.0, 101.0}, {-0.6, -0.4}},
                    {{104.0, 106.0}, {-0.6, -0.4}},
                    {{106.0, 108.0}, {-0.6, -0.4}}};
    ci.mean_width = {2.0, 0.2};
    ci.replicates = 200;
    ci.excluded = 3;
    r.ci = std::move(ci);
    return r;
}

} // namespace

TEST_CASE("FitReport JSON round trip is lossless") {
    const FitReport r = sample_report();
    const FitReport back = parse_report(serialize(r));
    CHECK(back == r);

    SUBCASE("awkward doubles survive") {
        FitReport odd = r;
        odd.fits[0].fixed[0] = 0.1 + 0.2; // 0.30000000000000004
        odd.fits[0].objective = 1e-308;
        const FitReport b2 = parse_report(serialize(odd));
        CHECK(b2 == odd);
    }
    SUBCASE("file round trip") {
        write_report_json(r, "./report_test.json");
        const FitReport b3 = read_report_json("./report_test.json");
        CHECK(b3 == r);
        std::remove("./report_test.json");
    }
    SUBCASE("unsupported schema version is rejected") {
        std::string text = serialize(r);
        const auto pos = text.find("\"schema_version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 19, "\"schema_version\": 99");
        CHECK_THROWS_AS(parse_report(text), DataError);
    }
}

TEST_CASE("tau grid parsing") {
    CHECK(TauGrid::parse("0.1,0.5,0.9").values == std::vector<double>{0.1, 0.5, 0.9});
    const TauGrid stepped = TauGrid::parse("0.2:0.8:0.2");
    REQUIRE(stepped.values.size() == 4);
    CHECK(stepped.values[3] == doctest::Approx(0.8));
    CHECK(TauGrid::single_species_default().values.size() == 99);
    const TauGrid multi = TauGrid::multi_species_default();
    CHECK(multi.values.size() == 21);
    CHECK(multi.values.front() == 0.01);
    CHECK(multi.values.back() == 0.99);
    CHECK(multi.values[1] == doctest::Approx(0.05));

    CHECK_THROWS_AS(TauGrid::parse("0.5,0.4"), UsageError);
    CHECK_THROWS_AS(TauGrid::parse("0,0.5"), UsageError);
    CHECK_THROWS_AS(TauGrid::parse("abc"), UsageError);
    CHECK_THROWS_AS(TauGrid::parse(""), UsageError);
}

TEST_CASE("diagnose flags monotonicity violations with magnitudes") {
    FitReport r = sample_report();
    r.ci.reset();
    // manufacture one tiny inversion on the fixed intercept
    r.fits[2].fixed[0] = r.fits[1].fixed[0] - 1e-14;
    r.fits[2].per_group.clear();
    r.fits[1].per_group.clear();
    r.fits[0].per_group.clear();
    r.groups.clear();
    const Diagnostics d = diagnose(r, 1e-10);
    REQUIRE(d.monotonicity.size() == 1);
    CHECK(d.monotonicity[0].magnitude == doctest::Approx(1e-14).epsilon(0.5));
    CHECK(d.monotonicity[0].numerical);
    CHECK(d.monotonicity_above_tol() == 0);

    SUBCASE("strictly increasing intercepts produce no violations") {
        const Diagnostics clean = diagnose(sample_report(), 1e-10);
        CHECK(clean.monotonicity.empty());
    }
}

TEST_CASE("diagnose reports quantile crossings inside the year range") {
    FitReport r = sample_report();
    r.ci.reset();
    r.groups.clear();
    for (auto& f : r.fits) f.per_group.clear();
    // slopes that cross at year = 5 (inside [-10, 9])
    r.fits[0].fixed = {100.0, 1.0};
    r.fits[1].fixed = {102.0, 0.6};
    r.fits[2].fixed = {104.0, 0.2};
    const Diagnostics d = diagnose(r, 1e-10);
    CHECK(d.crossings.size() == 3); // every pair crosses within range
    CHECK(d.crossings[0].crossing_year == doctest::Approx(5.0));
    CHECK_FALSE(d.crossings[0].numerical);

    SUBCASE("identical lines do not cross") {
        FitReport same = sample_report();
        same.ci.reset();
        same.groups.clear();
        for (auto& f : same.fits) {
            f.per_group.clear();
            f.fixed = {100.0, -0.5};
        }
        // equal intercepts: monotone (non-strict) and parallel
        const Diagnostics d2 = diagnose(same, 1e-10);
        CHECK(d2.crossings.empty());
        CHECK(d2.monotonicity.empty());
    }
    SUBCASE("crossing outside the observed range is not reported") {
        FitReport far = sample_report();
        far.ci.reset();
        far.groups.clear();
        for (auto& f : far.fits) f.per_group.clear();
        far.fits[0].fixed = {100.0, 0.01};
        far.fits[1].fixed = {105.0, 0.02};
        far.fits[2].fixed = {110.0, 0.03}; // cross at year -500
        const Diagnostics d3 = diagnose(far, 1e-10);
        CHECK(d3.crossings.empty());
    }
}

TEST_CASE("diagnostics csv lists one row per finding") {
    FitReport r = sample_report();
    r.ci.reset();
    r.groups.clear();
    for (auto& f : r.fits) f.per_group.clear();
    r.fits[2].fixed[0] = r.fits[1].fixed[0] - 0.5;
    const Diagnostics d = diagnose(r, 1e-10);
    const std::string csv = diagnostics_csv(d);
    CHECK(csv.find("monotonicity,fixed") != std::string::npos);
    CHECK(csv.find("violation") != std::string::npos);
}
