#include "test_util.hpp"

#include <array>
#include <stdexcept>

namespace testutil {

double integrate(const std::function<double(double)>& f, double lo, double hi, int panels) {
    // 10-point Gauss-Legendre nodes/weights on [-1, 1]
    static const std::array<double, 5> xs = {0.14887433898163121, 0.43339539412924719,
                                             0.67940956829902441, 0.86506336668898451,
                                             0.97390652851717172};
    static const std::array<double, 5> ws = {0.29552422471475287, 0.26926671930999635,
                                             0.21908636251598204, 0.14945134915058059,
                                             0.066671344308688138};
    double total = 0.0;
    const double h = (hi - lo) / panels;
    for (int k = 0; k < panels; ++k) {
        const double a = lo + k * h;
        const double mid = a + 0.5 * h;
        const double half = 0.5 * h;
        double acc = 0.0;
        for (int i = 0; i < 5; ++i)
            acc += ws[i] * (f(mid - half * xs[i]) + f(mid + half * xs[i]));
        total += acc * half;
    }
    return total;
}

qphen::Dataset make_dataset(const std::vector<std::string>& groups, const std::vector<int>& years,
                            const std::vector<double>& days,
                            const std::vector<std::vector<double>>& covariates,
                            const qphen::Schema& schema) {
    if (groups.size() != years.size() || groups.size() != days.size())
        throw std::invalid_argument("make_dataset: length mismatch");
    std::vector<qphen::Observation> obs(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        obs[i].group = groups[i];
        obs[i].year = years[i];
        obs[i].day = days[i];
        if (!covariates.empty()) obs[i].covariates = covariates[i];
    }
    return qphen::Dataset(schema, std::move(obs), 0);
}

RandomInstance random_instance(qphen::Rng& rng, Eigen::Index n, Eigen::Index extra_cols) {
    RandomInstance inst;
    inst.X.resize(n, 1 + extra_cols);
    inst.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        inst.X(i, 0) = 1.0;
        for (Eigen::Index j = 1; j <= extra_cols; ++j) inst.X(i, j) = rng.normal();
        inst.y(i) = 2.0 + rng.normal() * 3.0;
    }
    for (Eigen::Index j = 1; j <= extra_cols; ++j) inst.y += inst.X.col(j) * (j == 1 ? -1.5 : 0.7);
    return inst;
}

} // namespace testutil
