#include "qphen/ranef.hpp"

#include "qphen/errors.hpp"

#include <algorithm>
#include <cmath>

namespace qphen {

namespace {

thread_local std::size_t g_peak_elems = 0;

void note_alloc(std::size_t elems) { g_peak_elems = std::max(g_peak_elems, elems); }

} // namespace

std::size_t last_blup_peak_elems() { return g_peak_elems; }

BlockCovariance reduced_inverse(const Eigen::Matrix2d& psi, double sigma_eps,
                                const Eigen::VectorXd& year_counts,
                                const Eigen::VectorXd& year_values) {
    if (!(sigma_eps > 0.0)) throw DataError("reduced_inverse: sigma_eps must be > 0");
    if (year_counts.size() != year_values.size())
        throw DataError("reduced_inverse: counts/values length mismatch");
    if (year_counts.size() == 0) throw DataError("reduced_inverse: no years");
    for (Eigen::Index t = 0; t < year_counts.size(); ++t)
        if (year_counts(t) < 1.0) throw DataError("reduced_inverse: empty year stored");
    if (std::abs(psi(0, 1) - psi(1, 0)) > 1e-12 * (1.0 + std::abs(psi(0, 1))))
        throw DataError("reduced_inverse: psi must be symmetric");

    const Eigen::Index T = year_values.size();
    BlockCovariance out;
    out.n_check = year_counts;
    out.year_values = year_values;
    out.sigma_eps = sigma_eps;
    out.delta_eps = 1.0 / sigma_eps;

    out.b_check.resize(T, T);
    for (Eigen::Index s = 0; s < T; ++s)
        for (Eigen::Index t = 0; t < T; ++t)
            out.b_check(s, t) = psi(0, 0) + psi(0, 1) * (year_values(s) + year_values(t)) +
                                psi(1, 1) * year_values(s) * year_values(t);

    // C_check = -delta (B N + sigma I)^{-1} B; (B N + sigma I) is nonsingular
    // for sigma > 0 and PSD psi, guarded anyway
    Eigen::MatrixXd m = out.b_check * year_counts.asDiagonal();
    m.diagonal().array() += sigma_eps;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    const double rcond_probe = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(rcond_probe > 0.0) || !lu.matrixLU().allFinite())
        throw DataError("reduced_inverse: (B N + sigma I) is numerically singular");
    out.c_check = -out.delta_eps * lu.solve(out.b_check);
    return out;
}

double al_mean_correction(double sigma_eps, double tau) {
    if (!(sigma_eps > 0.0) || !(tau > 0.0 && tau < 1.0))
        throw DataError("al_mean_correction: invalid parameters");
    return sigma_eps * (1.0 - 2.0 * tau) / (tau * (1.0 - tau));
}

namespace {

struct GroupSlice {
    std::string group;
    std::size_t lo, hi;                 // observation range
    Eigen::VectorXd year_values;        // distinct, ascending
    Eigen::VectorXd year_counts;
    std::vector<Eigen::Index> year_of;  // per observation, index into year_values
};

std::vector<GroupSlice> slice_groups(const Dataset& ds) {
    std::vector<GroupSlice> out;
    std::vector<std::string> seen;
    for (const auto& [lo, hi] : ds.group_ranges()) {
        GroupSlice s;
        s.group = ds.observations()[lo].group;
        if (std::find(seen.begin(), seen.end(), s.group) != seen.end())
            throw DataError("blup: observations of group \"" + s.group +
                            "\" are not contiguous; dataset ordering is violated");
        seen.push_back(s.group);
        s.lo = lo;
        s.hi = hi;
        std::vector<double> years;
        std::vector<double> counts;
        int prev = ds.observations()[lo].year;
        years.push_back(prev);
        counts.push_back(0.0);
        for (std::size_t j = lo; j < hi; ++j) {
            const int yr = ds.observations()[j].year;
            if (yr < prev)
                throw DataError("blup: group \"" + s.group +
                                "\" is not chronologically ordered; dataset ordering is violated");
            if (yr != prev) {
                years.push_back(yr);
                counts.push_back(0.0);
                prev = yr;
            }
            counts.back() += 1.0;
            s.year_of.push_back(static_cast<Eigen::Index>(years.size()) - 1);
        }
        s.year_values = Eigen::Map<Eigen::VectorXd>(years.data(), static_cast<Eigen::Index>(years.size()));
        s.year_counts =
            Eigen::Map<Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

RanefMatrix blup(const MixedParams& fit, const Dataset& ds, BlupMode mode,
                 const std::vector<std::string>& expected_groups, const DesignSpec& design) {
    validate(fit);
    if (ds.empty()) throw DataError("blup: empty dataset");
    g_peak_elems = 0;

    const auto slices = slice_groups(ds);
    for (const auto& g : expected_groups) {
        const bool present = std::any_of(slices.begin(), slices.end(),
                                         [&](const GroupSlice& s) { return s.group == g; });
        if (!present)
            throw DataError("blup: group \"" + g + "\" present in the fit but absent in the data");
    }

    const Eigen::MatrixXd X = design_matrix(ds, design);
    if (X.cols() != fit.beta.size())
        throw DataError("blup: fixed-effect length does not match the design");
    const Eigen::VectorXd y = response_vector(ds);
    const double eps_mean = al_mean_correction(fit.sigma, fit.tau);
    const Eigen::VectorXd resid = y - X * fit.beta - Eigen::VectorXd::Constant(y.size(), eps_mean);
    note_alloc(static_cast<std::size_t>(resid.size()));

    RanefMatrix out;
    out.method = RanefMethod::blup;
    out.u.resize(static_cast<Eigen::Index>(slices.size()), 2);

    for (std::size_t gi = 0; gi < slices.size(); ++gi) {
        const GroupSlice& s = slices[gi];
        out.groups.push_back(s.group);
        const auto n_i = static_cast<Eigen::Index>(s.hi - s.lo);
        const Eigen::Index T = s.year_values.size();
        const Eigen::VectorXd r = resid.segment(static_cast<Eigen::Index>(s.lo), n_i);

        Eigen::Vector2d u;
        if (mode == BlupMode::dense) {
            if (n_i > 2000)
                throw DesignError("blup: dense mode is guarded to groups of at most 2000 rows");
            Eigen::MatrixXd Z(n_i, 2);
            for (Eigen::Index j = 0; j < n_i; ++j) {
                Z(j, 0) = 1.0;
                Z(j, 1) = s.year_values(s.year_of[static_cast<std::size_t>(j)]);
            }
            Eigen::MatrixXd sigma = Z * fit.psi * Z.transpose();
            sigma.diagonal().array() += fit.sigma;
            note_alloc(static_cast<std::size_t>(n_i) * static_cast<std::size_t>(n_i));
            u = fit.psi * Z.transpose() * sigma.ldlt().solve(r);
        } else {
            const BlockCovariance bc =
                reduced_inverse(fit.psi, fit.sigma, s.year_counts, s.year_values);
            note_alloc(static_cast<std::size_t>(T) * static_cast<std::size_t>(T));
            // per-year residual sums
            Eigen::VectorXd m = Eigen::VectorXd::Zero(T);
            for (Eigen::Index j = 0; j < n_i; ++j)
                m(s.year_of[static_cast<std::size_t>(j)]) += r(j);
            note_alloc(static_cast<std::size_t>(T));

            if (mode == BlupMode::block) {
                // Z' Sigma^{-1} r = delta Z'r + sum_t n_t (C m)_t (1, t)'
                const Eigen::VectorXd cm = bc.c_check * m;
                Eigen::Vector2d acc = Eigen::Vector2d::Zero();
                for (Eigen::Index t = 0; t < T; ++t) {
                    acc(0) += bc.n_check(t) * cm(t);
                    acc(1) += bc.n_check(t) * cm(t) * s.year_values(t);
                }
                Eigen::Vector2d ztr = Eigen::Vector2d::Zero();
                for (Eigen::Index j = 0; j < n_i; ++j) {
                    ztr(0) += r(j);
                    ztr(1) += r(j) * s.year_values(s.year_of[static_cast<std::size_t>(j)]);
                }
                u = fit.psi * (bc.delta_eps * ztr + acc);
            } else {
                // sequential: assemble W = [W_1 | ... | W_T] (2 x n_i) column
                // stripes of psi Z' Sigma^{-1}, then multiply the residual
                Eigen::MatrixXd W(2, n_i);
                note_alloc(2 * static_cast<std::size_t>(n_i));
                // per column (t, j): psi (delta (1,t)' + sum_s c_st n_s (1,s)')
                Eigen::Vector2d weighted;
                for (Eigen::Index t = 0; t < T; ++t) {
                    weighted.setZero();
                    for (Eigen::Index sy = 0; sy < T; ++sy) {
                        const double cn = bc.c_check(sy, t) * bc.n_check(sy);
                        weighted(0) += cn;
                        weighted(1) += cn * s.year_values(sy);
                    }
                    Eigen::Vector2d col =
                        fit.psi * (bc.delta_eps * Eigen::Vector2d(1.0, s.year_values(t)) + weighted);
                    for (Eigen::Index j = 0; j < n_i; ++j)
                        if (s.year_of[static_cast<std::size_t>(j)] == t) W.col(j) = col;
                }
                u = W * r;
            }
        }
        out.u.row(static_cast<Eigen::Index>(gi)) = u.transpose();
    }
    return out;
}

} // namespace qphen
