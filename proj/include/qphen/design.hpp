#pragma once

#include "qphen/dataset.hpp"
#include "qphen/errors.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace qphen {

// Column selection for regression designs. The intercept is always present;
// year and any subset of declared covariates are optional.
struct DesignSpec {
    bool include_year = true;
    std::optional<std::vector<std::size_t>> covariate_indices; // nullopt = all declared
};

inline std::vector<std::size_t> resolved_covariates(const DesignSpec& spec, std::size_t p_declared) {
    if (!spec.covariate_indices) {
        std::vector<std::size_t> all(p_declared);
        for (std::size_t i = 0; i < p_declared; ++i) all[i] = i;
        return all;
    }
    for (std::size_t i : *spec.covariate_indices)
        if (i >= p_declared) throw DesignError("covariate index out of range: " + std::to_string(i));
    return *spec.covariate_indices;
}

inline std::vector<std::string> design_names(const Schema& schema, const DesignSpec& spec) {
    std::vector<std::string> names{"intercept"};
    if (spec.include_year) names.emplace_back("year");
    for (std::size_t i : resolved_covariates(spec, schema.size()))
        names.push_back(schema.covariates[i].name);
    return names;
}

inline Eigen::MatrixXd design_matrix(const Dataset& ds, const DesignSpec& spec = {}) {
    const auto covs = resolved_covariates(spec, ds.schema().size());
    const auto n = static_cast<Eigen::Index>(ds.size());
    const Eigen::Index p = 1 + (spec.include_year ? 1 : 0) + static_cast<Eigen::Index>(covs.size());
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Observation& o = ds.observations()[static_cast<std::size_t>(j)];
        Eigen::Index c = 0;
        X(j, c++) = 1.0;
        if (spec.include_year) X(j, c++) = static_cast<double>(o.year);
        for (std::size_t k : covs) X(j, c++) = o.covariates[k];
    }
    return X;
}

inline Eigen::VectorXd response_vector(const Dataset& ds) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    Eigen::VectorXd y(n);
    for (Eigen::Index j = 0; j < n; ++j) y(j) = ds.observations()[static_cast<std::size_t>(j)].day;
    return y;
}

// Pivoted-QR rank check; tolerance 1e-10 times the leading pivot. Throws a
// DesignError naming the dependent columns.
inline void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() == X.cols()) return;
    std::string dependent;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k) {
        const auto col = static_cast<std::size_t>(perm(k));
        if (!dependent.empty()) dependent += ", ";
        dependent += col < names.size() ? names[col] : ("col" + std::to_string(col));
    }
    throw DesignError("design matrix is rank deficient; dependent columns: " + dependent);
}

} // namespace qphen
