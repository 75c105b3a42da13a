#pragma once

#include <span>
#include <string>
#include <vector>

namespace qphen {

enum class CovariateKind { binary, real };

struct CovariateDecl {
    std::string name;
    CovariateKind kind = CovariateKind::real;

    bool operator==(const CovariateDecl&) const = default;
};

// Declared covariate columns beyond the required group/year/day triple.
struct Schema {
    std::vector<CovariateDecl> covariates;

    std::size_t size() const { return covariates.size(); }
    bool operator==(const Schema&) const = default;
};

struct Observation {
    std::string group;
    int year = 0; // centered once the Dataset is built
    double day = 0.0;
    std::vector<double> covariates;
    double count_weight = 1.0;
};

// Immutable after construction: observations are stored contiguously by
// group and chronologically within group, with years centered.
class Dataset {
public:
    Dataset() = default;
    // Sorts stably by (group, year) and shifts years by center_year; the
    // default center is the type-1 median year of the input.
    Dataset(Schema schema, std::vector<Observation> raw_observations);
    Dataset(Schema schema, std::vector<Observation> raw_observations, int center_year);

    const Schema& schema() const { return schema_; }
    const std::vector<Observation>& observations() const { return obs_; }
    int center_year() const { return center_year_; }
    std::size_t size() const { return obs_.size(); }
    bool empty() const { return obs_.empty(); }

    // Distinct group ids in stored (sorted) order.
    std::vector<std::string> groups() const;
    std::size_t group_count() const;

    // begin/end observation index of each group, in stored order.
    std::vector<std::pair<std::size_t, std::size_t>> group_ranges() const;

private:
    void finalize(bool recenter_given, int given_center);

    Schema schema_;
    std::vector<Observation> obs_;
    int center_year_ = 0;
};

struct Cell {
    std::string group;
    int year = 0; // centered
    std::vector<double> covariates;
    std::vector<double> sorted_days;     // nondecreasing
    std::vector<double> member_weights;  // aligned with sorted_days
    double weight = 0.0;                 // sum of member count_weights

    std::size_t member_count() const { return sorted_days.size(); }
};

// One cell per nonempty (group, year, covariate combination).
class CellTable {
public:
    CellTable() = default;
    explicit CellTable(std::vector<Cell> cells, std::vector<std::string> covariate_names = {})
        : cells_(std::move(cells)), covariate_names_(std::move(covariate_names)) {}

    const std::vector<Cell>& cells() const { return cells_; }
    std::size_t size() const { return cells_.size(); }
    const std::vector<std::string>& covariate_names() const { return covariate_names_; }

    double total_weight() const;
    std::vector<std::string> groups() const;

private:
    std::vector<Cell> cells_;
    std::vector<std::string> covariate_names_;
};

// Type-1 empirical quantile: inf{ y in list : Fhat(y) >= tau }, i.e. the
// ceil(n*tau)-th order statistic. The list must be nondecreasing and nonempty.
double empirical_quantile(std::span<const double> sorted_values, double tau);

// Same definition against the weighted empirical CDF; reduces to the above
// when all weights are 1.
double empirical_quantile_weighted(std::span<const double> sorted_values,
                                   std::span<const double> weights, double tau);

double cell_quantile(const Cell& cell, double tau);

Dataset load_csv(const std::string& path, const Schema& schema);
Dataset load_csv(const std::string& path, const Schema& schema, int center_year);

// Drops every group whose total observation count is below min_n.
Dataset filter_min_count(const Dataset& ds, std::size_t min_n);

CellTable build_cells(const Dataset& ds);

void write_csv(const Dataset& ds, const std::string& path);

} // namespace qphen
