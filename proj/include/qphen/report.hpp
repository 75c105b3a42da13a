#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qphen {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

// Strictly increasing quantiles in (0,1). Parses either a comma list or a
// start:stop:step range.
struct TauGrid {
    std::vector<double> values;

    static TauGrid parse(const std::string& text);
    static TauGrid single_species_default(); // 0.01, 0.02, ..., 0.99
    static TauGrid multi_species_default();  // 0.01, 0.05, ..., 0.95, 0.99
};

struct TauFitRecord {
    double tau = 0.5;
    bool ok = false;
    std::string error;                                 // empty when ok
    std::vector<double> fixed;                         // aligned with coefficient_names
    std::vector<std::array<double, 2>> per_group;      // aligned with FitReport::groups
    std::optional<double> objective;                   // pinball sum
    std::optional<double> loglik;
    std::optional<double> sigma2;                      // eq residual variance
    std::optional<double> sigma;                       // mixed-model scale
    std::optional<std::array<double, 3>> psi;          // psi11, psi12, psi22

    bool operator==(const TauFitRecord&) const = default;
};

struct CiRecord {
    // [tau][coefficient] -> lower, upper
    std::vector<std::vector<std::array<double, 2>>> intervals;
    std::vector<double> mean_width; // per coefficient, averaged over taus
    std::size_t replicates = 0;
    std::size_t excluded = 0;

    bool operator==(const CiRecord&) const = default;
};

struct FitReport {
    int schema_version = kReportSchemaVersion;
    std::string tool_version = kToolVersion;
    std::string method;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> flags; // full flag echo
    int center_year = 0;
    std::array<double, 2> year_range{0.0, 0.0}; // centered, observed span
    std::vector<double> tau_grid;
    std::vector<std::string> coefficient_names;
    std::vector<std::string> groups;
    std::vector<TauFitRecord> fits;
    std::optional<CiRecord> ci;

    bool operator==(const FitReport&) const = default;
};

std::string serialize(const FitReport& report);
FitReport parse_report(const std::string& json_text);

void write_report_json(const FitReport& report, const std::string& path);  // atomic
FitReport read_report_json(const std::string& path);

// Flat plot-ready table: one row per coefficient x tau x group scope.
void write_report_csv(const FitReport& report, const std::string& path);

} // namespace qphen
