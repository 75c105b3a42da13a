#pragma once

#include "qphen/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qphen {

enum class ArrivalFamily { normal, asymmetric_laplace, gamma_shifted };

// Per-group generative law: arrival day = location + slope * (year - center)
// + scale * standardized family draw; yearly counts are negative binomial
// with variance mean + mean^2 / dispersion.
struct GroupLaw {
    double location = 120.0;
    double slope = 0.0;
    double scale = 5.0;
    double nb_mean = 50.0;
    double nb_dispersion = 5.0;
};

struct SimSpec {
    std::size_t groups = 1;
    std::size_t years = 10;
    int start_year = 1991;
    int center_year = 0;     // 0 = derive the median year
    ArrivalFamily family = ArrivalFamily::normal;
    double tau0 = 0.5;       // asymmetry of the AL family
    double gamma_shape = 4.0;
    std::uint64_t seed = 1;
    std::vector<GroupLaw> laws; // one per group
};

void validate(const SimSpec& spec);

// Deterministic under spec.seed, with per-group partitioned streams.
Dataset simulate(const SimSpec& spec);

// Exact quantile line (intercept at centered year 0, slope) of group's
// tau-quantile; location-shift families have tau-constant slope. The
// gamma-shifted family has no closed form and is refused.
std::pair<double, double> true_quantile_line(const SimSpec& spec, std::size_t group_index,
                                             double tau);

// Inverse standard normal CDF (rational approximation, |error| < 1.2e-9).
double normal_quantile(double prob);

// Plain-text key = value config; values may be comma lists broadcast over
// groups.
SimSpec read_simspec(const std::string& path);

std::string group_name(std::size_t index);

} // namespace qphen
