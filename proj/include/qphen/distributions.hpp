#pragma once

#include <cstdint>
#include <vector>

namespace qphen {

// Asymmetric Laplace AL(mu, sigma, tau): mu is exactly the tau-th quantile.
struct ALParams {
    double mu = 0.0;
    double sigma = 1.0;
    double tau = 0.5;
};

void validate(const ALParams& p);

// Check loss rho_tau(v) = v * (tau - 1(v < 0)). Nonnegative, zero at zero.
inline double pinball(double v, double tau) {
    return v >= 0.0 ? v * tau : v * (tau - 1.0);
}

double al_logpdf(double y, const ALParams& p);
double al_pdf(double y, const ALParams& p);
double al_cdf(double y, const ALParams& p);

// Inverse CDF; probability must lie in (0,1).
double al_quantile(double prob, const ALParams& p);

// Mean of AL(mu, sigma, tau): mu + sigma * (1 - 2 tau) / (tau (1 - tau)).
double al_mean(const ALParams& p);

// i.i.d. draws by inverse-CDF transform; identical output for a given seed.
std::vector<double> al_sample(const ALParams& p, std::uint64_t rng_seed, std::size_t n);

} // namespace qphen
