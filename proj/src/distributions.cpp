#include "qphen/distributions.hpp"

#include "qphen/errors.hpp"
#include "qphen/rng.hpp"

#include <cmath>

namespace qphen {

void validate(const ALParams& p) {
    if (!(p.sigma > 0.0)) throw DataError("ALParams: sigma must be > 0");
    if (!(p.tau > 0.0 && p.tau < 1.0)) throw DataError("ALParams: tau must lie in (0,1)");
    if (!std::isfinite(p.mu)) throw DataError("ALParams: mu must be finite");
}

double al_logpdf(double y, const ALParams& p) {
    return std::log(p.tau * (1.0 - p.tau) / p.sigma) - pinball(y - p.mu, p.tau) / p.sigma;
}

double al_pdf(double y, const ALParams& p) { return std::exp(al_logpdf(y, p)); }

double al_cdf(double y, const ALParams& p) {
    const double d = y - p.mu;
    if (d <= 0.0) return p.tau * std::exp((1.0 - p.tau) * d / p.sigma);
    return 1.0 - (1.0 - p.tau) * std::exp(-p.tau * d / p.sigma);
}

double al_quantile(double prob, const ALParams& p) {
    if (!(prob > 0.0 && prob < 1.0)) throw DataError("al_quantile: probability must lie in (0,1)");
    if (prob <= p.tau) return p.mu + p.sigma / (1.0 - p.tau) * std::log(prob / p.tau);
    return p.mu - p.sigma / p.tau * std::log((1.0 - prob) / (1.0 - p.tau));
}

double al_mean(const ALParams& p) {
    return p.mu + p.sigma * (1.0 - 2.0 * p.tau) / (p.tau * (1.0 - p.tau));
}

std::vector<double> al_sample(const ALParams& p, std::uint64_t rng_seed, std::size_t n) {
    validate(p);
    if (n < 1) throw DataError("al_sample: n must be >= 1");
    Rng rng(rng_seed);
    std::vector<double> out(n);
    for (auto& v : out) v = al_quantile(rng.uniform01(), p);
    return out;
}

} // namespace qphen
