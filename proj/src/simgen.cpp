#include "qphen/simgen.hpp"

#include "qphen/distributions.hpp"
#include "qphen/errors.hpp"
#include "qphen/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace qphen {

void validate(const SimSpec& spec) {
    if (spec.groups < 1 || spec.years < 1) throw DataError("SimSpec: need groups >= 1, years >= 1");
    if (spec.laws.size() != spec.groups)
        throw DataError("SimSpec: expected " + std::to_string(spec.groups) + " group laws, got " +
                        std::to_string(spec.laws.size()));
    for (const auto& law : spec.laws) {
        if (!(law.nb_mean > 0.0)) throw DataError("SimSpec: nb_mean must be > 0");
        if (!(law.nb_dispersion > 0.0)) throw DataError("SimSpec: nb_dispersion must be > 0");
        if (!(law.scale > 0.0)) throw DataError("SimSpec: scale must be > 0");
    }
    if (spec.family == ArrivalFamily::asymmetric_laplace && !(spec.tau0 > 0.0 && spec.tau0 < 1.0))
        throw DataError("SimSpec: tau0 must lie in (0,1)");
    if (spec.family == ArrivalFamily::gamma_shifted && !(spec.gamma_shape > 0.0))
        throw DataError("SimSpec: gamma_shape must be > 0");
}

std::string group_name(std::size_t index) {
    std::ostringstream os;
    os << 'G';
    if (index + 1 < 10) os << '0';
    os << (index + 1);
    return os.str();
}

namespace {

int derived_center(const SimSpec& spec) {
    if (spec.center_year != 0) return spec.center_year;
    // type-1 median of the simulated year range
    return spec.start_year + static_cast<int>((spec.years + 1) / 2 - 1);
}

double standardized_draw(Rng& rng, const SimSpec& spec) {
    switch (spec.family) {
        case ArrivalFamily::normal:
            return rng.normal();
        case ArrivalFamily::asymmetric_laplace:
            return al_quantile(rng.uniform01(), ALParams{0.0, 1.0, spec.tau0});
        case ArrivalFamily::gamma_shifted: {
            const double g = rng.gamma(spec.gamma_shape, 1.0);
            return (g - spec.gamma_shape) / std::sqrt(spec.gamma_shape);
        }
    }
    throw DataError("simulate: unknown family");
}

std::uint64_t partition_seed(std::uint64_t seed, std::size_t group) {
    return seed ^ (0x9e3779b97f4a7c15ULL * (group + 1));
}

} // namespace

Dataset simulate(const SimSpec& spec) {
    validate(spec);
    const int center = derived_center(spec);
    std::vector<Observation> obs;
    for (std::size_t i = 0; i < spec.groups; ++i) {
        Rng rng(partition_seed(spec.seed, i));
        const GroupLaw& law = spec.laws[i];
        for (std::size_t t = 0; t < spec.years; ++t) {
            const int year = spec.start_year + static_cast<int>(t);
            // negative binomial count: gamma-poisson mixture
            const double lambda = rng.gamma(law.nb_dispersion, law.nb_mean / law.nb_dispersion);
            const std::uint64_t count = rng.poisson(lambda);
            const double loc = law.location + law.slope * (year - center);
            for (std::uint64_t b = 0; b < count; ++b) {
                Observation o;
                o.group = group_name(i);
                o.year = year;
                o.day = loc + law.scale * standardized_draw(rng, spec);
                obs.push_back(std::move(o));
            }
        }
    }
    return Dataset(Schema{}, std::move(obs), center);
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw DataError("normal_quantile: prob must lie in (0,1)");
    // Acklam's rational approximation with one Halley refinement
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (prob < p_low) {
        const double q = std::sqrt(-2.0 * std::log(prob));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (prob <= 1.0 - p_low) {
        const double q = prob - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - prob));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // one step of Halley's method against the exact CDF
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - prob;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

std::pair<double, double> true_quantile_line(const SimSpec& spec, std::size_t group_index,
                                             double tau) {
    validate(spec);
    if (group_index >= spec.groups) throw DataError("true_quantile_line: group index out of range");
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("true_quantile_line: tau must lie in (0,1)");
    const GroupLaw& law = spec.laws[group_index];
    double q_std;
    switch (spec.family) {
        case ArrivalFamily::normal:
            q_std = normal_quantile(tau);
            break;
        case ArrivalFamily::asymmetric_laplace:
            q_std = al_quantile(tau, ALParams{0.0, 1.0, spec.tau0});
            break;
        case ArrivalFamily::gamma_shifted:
            throw UsageError("true_quantile_line: the gamma-shifted family has no closed form");
        default:
            throw DataError("true_quantile_line: unknown family");
    }
    return {law.location + law.scale * q_std, law.slope};
}

namespace {

std::vector<double> parse_list(const std::string& value, std::size_t groups, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) continue;
        const std::string tok = item.substr(b, e - b + 1);
        double v;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size())
            throw DataError("simspec: unparseable value \"" + tok + "\" for key " + key);
        out.push_back(v);
    }
    if (out.size() == 1) out.assign(groups, out[0]); // broadcast
    if (out.size() != groups)
        throw DataError("simspec: key " + key + " needs 1 or " + std::to_string(groups) +
                        " values, got " + std::to_string(out.size()));
    return out;
}

} // namespace

SimSpec read_simspec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open simspec: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            if (line.find_first_not_of(" \t\r\n") != std::string::npos)
                throw DataError("simspec line " + std::to_string(line_no) + ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r\n");
            const auto e = s.find_last_not_of(" \t\r\n");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    SimSpec spec;
    auto get = [&](const char* key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto as_long = [&](const char* key, long fallback) {
        const std::string* v = get(key);
        if (!v) return fallback;
        long out;
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc{} || p != v->data() + v->size())
            throw DataError(std::string("simspec: unparseable integer for ") + key);
        return out;
    };
    spec.groups = static_cast<std::size_t>(as_long("groups", 1));
    spec.years = static_cast<std::size_t>(as_long("years", 10));
    spec.start_year = static_cast<int>(as_long("start_year", 1991));
    spec.center_year = static_cast<int>(as_long("center_year", 0));
    spec.seed = static_cast<std::uint64_t>(as_long("seed", 1));
    if (const std::string* fam = get("family")) {
        if (*fam == "normal") spec.family = ArrivalFamily::normal;
        else if (*fam == "al" || *fam == "asymmetric_laplace")
            spec.family = ArrivalFamily::asymmetric_laplace;
        else if (*fam == "gamma" || *fam == "gamma_shifted")
            spec.family = ArrivalFamily::gamma_shifted;
        else throw DataError("simspec: unknown family \"" + *fam + "\"");
    }
    if (const std::string* v = get("tau0")) spec.tau0 = std::stod(*v);
    if (const std::string* v = get("gamma_shape")) spec.gamma_shape = std::stod(*v);

    spec.laws.assign(spec.groups, GroupLaw{});
    struct Field {
        const char* key;
        double GroupLaw::* member;
    };
    const Field fields[] = {{"location", &GroupLaw::location},
                            {"slope", &GroupLaw::slope},
                            {"scale", &GroupLaw::scale},
                            {"nb_mean", &GroupLaw::nb_mean},
                            {"nb_dispersion", &GroupLaw::nb_dispersion}};
    for (const auto& f : fields) {
        if (const std::string* v = get(f.key)) {
            const auto values = parse_list(*v, spec.groups, f.key);
            for (std::size_t i = 0; i < spec.groups; ++i) spec.laws[i].*f.member = values[i];
        }
    }
    validate(spec);
    return spec;
}

} // namespace qphen
