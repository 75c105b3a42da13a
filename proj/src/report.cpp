#include "qphen/report.hpp"

#include "qphen/errors.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace qphen {

using nlohmann::json;

TauGrid TauGrid::parse(const std::string& text) {
    TauGrid grid;
    if (text.find(':') != std::string::npos) {
        double start, stop, step;
        if (std::sscanf(text.c_str(), "%lf:%lf:%lf", &start, &stop, &step) != 3 || step <= 0.0)
            throw UsageError("tau grid: expected start:stop:step, got \"" + text + "\"");
        for (double t = start; t <= stop + 1e-12; t += step) grid.values.push_back(t);
    } else {
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t next = text.find(',', pos);
            if (next == std::string::npos) next = text.size();
            const std::string tok = text.substr(pos, next - pos);
            try {
                grid.values.push_back(std::stod(tok));
            } catch (const std::exception&) {
                throw UsageError("tau grid: unparseable value \"" + tok + "\"");
            }
            pos = next + 1;
        }
    }
    if (grid.values.empty()) throw UsageError("tau grid: empty");
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        if (!(grid.values[i] > 0.0 && grid.values[i] < 1.0))
            throw UsageError("tau grid: values must lie strictly in (0,1)");
        if (i > 0 && grid.values[i] <= grid.values[i - 1])
            throw UsageError("tau grid: values must be strictly increasing");
    }
    return grid;
}

TauGrid TauGrid::single_species_default() {
    TauGrid g;
    for (int k = 1; k <= 99; ++k) g.values.push_back(k / 100.0);
    return g;
}

TauGrid TauGrid::multi_species_default() {
    TauGrid g;
    g.values.push_back(0.01);
    for (int k = 1; k <= 19; ++k) g.values.push_back(k * 0.05);
    g.values.push_back(0.99);
    return g;
}

namespace {

json opt_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (!std::isfinite(*v)) return nullptr; // degenerate fits (e.g. +inf loglik)
    return *v;
}

std::optional<double> opt_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

} // namespace

std::string serialize(const FitReport& r) {
    json j;
    j["schema_version"] = r.schema_version;
    j["tool_version"] = r.tool_version;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["flags"] = r.flags;
    j["center_year"] = r.center_year;
    j["year_range"] = r.year_range;
    j["tau_grid"] = r.tau_grid;
    j["coefficient_names"] = r.coefficient_names;
    j["groups"] = r.groups;
    json fits = json::array();
    for (const auto& f : r.fits) {
        json e;
        e["tau"] = f.tau;
        e["ok"] = f.ok;
        if (!f.error.empty()) e["error"] = f.error;
        e["fixed"] = f.fixed;
        e["per_group"] = f.per_group;
        e["objective"] = opt_to_json(f.objective);
        e["loglik"] = opt_to_json(f.loglik);
        e["sigma2"] = opt_to_json(f.sigma2);
        e["sigma"] = opt_to_json(f.sigma);
        if (f.psi)
            e["psi"] = *f.psi;
        else
            e["psi"] = nullptr;
        fits.push_back(std::move(e));
    }
    j["fits"] = std::move(fits);
    if (r.ci) {
        json c;
        c["intervals"] = r.ci->intervals;
        c["mean_width"] = r.ci->mean_width;
        c["replicates"] = r.ci->replicates;
        c["excluded"] = r.ci->excluded;
        j["ci"] = std::move(c);
    }
    return j.dump(2);
}

FitReport parse_report(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("report parse: ") + e.what());
    }
    try {
        FitReport r;
        r.schema_version = j.at("schema_version").get<int>();
        if (r.schema_version != kReportSchemaVersion)
            throw DataError("report schema_version " + std::to_string(r.schema_version) +
                            " is not supported");
        r.tool_version = j.at("tool_version").get<std::string>();
        r.method = j.at("method").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.flags = j.at("flags").get<std::map<std::string, std::string>>();
        r.center_year = j.at("center_year").get<int>();
        r.year_range = j.at("year_range").get<std::array<double, 2>>();
        r.tau_grid = j.at("tau_grid").get<std::vector<double>>();
        r.coefficient_names = j.at("coefficient_names").get<std::vector<std::string>>();
        r.groups = j.at("groups").get<std::vector<std::string>>();
        for (const auto& e : j.at("fits")) {
            TauFitRecord f;
            f.tau = e.at("tau").get<double>();
            f.ok = e.at("ok").get<bool>();
            if (e.contains("error")) f.error = e.at("error").get<std::string>();
            f.fixed = e.at("fixed").get<std::vector<double>>();
            f.per_group = e.at("per_group").get<std::vector<std::array<double, 2>>>();
            f.objective = opt_from_json(e, "objective");
            f.loglik = opt_from_json(e, "loglik");
            f.sigma2 = opt_from_json(e, "sigma2");
            f.sigma = opt_from_json(e, "sigma");
            if (e.contains("psi") && !e.at("psi").is_null())
                f.psi = e.at("psi").get<std::array<double, 3>>();
            r.fits.push_back(std::move(f));
        }
        if (j.contains("ci")) {
            CiRecord c;
            const auto& cj = j.at("ci");
            c.intervals = cj.at("intervals").get<std::vector<std::vector<std::array<double, 2>>>>();
            c.mean_width = cj.at("mean_width").get<std::vector<double>>();
            c.replicates = cj.at("replicates").get<std::size_t>();
            c.excluded = cj.at("excluded").get<std::size_t>();
            r.ci = std::move(c);
        }
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("report parse: ") + e.what());
    }
}

namespace {

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write: " + tmp);
        out << content;
        if (!out) throw DataError("failed writing: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw DataError("cannot rename " + tmp + " to " + path);
}

} // namespace

void write_report_json(const FitReport& report, const std::string& path) {
    atomic_write(path, serialize(report) + "\n");
}

FitReport read_report_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open report: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_report(text);
}

void write_report_csv(const FitReport& r, const std::string& path) {
    std::string out = "method,tau,scope,coefficient,estimate,ci_lower,ci_upper\n";
    char buf[512];
    for (std::size_t t = 0; t < r.fits.size(); ++t) {
        const auto& f = r.fits[t];
        if (!f.ok) continue;
        for (std::size_t k = 0; k < f.fixed.size(); ++k) {
            std::string lo = "", hi = "";
            if (r.ci && t < r.ci->intervals.size() && k < r.ci->intervals[t].size()) {
                std::snprintf(buf, sizeof buf, "%.17g", r.ci->intervals[t][k][0]);
                lo = buf;
                std::snprintf(buf, sizeof buf, "%.17g", r.ci->intervals[t][k][1]);
                hi = buf;
            }
            std::snprintf(buf, sizeof buf, "%s,%.17g,fixed,%s,%.17g,%s,%s\n", r.method.c_str(),
                          f.tau, r.coefficient_names[k].c_str(), f.fixed[k], lo.c_str(),
                          hi.c_str());
            out += buf;
        }
        for (std::size_t g = 0; g < f.per_group.size(); ++g) {
            for (int k = 0; k < 2; ++k) {
                std::snprintf(buf, sizeof buf, "%s,%.17g,%s,%s,%.17g,,\n", r.method.c_str(), f.tau,
                              r.groups[g].c_str(), k == 0 ? "intercept" : "year",
                              f.per_group[g][static_cast<std::size_t>(k)]);
                out += buf;
            }
        }
    }
    atomic_write(path, out);
}

} // namespace qphen
