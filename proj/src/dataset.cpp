#include "qphen/dataset.hpp"

#include "qphen/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace qphen {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (std::isspace(static_cast<unsigned char>(s[b])) != 0)) ++b;
    while (e > b && (std::isspace(static_cast<unsigned char>(s[e - 1])) != 0)) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out, std::chars_format::general);
    return ec == std::errc{} && p == e && std::isfinite(out);
}

bool parse_int(const std::string& s, long& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc{} && p == e;
}

int median_year(const std::vector<Observation>& obs) {
    std::vector<int> years;
    years.reserve(obs.size());
    for (const auto& o : obs) years.push_back(o.year);
    std::sort(years.begin(), years.end());
    // type-1 median: the ceil(n/2)-th order statistic
    return years[(years.size() + 1) / 2 - 1];
}

} // namespace

Dataset::Dataset(Schema schema, std::vector<Observation> raw_observations)
    : schema_(std::move(schema)), obs_(std::move(raw_observations)) {
    finalize(false, 0);
}

Dataset::Dataset(Schema schema, std::vector<Observation> raw_observations, int center_year)
    : schema_(std::move(schema)), obs_(std::move(raw_observations)) {
    finalize(true, center_year);
}

void Dataset::finalize(bool recenter_given, int given_center) {
    for (const auto& o : obs_) {
        if (o.covariates.size() != schema_.size())
            throw SchemaError("observation covariate count " + std::to_string(o.covariates.size()) +
                              " does not match schema size " + std::to_string(schema_.size()));
        if (!std::isfinite(o.day)) throw DataError("non-finite day value in group " + o.group);
        if (!(o.count_weight > 0.0)) throw DataError("count_weight must be positive");
    }
    center_year_ = obs_.empty() ? 0 : (recenter_given ? given_center : median_year(obs_));
    for (auto& o : obs_) o.year -= center_year_;
    std::stable_sort(obs_.begin(), obs_.end(), [](const Observation& a, const Observation& b) {
        if (a.group != b.group) return a.group < b.group;
        return a.year < b.year;
    });
}

std::vector<std::string> Dataset::groups() const {
    std::vector<std::string> out;
    for (const auto& o : obs_)
        if (out.empty() || out.back() != o.group) out.push_back(o.group);
    return out;
}

std::size_t Dataset::group_count() const { return groups().size(); }

std::vector<std::pair<std::size_t, std::size_t>> Dataset::group_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i <= obs_.size(); ++i) {
        if (i == obs_.size() || obs_[i].group != obs_[start].group) {
            out.emplace_back(start, i);
            start = i;
        }
    }
    return out;
}

double CellTable::total_weight() const {
    double s = 0.0;
    for (const auto& c : cells_) s += c.weight;
    return s;
}

std::vector<std::string> CellTable::groups() const {
    std::vector<std::string> out;
    for (const auto& c : cells_)
        if (out.empty() || out.back() != c.group) out.push_back(c.group);
    return out;
}

double empirical_quantile(std::span<const double> sorted_values, double tau) {
    if (sorted_values.empty()) throw DataError("empirical_quantile: empty list");
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("empirical_quantile: tau must lie in (0,1)");
    const double n = static_cast<double>(sorted_values.size());
    // smallest k with k/n >= tau; the 1e-9 guard absorbs upward rounding of n*tau
    auto k = static_cast<std::size_t>(std::ceil(n * tau - 1e-9));
    if (k < 1) k = 1;
    if (k > sorted_values.size()) k = sorted_values.size();
    return sorted_values[k - 1];
}

double empirical_quantile_weighted(std::span<const double> sorted_values,
                                   std::span<const double> weights, double tau) {
    if (sorted_values.empty()) throw DataError("empirical_quantile: empty list");
    if (sorted_values.size() != weights.size())
        throw DataError("empirical_quantile: weight list length mismatch");
    if (!(tau > 0.0 && tau < 1.0)) throw DataError("empirical_quantile: tau must lie in (0,1)");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double cum = 0.0;
    for (std::size_t i = 0; i < sorted_values.size(); ++i) {
        cum += weights[i];
        if (cum / total >= tau - 1e-12) return sorted_values[i];
    }
    return sorted_values.back();
}

double cell_quantile(const Cell& cell, double tau) {
    return empirical_quantile_weighted(cell.sorted_days, cell.member_weights, tau);
}

namespace {

Dataset load_csv_impl(const std::string& path, const Schema& schema, const int* center_year) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);

    auto column = [&](const std::string& name) -> long {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<long>(i);
        return -1;
    };

    const long group_col = column("group");
    const long year_col = column("year");
    const long day_col = column("day");
    for (const auto& [name, col] :
         {std::pair{std::string("group"), group_col}, {std::string("year"), year_col},
          {std::string("day"), day_col}}) {
        if (col < 0) throw SchemaError("missing required column \"" + name + "\" in " + path);
    }
    std::vector<long> cov_cols;
    for (const auto& decl : schema.covariates) {
        const long c = column(decl.name);
        if (c < 0) throw SchemaError("missing declared covariate column \"" + decl.name + "\" in " + path);
        cov_cols.push_back(c);
    }

    // Binary covariates may arrive as 0/1 numerals or as exactly two string
    // levels; levels map to 0/1 in lexicographic order.
    std::vector<std::map<std::string, double>> level_maps(schema.size());

    std::vector<Observation> obs;
    std::vector<std::vector<std::string>> pending_levels(schema.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        auto field_at = [&](long col) -> const std::string& {
            static const std::string empty;
            if (col < 0 || static_cast<std::size_t>(col) >= fields.size()) return empty;
            return fields[static_cast<std::size_t>(col)];
        };

        Observation o;
        o.group = field_at(group_col);
        if (o.group.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty group id");
        long year = 0;
        if (!parse_int(field_at(year_col), year))
            throw DataError("line " + std::to_string(line_no) + ": unparseable year \"" +
                            field_at(year_col) + "\"");
        o.year = static_cast<int>(year);
        if (!parse_double(field_at(day_col), o.day))
            throw DataError("line " + std::to_string(line_no) + ": unparseable day \"" +
                            field_at(day_col) + "\"");

        o.covariates.resize(schema.size());
        for (std::size_t k = 0; k < schema.size(); ++k) {
            const std::string& raw = field_at(cov_cols[k]);
            if (raw.empty())
                throw DataError("line " + std::to_string(line_no) + ": missing value in column \"" +
                                schema.covariates[k].name + "\"");
            double v;
            if (parse_double(raw, v)) {
                if (schema.covariates[k].kind == CovariateKind::binary && v != 0.0 && v != 1.0)
                    throw DataError("line " + std::to_string(line_no) + ": column \"" +
                                    schema.covariates[k].name + "\" must be 0/1, got " + raw);
                o.covariates[k] = v;
            } else if (schema.covariates[k].kind == CovariateKind::binary) {
                level_maps[k].emplace(raw, 0.0);
                if (level_maps[k].size() > 2)
                    throw SchemaError("column \"" + schema.covariates[k].name +
                                      "\" has more than two levels");
                pending_levels[k].push_back(raw);
                o.covariates[k] = -1.0; // patched below once the level set is known
            } else {
                throw DataError("line " + std::to_string(line_no) + ": unparseable value \"" + raw +
                                "\" in column \"" + schema.covariates[k].name + "\"");
            }
        }
        obs.push_back(std::move(o));
    }

    // patch string-level binaries now that the full level sets are known
    for (std::size_t k = 0; k < schema.size(); ++k) {
        if (pending_levels[k].empty()) continue;
        double code = 0.0;
        for (auto& [level, value] : level_maps[k]) value = code++;
        std::size_t next = 0;
        for (auto& o : obs) {
            if (o.covariates[k] < 0.0) o.covariates[k] = level_maps[k].at(pending_levels[k][next++]);
        }
    }

    if (center_year == nullptr) return Dataset(schema, std::move(obs));
    return Dataset(schema, std::move(obs), *center_year);
}

} // namespace

Dataset load_csv(const std::string& path, const Schema& schema) {
    return load_csv_impl(path, schema, nullptr);
}

Dataset load_csv(const std::string& path, const Schema& schema, int center_year) {
    return load_csv_impl(path, schema, &center_year);
}

Dataset filter_min_count(const Dataset& ds, std::size_t min_n) {
    if (min_n < 1) throw DataError("filter_min_count: min_n must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& o : ds.observations()) ++counts[o.group];
    std::vector<Observation> kept;
    for (const auto& o : ds.observations())
        if (counts[o.group] >= min_n) {
            Observation raw = o;
            raw.year += ds.center_year(); // re-centered identically below
            kept.push_back(std::move(raw));
        }
    return Dataset(ds.schema(), std::move(kept), ds.center_year());
}

CellTable build_cells(const Dataset& ds) {
    if (ds.empty()) throw DataError("build_cells: dataset is empty");
    struct Key {
        std::string group;
        int year;
        std::vector<double> covs;
        bool operator<(const Key& o) const {
            if (group != o.group) return group < o.group;
            if (year != o.year) return year < o.year;
            return covs < o.covs;
        }
    };
    std::map<Key, Cell> cells;
    for (const auto& o : ds.observations()) {
        Key key{o.group, o.year, o.covariates};
        auto it = cells.find(key);
        if (it == cells.end()) {
            Cell c;
            c.group = o.group;
            c.year = o.year;
            c.covariates = o.covariates;
            it = cells.emplace(std::move(key), std::move(c)).first;
        }
        it->second.sorted_days.push_back(o.day);
        it->second.member_weights.push_back(o.count_weight);
        it->second.weight += o.count_weight;
    }
    std::vector<Cell> out;
    out.reserve(cells.size());
    for (auto& [key, cell] : cells) {
        // sort days and keep the member weights aligned
        std::vector<std::size_t> idx(cell.sorted_days.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return cell.sorted_days[a] < cell.sorted_days[b];
        });
        Cell sorted = cell;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            sorted.sorted_days[i] = cell.sorted_days[idx[i]];
            sorted.member_weights[i] = cell.member_weights[idx[i]];
        }
        out.push_back(std::move(sorted));
    }
    std::vector<std::string> cov_names;
    for (const auto& c : ds.schema().covariates) cov_names.push_back(c.name);
    return CellTable(std::move(out), std::move(cov_names));
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << "group,year,day";
    for (const auto& c : ds.schema().covariates) out << ',' << c.name;
    out << '\n';
    out.precision(17);
    for (const auto& o : ds.observations()) {
        out << o.group << ',' << (o.year + ds.center_year()) << ',' << o.day;
        for (double v : o.covariates) out << ',' << v;
        out << '\n';
    }
    if (!out) throw DataError("failed writing " + path);
}

} // namespace qphen
