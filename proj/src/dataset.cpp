#include "copiv/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "copiv/errors.hpp"

namespace copiv {

std::string to_string(TreatmentKind k) {
    switch (k) {
        case TreatmentKind::Binary: return "binary";
        case TreatmentKind::Ordered: return "ordered";
        case TreatmentKind::Continuous: return "continuous";
    }
    return "unknown";
}

TreatmentKind treatment_from_string(const std::string& s) {
    if (s == "binary") return TreatmentKind::Binary;
    if (s == "ordered") return TreatmentKind::Ordered;
    if (s == "continuous") return TreatmentKind::Continuous;
    throw ConfigError("unknown treatment kind '" + s + "'");
}

Dataset Dataset::rows(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.y.resize(idx.size());
    out.d.resize(idx.size());
    out.z.resize(idx.size());
    out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t i = idx[r];
        out.y[r] = y[i];
        out.d[r] = d[i];
        out.z[r] = z[i];
        if (x.cols() > 0) out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(i));
    }
    return out;
}

void Dataset::validate() const {
    if (d.size() != y.size() || z.size() != y.size() || static_cast<std::size_t>(x.rows()) != y.size())
        throw ConfigError("dataset columns have different lengths");
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
    };
    if (!finite(y) || !finite(d) || !finite(z) || !x.allFinite()) throw ConfigError("dataset has non-finite cells");
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_cell(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (s.empty() || ec != std::errc() || p != e || !std::isfinite(v))
        throw ConfigError("bad value '" + s + "' in column " + col + " at data row " + std::to_string(row + 1));
    return v;
}

}  // namespace

Dataset read_csv(const std::string& path, const ColumnMap& cols) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open input file " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("input file is empty: " + path);
    const auto header = split(line);
    auto find = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("column '" + name + "' not found in " + path);
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t iy = find(cols.y), id = find(cols.d), iz = find(cols.z);
    std::vector<std::size_t> ix;
    std::vector<std::string> xnames = cols.x;
    if (xnames.empty()) {
        for (const auto& h : header)
            if (h.size() > 1 && h[0] == 'x' && std::all_of(h.begin() + 1, h.end(), ::isdigit)) xnames.push_back(h);
    }
    for (const auto& nm : xnames) ix.push_back(find(nm));

    Dataset out;
    std::vector<std::vector<double>> xs;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw ConfigError("row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(header.size()));
        out.y.push_back(parse_cell(cells[iy], row, cols.y));
        out.d.push_back(parse_cell(cells[id], row, cols.d));
        out.z.push_back(parse_cell(cells[iz], row, cols.z));
        std::vector<double> xr;
        for (std::size_t j = 0; j < ix.size(); ++j) xr.push_back(parse_cell(cells[ix[j]], row, xnames[j]));
        xs.push_back(std::move(xr));
        ++row;
    }
    out.x.resize(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(ix.size()));
    for (std::size_t r = 0; r < row; ++r)
        for (std::size_t j = 0; j < ix.size(); ++j)
            out.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = xs[r][j];
    if (row == 0) throw ConfigError("input file has no data rows: " + path);
    return out;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw ConfigError("cannot write " + path);
    std::fputs("y,d,z", f);
    for (std::size_t j = 0; j < data.k(); ++j) std::fprintf(f, ",x%zu", j + 1);
    std::fputc('\n', f);
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::fprintf(f, "%.17g,%.17g,%.17g", data.y[i], data.d[i], data.z[i]);
        for (std::size_t j = 0; j < data.k(); ++j)
            std::fprintf(f, ",%.17g", data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        std::fputc('\n', f);
    }
    std::fclose(f);
}

std::vector<double> support(const std::vector<double>& v) {
    std::vector<double> s(v);
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
}

std::vector<double> empirical_quantiles(std::vector<double> v, const std::vector<double>& p) {
    if (v.empty()) throw DomainError("quantiles of an empty sample");
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    out.reserve(p.size());
    const double n = static_cast<double>(v.size());
    for (double q : p) {
        const double h = (n - 1.0) * q;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        out.push_back(v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]));
    }
    return out;
}

std::vector<double> prob_grid(std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1.0);
    return out;
}

}  // namespace copiv
