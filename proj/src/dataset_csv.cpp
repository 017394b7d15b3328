#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "surrogate_bridge/data_model.hpp"
#include "surrogate_bridge/errors.hpp"

namespace sbridge {

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view v) {
    while (!v.empty() && (v.front() == ' ' || v.front() == '\t')) v.remove_prefix(1);
    while (!v.empty() && (v.back() == ' ' || v.back() == '\t' || v.back() == '\r')) v.remove_suffix(1);
    return v;
}

double parse_double(std::string_view v, std::size_t line, std::string_view column) {
    v = trim(v);
    double out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("line " + std::to_string(line) + ", column " + std::string(column) +
                              ": not a number: '" + std::string(v) + "'");
    return out;
}

int parse_flag(std::string_view v, std::size_t line, std::string_view column) {
    const double d = parse_double(v, line, column);
    if (d != 0.0 && d != 1.0)
        throw ValidationError("line " + std::to_string(line) + ", column " + std::string(column) +
                              ": expected 0 or 1");
    return static_cast<int>(d);
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

HarmonizedDataset read_dataset_csv(std::istream& in, double t0) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("dataset CSV: missing header row");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split(line);

    std::vector<std::size_t> s_cols, x_cols;
    long id_col = -1, z_col = -1, a_col = -1, eps_col = -1, t_col = -1, d_col = -1;
    HarmonizedDataset d;
    d.t0 = t0;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const auto h = trim(header[j]);
        const auto col = static_cast<long>(j);
        if (h == "id") id_col = col;
        else if (h == "z") z_col = col;
        else if (h == "a") a_col = col;
        else if (h == "eps_s") eps_col = col;
        else if (h == "t_tilde") t_col = col;
        else if (h == "delta") d_col = col;
        else if (h.starts_with("s_")) {
            s_cols.push_back(j);
            d.surrogate_names.emplace_back(h);
        } else if (h.starts_with("x_")) {
            x_cols.push_back(j);
            d.covariate_names.emplace_back(h);
        } else {
            throw ValidationError("dataset CSV: unknown column '" + std::string(h) + "'");
        }
    }
    if (id_col < 0 || z_col < 0 || a_col < 0 || eps_col < 0 || t_col < 0 || d_col < 0)
        throw ValidationError("dataset CSV: header must contain id, z, a, eps_s, t_tilde, delta");

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line);
        if (f.size() != header.size())
            throw ValidationError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(f.size()));
        ParticipantRecord r;
        r.id = std::string(trim(f[static_cast<std::size_t>(id_col)]));
        r.z = parse_flag(f[static_cast<std::size_t>(z_col)], lineno, "z");
        r.a = parse_flag(f[static_cast<std::size_t>(a_col)], lineno, "a");
        r.eps_s = parse_flag(f[static_cast<std::size_t>(eps_col)], lineno, "eps_s") == 1;
        for (std::size_t k = 0; k < x_cols.size(); ++k)
            r.x.push_back(parse_double(f[x_cols[k]], lineno, d.covariate_names[k]));
        if (r.eps_s) {
            std::vector<double> s;
            for (std::size_t k = 0; k < s_cols.size(); ++k) {
                const auto cell = trim(f[s_cols[k]]);
                if (cell.empty())
                    throw ValidationError("line " + std::to_string(lineno) + ": eps_s=1 but " +
                                          d.surrogate_names[k] + " is blank");
                s.push_back(parse_double(cell, lineno, d.surrogate_names[k]));
            }
            r.s = std::move(s);
        } else {
            for (std::size_t k = 0; k < s_cols.size(); ++k)
                if (!trim(f[s_cols[k]]).empty())
                    throw ValidationError("line " + std::to_string(lineno) + ": eps_s=0 but " +
                                          d.surrogate_names[k] + " is filled");
        }
        const auto t_cell = trim(f[static_cast<std::size_t>(t_col)]);
        const auto d_cell = trim(f[static_cast<std::size_t>(d_col)]);
        if (r.z == 1) {
            if (!t_cell.empty()) r.t_tilde = parse_double(t_cell, lineno, "t_tilde");
            if (!d_cell.empty()) r.delta = parse_flag(d_cell, lineno, "delta") == 1;
        }
        d.records.push_back(std::move(r));
    }
    return d;
}

HarmonizedDataset read_dataset_csv(const std::string& path, double t0) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset CSV '" + path + "'");
    return read_dataset_csv(in, t0);
}

void write_dataset_csv(std::ostream& out, const HarmonizedDataset& d) {
    out << "id,z,a,eps_s";
    for (std::size_t k = 0; k < d.surrogate_dim(); ++k) out << ",s_" << k + 1;
    for (std::size_t k = 0; k < d.covariate_dim(); ++k) out << ",x_" << k + 1;
    out << ",t_tilde,delta\n";
    for (const auto& r : d.records) {
        out << r.id << ',' << r.z << ',' << r.a << ',' << (r.eps_s ? 1 : 0);
        for (std::size_t k = 0; k < d.surrogate_dim(); ++k) {
            out << ',';
            if (r.eps_s) out << format_double((*r.s)[k]);
        }
        for (double v : r.x) out << ',' << format_double(v);
        out << ',';
        if (r.z == 1 && r.t_tilde) out << format_double(*r.t_tilde);
        out << ',';
        if (r.z == 1 && r.delta) out << (*r.delta ? 1 : 0);
        out << '\n';
    }
    if (!out) throw Error("dataset CSV: write failed");
}

void write_dataset_csv(const std::string& path, const HarmonizedDataset& d) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_dataset_csv(out, d);
}

}  // namespace sbridge
