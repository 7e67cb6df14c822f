#pragma once

#include <jmie/core_data.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace jmie {

/// Shortest representation that round-trips through parse_double. Locale independent.
inline std::string format_double(double v)
{
    if (std::isnan(v))
        return "NA";
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc())
        throw Error("cannot format number");
    return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s, const std::string& where)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s == "NA" || s == "nan")
        return std::nan("");
    double v = 0.0;
    auto first = s.data();
    if (!s.empty() && s.front() == '+')
        ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw DataError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

namespace detail {

inline std::vector<std::string> split_row(const std::string& line, char delim)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) {
        if (!cell.empty() && cell.back() == '\r')
            cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && (line.back() == delim))
        out.emplace_back();
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::size_t column(const std::string& name, const std::string& source) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name)
                return i;
        throw DataError(source + ": missing column '" + name + "'");
    }
};

inline Table read_table(std::istream& in, char delim, const std::string& source)
{
    Table t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto cells = split_row(line, delim);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size())
            throw DataError(source + " line " + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(cells.size()));
        t.rows.push_back(std::move(cells));
        t.line_numbers.push_back(lineno);
    }
    if (t.header.empty())
        throw DataError(source + ": empty input, header row required");
    return t;
}

} // namespace detail

/// Reads the subject-level file (id, event_time, event_indicator,
/// intermediate_time, covariates...) and the long-format measurement file
/// (id, time, value). Measurements are sorted by time per subject.
inline Dataset load_dataset(std::istream& subjects_in, std::istream& measurements_in, char delim = ',')
{
    const std::string ssrc = "subjects";
    const std::string msrc = "measurements";
    auto st = detail::read_table(subjects_in, delim, ssrc);
    const auto c_id = st.column("id", ssrc);
    const auto c_time = st.column("event_time", ssrc);
    const auto c_delta = st.column("event_indicator", ssrc);
    const auto c_rho = st.column("intermediate_time", ssrc);

    Dataset d;
    std::vector<std::size_t> cov_cols;
    for (std::size_t i = 0; i < st.header.size(); ++i) {
        if (i == c_id || i == c_time || i == c_delta || i == c_rho)
            continue;
        cov_cols.push_back(i);
        d.covariate_names.push_back(st.header[i]);
    }

    std::map<std::string, std::size_t> index;
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
        const auto& row = st.rows[r];
        const std::string where = ssrc + " line " + std::to_string(st.line_numbers[r]);
        SubjectRecord s;
        s.id = row[c_id];
        if (s.id.empty())
            throw DataError(where + ": empty id");
        s.event_time = parse_double(row[c_time], where);
        if (!(s.event_time >= 0.0))
            throw DataError(where + ": negative event_time");
        const double delta = parse_double(row[c_delta], where);
        if (delta != 0.0 && delta != 1.0)
            throw DataError(where + ": event_indicator must be 0 or 1");
        s.event_indicator = static_cast<int>(delta);
        if (!row[c_rho].empty() && row[c_rho] != "NA") {
            const double rho = parse_double(row[c_rho], where);
            if (!(rho > 0.0))
                throw DataError(where + ": intermediate_time must be positive");
            s.intermediate_time = rho;
        }
        for (auto c : cov_cols)
            s.covariates.push_back(parse_double(row[c], where));
        if (!index.emplace(s.id, d.subjects.size()).second)
            throw DataError(where + ": duplicate subject id '" + s.id + "'");
        d.subjects.push_back(std::move(s));
    }

    auto mt = detail::read_table(measurements_in, delim, msrc);
    const auto m_id = mt.column("id", msrc);
    const auto m_time = mt.column("time", msrc);
    const auto m_value = mt.column("value", msrc);
    std::set<std::pair<std::string, double>> seen;
    for (std::size_t r = 0; r < mt.rows.size(); ++r) {
        const auto& row = mt.rows[r];
        const std::string where = msrc + " line " + std::to_string(mt.line_numbers[r]);
        auto it = index.find(row[m_id]);
        if (it == index.end())
            throw DataError(where + ": unknown subject id '" + row[m_id] + "'");
        auto& s = d.subjects[it->second];
        Measurement m{parse_double(row[m_time], where), parse_double(row[m_value], where)};
        if (!(m.time >= 0.0))
            throw DataError(where + ": negative measurement time");
        if (m.time > s.event_time)
            throw DataError(where + ": measurement time " + format_double(m.time) +
                            " exceeds event time " + format_double(s.event_time) +
                            " of subject '" + s.id + "'");
        if (!seen.emplace(s.id, m.time).second)
            throw DataError(where + ": duplicate (id, time) row for subject '" + s.id + "'");
        s.measurements.push_back(m);
    }
    for (auto& s : d.subjects)
        std::stable_sort(s.measurements.begin(), s.measurements.end(),
                         [](const Measurement& a, const Measurement& b) { return a.time < b.time; });
    validate_dataset(d);
    return d;
}

inline void save_subjects(const Dataset& d, std::ostream& out, char delim = ',')
{
    out << "id" << delim << "event_time" << delim << "event_indicator" << delim << "intermediate_time";
    for (const auto& name : d.covariate_names)
        out << delim << name;
    out << '\n';
    for (const auto& s : d.subjects) {
        out << s.id << delim << format_double(s.event_time) << delim << s.event_indicator << delim;
        if (s.intermediate_time)
            out << format_double(*s.intermediate_time);
        for (double w : s.covariates)
            out << delim << format_double(w);
        out << '\n';
    }
}

inline void save_measurements(const Dataset& d, std::ostream& out, char delim = ',')
{
    out << "id" << delim << "time" << delim << "value" << '\n';
    for (const auto& s : d.subjects)
        for (const auto& m : s.measurements)
            out << s.id << delim << format_double(m.time) << delim << format_double(m.value) << '\n';
}

inline Dataset load_dataset_files(const std::string& subjects_path, const std::string& measurements_path)
{
    std::ifstream s(subjects_path);
    if (!s)
        throw DataError("cannot open " + subjects_path);
    std::ifstream m(measurements_path);
    if (!m)
        throw DataError("cannot open " + measurements_path);
    return load_dataset(s, m);
}

inline void save_dataset_files(const Dataset& d, const std::string& subjects_path,
                               const std::string& measurements_path)
{
    std::ofstream s(subjects_path, std::ios::binary);
    std::ofstream m(measurements_path, std::ios::binary);
    if (!s || !m)
        throw Error("cannot write dataset to " + subjects_path + " / " + measurements_path);
    save_subjects(d, s);
    save_measurements(d, m);
}

} // namespace jmie
