#ifndef NESCOPE_CSV_HPP
#define NESCOPE_CSV_HPP

#include <charconv>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "nescope/core.hpp"

namespace nescope {

struct CsvOptions {
    bool header = false;       // skip (load) / emit (save) a single header row
    bool labels = false;       // final integer column holds labels
};

namespace detail {

inline double parse_cell(const std::string& cell, int row, int col) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    while (p < e && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (ec != std::errc() || p != e)
        throw io_error("csv: non-numeric cell at row " + std::to_string(row + 1) +
                       ", column " + std::to_string(col + 1) + ": '" + cell + "'");
    return v;
}

inline void split_line(const std::string& line, std::vector<std::string>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// Loads a rectangular numeric table. Ragged rows and non-numeric cells are
/// reported with their row/column position.
inline std::pair<Matrix, IntVector> load_csv_matrix(const std::string& path,
                                                    const CsvOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open file: " + path);

    std::vector<std::vector<double>> rows;
    std::vector<std::string> cells;
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 0 && opt.header) {
            ++lineno;
            continue;
        }
        if (line.empty()) {
            ++lineno;
            continue;
        }
        detail::split_line(line, cells);
        const int r = static_cast<int>(rows.size());
        std::vector<double> row(cells.size());
        for (std::size_t c = 0; c < cells.size(); ++c)
            row[c] = detail::parse_cell(cells[c], r, static_cast<int>(c));
        if (rows.empty()) {
            width = row.size();
        } else if (row.size() != width) {
            throw io_error("csv: ragged row " + std::to_string(r + 1) + " in " + path +
                           " (expected " + std::to_string(width) + " cells, got " +
                           std::to_string(row.size()) + ")");
        }
        rows.push_back(std::move(row));
        ++lineno;
    }
    if (rows.empty()) throw io_error("csv: no data rows in " + path);

    const std::size_t d = opt.labels ? width - 1 : width;
    if (opt.labels && width < 2) throw io_error("csv: label column requested but table has a single column");

    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    IntVector labels;
    if (opt.labels) labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        if (opt.labels) labels(static_cast<Eigen::Index>(r)) = static_cast<int>(std::lround(rows[r][d]));
    }
    return {std::move(m), std::move(labels)};
}

inline void save_csv_matrix(const Matrix& m, const std::string& path, const CsvOptions& opt = {},
                            const IntVector* labels = nullptr) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write file: " + path);
    if (opt.header) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << 'c' << c;
        }
        if (opt.labels && labels) out << ",label";
        out << '\n';
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << detail::format_double(m(r, c));
        }
        if (opt.labels && labels) out << ',' << (*labels)(r);
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

} // namespace nescope

#endif
