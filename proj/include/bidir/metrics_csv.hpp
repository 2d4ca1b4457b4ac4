#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bidir/errors.hpp"
#include "bidir/train.hpp"

namespace bidir {

/// Metrics CSV: fixed schema, one row per evaluation sweep. Doubles are
/// written with std::to_chars (shortest round-trip form), so output is
/// locale-independent and identical runs produce identical bytes.

inline constexpr const char* kMetricsHeader =
    "iteration,acc_test,acc_noisy,acc_adv,sigmoid_rate,softmax_rate";

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw NumericError("metrics csv: unformattable value");
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::string format_metrics_row(Index iteration, const RobustnessReport& m) {
    std::string row = std::to_string(iteration);
    for (double v : {m.acc_test, m.acc_noisy, m.acc_adv, m.sigmoid_rate, m.softmax_rate}) {
        row += ',';
        row += detail::format_double(v);
    }
    return row;
}

inline void write_metrics_csv(const std::vector<TrainResult::Row>& series, std::ostream& out) {
    if (series.empty()) throw ValueError("metrics csv: empty series");
    out << kMetricsHeader << '\n';
    for (const auto& row : series) out << format_metrics_row(row.iteration, row.metrics) << '\n';
}

inline void write_metrics_csv(const std::vector<TrainResult::Row>& series,
                              const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("metrics csv: cannot open for writing: " + path);
    write_metrics_csv(series, out);
    out.flush();
    if (!out) throw ParseError("metrics csv: write failed: " + path);
}

inline std::vector<TrainResult::Row> read_metrics_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("metrics csv: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kMetricsHeader)
        throw ParseError("metrics csv: bad header: " + line);

    std::vector<TrainResult::Row> series;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6)
            throw ParseError("metrics csv: line " + std::to_string(line_no) + ": expected 6 columns, got " +
                             std::to_string(cells.size()));
        auto parse = [&](const std::string& s, double& out_v) {
            const auto res = std::from_chars(s.data(), s.data() + s.size(), out_v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw ParseError("metrics csv: line " + std::to_string(line_no) + ": bad number: " + s);
        };
        TrainResult::Row row;
        double it = 0;
        parse(cells[0], it);
        row.iteration = static_cast<Index>(it);
        parse(cells[1], row.metrics.acc_test);
        parse(cells[2], row.metrics.acc_noisy);
        parse(cells[3], row.metrics.acc_adv);
        parse(cells[4], row.metrics.sigmoid_rate);
        parse(cells[5], row.metrics.softmax_rate);
        series.push_back(row);
    }
    return series;
}

inline std::vector<TrainResult::Row> read_metrics_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("metrics csv: cannot open: " + path);
    return read_metrics_csv(in);
}

}  // namespace bidir
