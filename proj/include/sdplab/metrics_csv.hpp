#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sdplab/errors.hpp"

namespace sdplab {

// One metrics line. Identity fields are always present; measurement fields
// are optional because epoch rows and step-boundary rows populate different
// subsets. Absent values serialize as empty cells.
struct MetricsRow {
    std::string run_id;
    std::uint64_t seed = 0;
    std::string method;
    std::string loss_mode;
    std::size_t step = 0;
    double remaining_fraction = 1.0;
    std::size_t epoch = 0;
    std::string split;
    double accuracy = 0.0;
    std::optional<double> loss_total;
    std::optional<double> loss_ce;
    std::optional<double> loss_kld;
    std::optional<double> loss_cc;
    std::optional<double> snr;
    std::optional<double> mi_knn;
    std::optional<double> mi_binned_avg;
    std::optional<double> kde_mi_input;
    std::optional<double> kde_mi_label;
    std::optional<double> overlap_vs_mbp;
    std::optional<double> frob_distortion_total;
    std::optional<double> repr_distance;
    std::optional<std::size_t> recovery_epochs;

    void validate() const {
        if (!(remaining_fraction > 0.0 && remaining_fraction <= 1.0))
            throw ValueError("metrics row: remaining_fraction must be in (0,1], got " +
                             std::to_string(remaining_fraction));
        if (!(accuracy >= 0.0 && accuracy <= 1.0))
            throw ValueError("metrics row: accuracy must be in [0,1], got " +
                             std::to_string(accuracy));
        if (run_id.empty()) throw ValueError("metrics row: empty run_id");
        if (split.empty()) throw ValueError("metrics row: empty split");
    }
};

inline const char* metrics_csv_header() {
    return "run_id,seed,method,loss_mode,step,remaining_fraction,epoch,split,accuracy,"
           "loss_total,loss_ce,loss_kld,loss_cc,snr,mi_knn,mi_binned_avg,kde_mi_input,"
           "kde_mi_label,overlap_vs_mbp,frob_distortion_total,repr_distance,recovery_epochs";
}

// Shortest decimal form at 9 significant digits, matching the file contract.
inline std::string format_metric(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
    return std::string(buf, ptr);
}

namespace detail {

inline void append_cell(std::string& line, const std::optional<double>& v) {
    line.push_back(',');
    if (v) line += format_metric(*v);
}

}  // namespace detail

inline std::string format_metrics_row(const MetricsRow& r) {
    r.validate();
    std::string line;
    line += r.run_id;
    line += ',';
    line += std::to_string(r.seed);
    line += ',';
    line += r.method;
    line += ',';
    line += r.loss_mode;
    line += ',';
    line += std::to_string(r.step);
    line += ',';
    line += format_metric(r.remaining_fraction);
    line += ',';
    line += std::to_string(r.epoch);
    line += ',';
    line += r.split;
    line += ',';
    line += format_metric(r.accuracy);
    detail::append_cell(line, r.loss_total);
    detail::append_cell(line, r.loss_ce);
    detail::append_cell(line, r.loss_kld);
    detail::append_cell(line, r.loss_cc);
    detail::append_cell(line, r.snr);
    detail::append_cell(line, r.mi_knn);
    detail::append_cell(line, r.mi_binned_avg);
    detail::append_cell(line, r.kde_mi_input);
    detail::append_cell(line, r.kde_mi_label);
    detail::append_cell(line, r.overlap_vs_mbp);
    detail::append_cell(line, r.frob_distortion_total);
    detail::append_cell(line, r.repr_distance);
    line.push_back(',');
    if (r.recovery_epochs) line += std::to_string(*r.recovery_epochs);
    return line;
}

// Append-only writer: header on open, one line per row, explicit flush for
// step boundaries so an interrupted run leaves a readable prefix.
class MetricsCsvWriter {
public:
    explicit MetricsCsvWriter(const std::string& path) : path_(path), out_(path) {
        if (!out_) throw IoError("cannot write " + path);
        out_ << metrics_csv_header() << '\n';
    }

    void append(const MetricsRow& r) {
        out_ << format_metrics_row(r) << '\n';
        if (!out_) throw IoError("write failed for " + path_);
    }

    void flush() { out_.flush(); }

private:
    std::string path_;
    std::ofstream out_;
};

namespace detail {

inline std::vector<std::string> csv_cells(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline std::optional<double> parse_opt_double(const std::string& cell, std::size_t line_no,
                                              const std::string& path) {
    if (cell.empty()) return std::nullopt;
    double v = 0.0;
    const char* end = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc{} || p != end)
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
    return v;
}

inline double parse_req_double(const std::string& cell, std::size_t line_no,
                               const std::string& path) {
    const auto v = parse_opt_double(cell, line_no, path);
    if (!v)
        throw ParseError(path + ":" + std::to_string(line_no) + ": required cell is empty");
    return *v;
}

inline std::uint64_t parse_req_u64(const std::string& cell, std::size_t line_no,
                                   const std::string& path) {
    std::uint64_t v = 0;
    const char* end = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc{} || p != end)
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad integer '" + cell + "'");
    return v;
}

}  // namespace detail

// Strict reader for the writer's output. The header must match the schema
// exactly; the error spells out which expected columns are absent.
inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file, expected a header row");

    const auto header = detail::csv_cells(line);
    const auto expected = detail::csv_cells(metrics_csv_header());
    if (header != expected) {
        std::string missing;
        for (const auto& col : expected) {
            bool found = false;
            for (const auto& h : header) found = found || h == col;
            if (!found) {
                if (!missing.empty()) missing += ", ";
                missing += col;
            }
        }
        if (!missing.empty())
            throw ParseError(path + ": metrics schema mismatch; missing columns: " + missing);
        throw ParseError(path + ": metrics schema mismatch; unexpected column set or order");
    }

    std::vector<MetricsRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::csv_cells(line);
        if (cells.size() != expected.size())
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(expected.size()) + " cells, got " +
                             std::to_string(cells.size()));
        MetricsRow r;
        std::size_t i = 0;
        r.run_id = cells[i++];
        r.seed = detail::parse_req_u64(cells[i++], line_no, path);
        r.method = cells[i++];
        r.loss_mode = cells[i++];
        r.step = static_cast<std::size_t>(detail::parse_req_u64(cells[i++], line_no, path));
        r.remaining_fraction = detail::parse_req_double(cells[i++], line_no, path);
        r.epoch = static_cast<std::size_t>(detail::parse_req_u64(cells[i++], line_no, path));
        r.split = cells[i++];
        r.accuracy = detail::parse_req_double(cells[i++], line_no, path);
        r.loss_total = detail::parse_opt_double(cells[i++], line_no, path);
        r.loss_ce = detail::parse_opt_double(cells[i++], line_no, path);
        r.loss_kld = detail::parse_opt_double(cells[i++], line_no, path);
        r.loss_cc = detail::parse_opt_double(cells[i++], line_no, path);
        r.snr = detail::parse_opt_double(cells[i++], line_no, path);
        r.mi_knn = detail::parse_opt_double(cells[i++], line_no, path);
        r.mi_binned_avg = detail::parse_opt_double(cells[i++], line_no, path);
        r.kde_mi_input = detail::parse_opt_double(cells[i++], line_no, path);
        r.kde_mi_label = detail::parse_opt_double(cells[i++], line_no, path);
        r.overlap_vs_mbp = detail::parse_opt_double(cells[i++], line_no, path);
        r.frob_distortion_total = detail::parse_opt_double(cells[i++], line_no, path);
        r.repr_distance = detail::parse_opt_double(cells[i++], line_no, path);
        if (!cells[i].empty())
            r.recovery_epochs =
                static_cast<std::size_t>(detail::parse_req_u64(cells[i], line_no, path));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace sdplab
