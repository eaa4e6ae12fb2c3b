#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "sdplab/errors.hpp"
#include "sdplab/metrics_csv.hpp"

namespace sdplab {

struct ReportPaths {
    std::string accuracy_chart;
    std::string recovery_chart;
    std::string information_chart;
};

namespace detail {

inline const char* series_color(std::size_t i) {
    static const char* palette[] = {"#1f6fb2", "#d1495b", "#2e8b57", "#b8860b",
                                    "#6a4c93", "#00838f", "#c2571a", "#555555"};
    return palette[i % 8];
}

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&')
            out += "&amp;";
        else if (c == '<')
            out += "&lt;";
        else if (c == '>')
            out += "&gt;";
        else if (c == '"')
            out += "&quot;";
        else
            out.push_back(c);
    }
    return out;
}

struct ChartPoint {
    double x = 0.0;
    double y = 0.0;
};

struct ChartSeries {
    std::string name;
    std::string metric;
    std::vector<ChartPoint> points;
    bool dashed = false;
};

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;

    double place(double v, double a, double b) const {
        if (hi == lo) return (a + b) / 2.0;
        return a + (v - lo) / (hi - lo) * (b - a);
    }
};

inline AxisRange fit_range(const std::vector<ChartSeries>& series, bool along_x) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : series)
        for (const auto& p : s.points) {
            const double v = along_x ? p.x : p.y;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(lo <= hi)) return {0.0, 1.0};
    if (lo == hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double pad = (hi - lo) * 0.05;
    return {lo - pad, hi + pad};
}

// Shared frame: border, ticks, axis titles. Appends into `out` and returns
// the plot rectangle via the reference params.
inline void panel_frame(std::string& out, double px, double py, double pw, double ph,
                        const AxisRange& xr, const AxisRange& yr, const std::string& x_label,
                        const std::string& y_label, const std::string& title) {
    auto num = [](double v) { return format_metric(v); };
    out += "<rect x=\"" + num(px) + "\" y=\"" + num(py) + "\" width=\"" + num(pw) +
           "\" height=\"" + num(ph) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
        const double sx = xr.place(fx, px, px + pw);
        out += "<line x1=\"" + num(sx) + "\" y1=\"" + num(py + ph) + "\" x2=\"" + num(sx) +
               "\" y2=\"" + num(py + ph + 5.0) + "\" stroke=\"#888\"/>\n";
        out += "<text x=\"" + num(sx) + "\" y=\"" + num(py + ph + 18.0) +
               "\" font-size=\"10\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
        const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
        const double sy = yr.place(fy, py + ph, py);
        out += "<line x1=\"" + num(px - 5.0) + "\" y1=\"" + num(sy) + "\" x2=\"" + num(px) +
               "\" y2=\"" + num(sy) + "\" stroke=\"#888\"/>\n";
        out += "<text x=\"" + num(px - 8.0) + "\" y=\"" + num(sy + 3.0) +
               "\" font-size=\"10\" text-anchor=\"end\">" + num(fy) + "</text>\n";
    }
    out += "<text x=\"" + num(px + pw / 2.0) + "\" y=\"" + num(py + ph + 34.0) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + svg_escape(x_label) + "</text>\n";
    out += "<text x=\"" + num(px - 42.0) + "\" y=\"" + num(py + ph / 2.0) +
           "\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 " +
           num(px - 42.0) + " " + num(py + ph / 2.0) + ")\">" + svg_escape(y_label) +
           "</text>\n";
    out += "<text x=\"" + num(px + pw / 2.0) + "\" y=\"" + num(py - 8.0) +
           "\" font-size=\"13\" text-anchor=\"middle\">" + svg_escape(title) + "</text>\n";
}

inline void panel_lines(std::string& out, double px, double py, double pw, double ph,
                        const AxisRange& xr, const AxisRange& yr,
                        const std::vector<ChartSeries>& series) {
    auto num = [](double v) { return format_metric(v); };
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = series_color(si);
        if (s.points.size() > 1) {
            std::string pts;
            for (const auto& p : s.points) {
                pts += num(xr.place(p.x, px, px + pw));
                pts += ',';
                pts += num(yr.place(p.y, py + ph, py));
                pts += ' ';
            }
            out += "<polyline fill=\"none\" stroke=\"";
            out += color;
            out += "\" stroke-width=\"1.5\"";
            if (s.dashed) out += " stroke-dasharray=\"5 3\"";
            out += " points=\"" + pts + "\"/>\n";
        }
        for (const auto& p : s.points) {
            out += "<circle r=\"3\" fill=\"";
            out += color;
            out += "\" cx=\"" + num(xr.place(p.x, px, px + pw)) + "\" cy=\"" +
                   num(yr.place(p.y, py + ph, py)) + "\" data-series=\"" +
                   svg_escape(s.name) + "\" data-metric=\"" + svg_escape(s.metric) +
                   "\" data-x=\"" + num(p.x) + "\" data-y=\"" + num(p.y) + "\"/>\n";
        }
    }
}

inline void panel_legend(std::string& out, double px, double py,
                         const std::vector<ChartSeries>& series) {
    auto num = [](double v) { return format_metric(v); };
    double y = py;
    for (std::size_t si = 0; si < series.size(); ++si) {
        out += "<line x1=\"" + num(px) + "\" y1=\"" + num(y) + "\" x2=\"" + num(px + 18.0) +
               "\" y2=\"" + num(y) + "\" stroke=\"";
        out += series_color(si);
        out += "\" stroke-width=\"2\"";
        if (series[si].dashed) out += " stroke-dasharray=\"5 3\"";
        out += "/>\n";
        out += "<text x=\"" + num(px + 22.0) + "\" y=\"" + num(y + 3.0) +
               "\" font-size=\"10\">" + svg_escape(series[si].name) + "</text>\n";
        y += 14.0;
    }
}

inline std::string svg_document(double width, double height, const std::string& body) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + format_metric(width) +
           " " + format_metric(height) + "\" width=\"" + format_metric(width) + "\" height=\"" +
           format_metric(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n" +
           body + "</svg>\n";
}

inline std::string series_label(const MetricsRow& r) { return r.method + "/" + r.loss_mode; }

}  // namespace detail

// Retrained accuracy against remaining weight fraction, one line per
// method/loss pair. Points come from the pre-prune boundary rows plus the
// final-state row, which is exactly the post-retraining sequence.
inline std::string render_accuracy_chart(const std::vector<MetricsRow>& rows) {
    std::map<std::string, detail::ChartSeries> by_series;
    for (const auto& r : rows) {
        if (r.split != "pre_prune" && r.split != "final") continue;
        auto& s = by_series[detail::series_label(r)];
        s.name = detail::series_label(r);
        s.metric = "accuracy";
        s.points.push_back({r.remaining_fraction, r.accuracy});
    }
    std::vector<detail::ChartSeries> series;
    for (auto& [name, s] : by_series) {
        std::sort(s.points.begin(), s.points.end(),
                  [](const auto& a, const auto& b) { return a.x > b.x; });
        series.push_back(std::move(s));
    }
    const double W = 720, H = 480, px = 70, py = 40, pw = 560, ph = 380;
    detail::AxisRange xr = detail::fit_range(series, true);
    detail::AxisRange yr = detail::fit_range(series, false);
    std::string body;
    detail::panel_frame(body, px, py, pw, ph, xr, yr, "remaining weight fraction",
                        "dev accuracy", "Accuracy under iterative pruning");
    detail::panel_lines(body, px, py, pw, ph, xr, yr, series);
    detail::panel_legend(body, px + pw + 6.0, py + 10.0, series);
    return detail::svg_document(W, H, body);
}

// Epochs needed to regain 95% of the post-prune accuracy drop, bars per step.
inline std::string render_recovery_chart(const std::vector<MetricsRow>& rows) {
    std::map<std::string, std::map<std::size_t, double>> by_series;
    std::size_t max_step = 0;
    double max_val = 1.0;
    for (const auto& r : rows) {
        if (r.split != "post_retrain" || !r.recovery_epochs) continue;
        by_series[detail::series_label(r)][r.step] = static_cast<double>(*r.recovery_epochs);
        max_step = std::max(max_step, r.step);
        max_val = std::max(max_val, static_cast<double>(*r.recovery_epochs));
    }
    const double W = 720, H = 480, px = 70, py = 40, pw = 560, ph = 380;
    detail::AxisRange xr{-0.5, static_cast<double>(max_step) + 0.5};
    detail::AxisRange yr{0.0, max_val * 1.05};
    std::string body;
    detail::panel_frame(body, px, py, pw, ph, xr, yr, "prune step", "recovery epochs",
                        "Recovery cost per prune step");
    auto num = [](double v) { return format_metric(v); };
    const std::size_t n_series = by_series.size();
    const double group = pw / (static_cast<double>(max_step) + 1.0);
    const double bar = n_series ? group * 0.8 / static_cast<double>(n_series) : group;
    std::size_t si = 0;
    std::vector<detail::ChartSeries> legend;
    for (const auto& [name, vals] : by_series) {
        for (const auto& [step, v] : vals) {
            const double cx = xr.place(static_cast<double>(step), px, px + pw);
            const double x0 =
                cx - group * 0.4 + bar * static_cast<double>(si);
            const double y1 = yr.place(v, py + ph, py);
            body += "<rect fill=\"";
            body += detail::series_color(si);
            body += "\" x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(bar) +
                    "\" height=\"" + num(py + ph - y1) + "\" data-series=\"" +
                    detail::svg_escape(name) + "\" data-metric=\"recovery_epochs\" data-x=\"" +
                    num(static_cast<double>(step)) + "\" data-y=\"" + num(v) + "\"/>\n";
        }
        detail::ChartSeries s;
        s.name = name;
        legend.push_back(s);
        ++si;
    }
    detail::panel_legend(body, px + pw + 6.0, py + 10.0, legend);
    return detail::svg_document(W, H, body);
}

// Information metrics per step: estimated MI between student and teacher
// representations on top, class separability below.
inline std::string render_information_chart(const std::vector<MetricsRow>& rows) {
    std::map<std::string, detail::ChartSeries> knn, binned, snr_series;
    for (const auto& r : rows) {
        if (r.split != "post_prune" && r.split != "final") continue;
        const std::string name = detail::series_label(r);
        const double step = static_cast<double>(r.step) + (r.split == "final" ? 1.0 : 0.0);
        if (r.mi_knn) {
            auto& s = knn[name];
            s.name = name;
            s.metric = "mi_knn";
            s.points.push_back({step, *r.mi_knn});
        }
        if (r.mi_binned_avg) {
            auto& s = binned[name];
            s.name = name + " (binned)";
            s.metric = "mi_binned_avg";
            s.dashed = true;
            s.points.push_back({step, *r.mi_binned_avg});
        }
        if (r.snr) {
            auto& s = snr_series[name];
            s.name = name;
            s.metric = "snr";
            s.points.push_back({step, *r.snr});
        }
    }
    std::vector<detail::ChartSeries> mi_all, snr_all;
    for (auto& [k, s] : knn) mi_all.push_back(std::move(s));
    for (auto& [k, s] : binned) mi_all.push_back(std::move(s));
    for (auto& [k, s] : snr_series) snr_all.push_back(std::move(s));

    const double W = 720, H = 640;
    const double px = 70, pw = 500;
    std::string body;
    {
        detail::AxisRange xr = detail::fit_range(mi_all, true);
        detail::AxisRange yr = detail::fit_range(mi_all, false);
        detail::panel_frame(body, px, 40, pw, 220, xr, yr, "prune step", "MI (nats)",
                            "Student-teacher mutual information");
        detail::panel_lines(body, px, 40, pw, 220, xr, yr, mi_all);
        detail::panel_legend(body, px + pw + 6.0, 50.0, mi_all);
    }
    {
        detail::AxisRange xr = detail::fit_range(snr_all, true);
        detail::AxisRange yr = detail::fit_range(snr_all, false);
        detail::panel_frame(body, px, 360, pw, 220, xr, yr, "prune step", "SNR",
                            "Class separability");
        detail::panel_lines(body, px, 360, pw, 220, xr, yr, snr_all);
        detail::panel_legend(body, px + pw + 6.0, 370.0, snr_all);
    }
    return detail::svg_document(W, H, body);
}

// Render all three charts; nothing touches the filesystem until every chart
// has been built, so a bad input leaves no partial output.
inline ReportPaths write_report(const std::vector<MetricsRow>& rows,
                                const std::string& out_dir) {
    if (rows.empty())
        throw ValueError("report: no data rows; refusing to write empty charts");
    const std::string accuracy = render_accuracy_chart(rows);
    const std::string recovery = render_recovery_chart(rows);
    const std::string information = render_information_chart(rows);

    ReportPaths paths;
    paths.accuracy_chart = out_dir + "/accuracy_vs_remaining.svg";
    paths.recovery_chart = out_dir + "/recovery_per_step.svg";
    paths.information_chart = out_dir + "/information_per_step.svg";
    const std::pair<const std::string*, const std::string*> files[] = {
        {&paths.accuracy_chart, &accuracy},
        {&paths.recovery_chart, &recovery},
        {&paths.information_chart, &information},
    };
    for (const auto& [path, content] : files) {
        std::ofstream out(*path);
        if (!out) throw IoError("cannot write " + *path);
        out << *content;
        if (!out) throw IoError("write failed for " + *path);
    }
    return paths;
}

}  // namespace sdplab
