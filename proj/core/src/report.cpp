#include "camoseg/report.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace camoseg {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

double sorted_mean(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

bool metric_is_negative(const std::string& metric) {
    const std::string m = lower(metric);
    return m == "mae" || m == "m";
}

std::vector<TableRow> read_table_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::vector<TableRow> rows;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string dataset, variant, metric, value;
        if (!std::getline(ss, dataset, ',') || !std::getline(ss, variant, ',') ||
            !std::getline(ss, metric, ',') || !std::getline(ss, value)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected dataset,variant,metric,value");
        }
        if (!header_seen && lower(dataset) == "dataset") {
            header_seen = true;
            continue;
        }
        TableRow row{dataset, variant, metric, 0};
        try {
            row.value = std::stod(value);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": non-numeric value '" + value + "'");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<VariantAverages> aggregate_pn(const std::vector<TableRow>& rows) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& r : rows) {
        auto& [pos, neg] = groups[r.variant];
        (metric_is_negative(r.metric) ? neg : pos).push_back(r.value);
    }
    std::vector<VariantAverages> out;
    for (auto& [variant, vals] : groups) {
        VariantAverages a;
        a.variant = variant;
        a.positives = vals.first.size();
        a.negatives = vals.second.size();
        a.p = sorted_mean(std::move(vals.first));
        a.n = sorted_mean(std::move(vals.second));
        out.push_back(std::move(a));
    }
    return out;  // std::map iteration keeps variants sorted
}

void write_pn_csv(const std::string& path, const std::vector<VariantAverages>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "variant,p,n,positive_count,negative_count\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%zu,%zu", r.variant.c_str(), r.p, r.n,
                      r.positives, r.negatives);
        out << buf << "\n";
    }
}

namespace {

constexpr int kW = 520, kH = 360, kPad = 48;

double y_of(double value, double vmax) {
    return kH - kPad - (value / vmax) * (kH - 2 * kPad);
}

}  // namespace

void write_pn_bar_svg(const std::string& path, const std::vector<VariantAverages>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n";
    out << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n";
    if (!rows.empty()) {
        const double vmax = 1.0;
        const double slot = static_cast<double>(kW - 2 * kPad) / rows.size();
        char buf[256];
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double x0 = kPad + i * slot;
            const double yp = y_of(rows[i].p, vmax);
            const double yn = y_of(rows[i].n, vmax);
            std::snprintf(buf, sizeof(buf),
                          "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' fill='#4a7fb5'/>\n",
                          x0 + slot * 0.15, yp, slot * 0.3, (kH - kPad) - yp);
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' fill='#c45a5a'/>\n",
                          x0 + slot * 0.55, yn, slot * 0.3, (kH - kPad) - yn);
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x='%.1f' y='%d' font-size='13' text-anchor='middle'>%s</text>\n",
                          x0 + slot * 0.5, kH - kPad + 18, rows[i].variant.c_str());
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x='%.1f' y='%.1f' font-size='10' text-anchor='middle'>%.3f</text>\n",
                          x0 + slot * 0.3, yp - 4, rows[i].p);
            out << buf;
            std::snprintf(buf, sizeof(buf),
                          "<text x='%.1f' y='%.1f' font-size='10' text-anchor='middle'>%.4f</text>\n",
                          x0 + slot * 0.7, yn - 4, rows[i].n);
            out << buf;
        }
    }
    out << "<text x='" << kPad << "' y='" << kPad - 12
        << "' font-size='13'>P (blue) / N (red) per variant</text>\n</svg>\n";
}

void write_metric_lines_svg(const std::string& path, const std::vector<TableRow>& rows) {
    // Per metric: mean value across datasets for each variant (sorted).
    std::map<std::string, std::map<std::string, std::vector<double>>> by_metric;
    std::map<std::string, bool> variants;
    for (const auto& r : rows) {
        by_metric[lower(r.metric)][r.variant].push_back(r.value);
        variants[r.variant] = true;
    }
    std::vector<std::string> vnames;
    for (const auto& [v, _] : variants) vnames.push_back(v);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<line x1='" << kPad << "' y1='" << kH - kPad << "' x2='" << kW - kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n";
    out << "<line x1='" << kPad << "' y1='" << kPad << "' x2='" << kPad << "' y2='"
        << kH - kPad << "' stroke='black'/>\n";
    const char* colors[] = {"#4a7fb5", "#c45a5a", "#58a06a", "#b08b3e", "#7a5ab0", "#4aa6a6"};
    char buf[256];
    if (!vnames.empty()) {
        std::size_t series = 0;
        for (const auto& [metric, per_variant] : by_metric) {
            std::ostringstream pts;
            for (std::size_t i = 0; i < vnames.size(); ++i) {
                auto it = per_variant.find(vnames[i]);
                if (it == per_variant.end()) continue;
                const double mean = sorted_mean(it->second);
                const double x =
                    vnames.size() == 1
                        ? kW / 2.0
                        : kPad + (kW - 2.0 * kPad) * i / (vnames.size() - 1);
                pts << x << "," << y_of(mean, 1.0) << " ";
            }
            const char* color = colors[series % 6];
            out << "<polyline fill='none' stroke='" << color << "' points='" << pts.str()
                << "'/>\n";
            std::snprintf(buf, sizeof(buf),
                          "<text x='%d' y='%zu' font-size='11' fill='%s'>%s</text>\n",
                          kW - kPad + 4, kPad + series * 14, color, metric.c_str());
            out << buf;
            ++series;
        }
        for (std::size_t i = 0; i < vnames.size(); ++i) {
            const double x = vnames.size() == 1
                                 ? kW / 2.0
                                 : kPad + (kW - 2.0 * kPad) * i / (vnames.size() - 1);
            std::snprintf(buf, sizeof(buf),
                          "<text x='%.1f' y='%d' font-size='13' text-anchor='middle'>%s</text>\n",
                          x, kH - kPad + 18, vnames[i].c_str());
            out << buf;
        }
    }
    out << "</svg>\n";
}

}  // namespace camoseg
