#pragma once

#include <string>
#include <vector>

namespace camoseg {

// Long-form metric table: one value per (dataset, variant, metric). This is
// the input format of the report command; metric names are matched
// case-insensitively and "mae"/"m" count as negative (lower is better),
// everything else as positive.
struct TableRow {
    std::string dataset;
    std::string variant;
    std::string metric;
    double value = 0;
};

std::vector<TableRow> read_table_csv(const std::string& path);

struct VariantAverages {
    std::string variant;
    double p = 0;  // mean of positive metric values
    double n = 0;  // mean of negative metric values
    std::size_t positives = 0, negatives = 0;
};

bool metric_is_negative(const std::string& metric);

// Mean of positive metrics (P) and negative metrics (N) per variant,
// independent of row order.
std::vector<VariantAverages> aggregate_pn(const std::vector<TableRow>& rows);

void write_pn_csv(const std::string& path, const std::vector<VariantAverages>& rows);

// Small dependency-free plots.
void write_pn_bar_svg(const std::string& path, const std::vector<VariantAverages>& rows);
void write_metric_lines_svg(const std::string& path, const std::vector<TableRow>& rows);

}  // namespace camoseg
