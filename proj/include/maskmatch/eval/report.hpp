#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "maskmatch/eval/metrics.hpp"

namespace maskmatch::eval {

// key=value lines: dataset_id, model_id, tap, pair_list, seed, eer,
// eer_threshold_low, eer_threshold_high, frr100, frr100_feasible, auc,
// n_authentic, n_imposter. Doubles round-trip exactly.
std::string serialize_metrics(const MetricReport& report);
MetricReport parse_metrics(std::string_view text);

std::string serialize_curve(const std::vector<CurvePoint>& curve);

struct ReportFiles {
    std::filesystem::path metrics;
    std::filesystem::path curve;
    std::filesystem::path far_frr_plot;
    std::filesystem::path roc_plot;
};

// "<dataset>__<model>__<tap>" with unsafe characters replaced.
std::string report_stem(const Provenance& p);

// Writes the metrics file, the curve CSV, and two PNG plots (FAR/FRR against
// threshold, and ROC) into `dir`.
ReportFiles emit_report(const MetricReport& report, const std::filesystem::path& dir);

void plot_far_frr(const MetricReport& report, const std::filesystem::path& path);
void plot_roc(const MetricReport& report, const std::filesystem::path& path);

// Dataset-by-model table of one metric.
struct ResultTable {
    std::string metric;
    std::vector<std::string> models;  // column order
    std::map<std::string, std::map<std::string, double>> cells;  // dataset -> model -> value

    void set(const std::string& dataset, const std::string& model, double value);
    std::vector<std::string> datasets() const;
};

std::string render_table_csv(const ResultTable& table);
std::string render_table_markdown(const ResultTable& table);

}  // namespace maskmatch::eval
