#include "maskmatch/eval/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"

namespace maskmatch::eval {

namespace fs = std::filesystem;

namespace {

std::string or_dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string from_dash(const std::string& s) { return s == "-" ? std::string() : s; }

double need_double(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) {
        throw DataError("metrics file lacks '" + key + "'");
    }
    const auto v = parse_double(it->second);
    if (!v) {
        throw DataError("metrics file: bad value for '" + key + "'");
    }
    return *v;
}

std::size_t need_count(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    const auto v = it == kv.end() ? std::nullopt : parse_int(it->second);
    if (!v || *v < 0) {
        throw DataError("metrics file: bad or missing '" + key + "'");
    }
    return static_cast<std::size_t>(*v);
}

}  // namespace

std::string serialize_metrics(const MetricReport& r) {
    std::ostringstream out;
    out << "dataset_id=" << or_dash(r.provenance.dataset_id) << '\n';
    out << "model_id=" << or_dash(r.provenance.model_id) << '\n';
    out << "tap=" << or_dash(r.provenance.tap) << '\n';
    out << "pair_list=" << or_dash(r.provenance.pair_list_id) << '\n';
    out << "seed=" << r.provenance.seed << '\n';
    out << "eer=" << format_double(r.eer) << '\n';
    out << "eer_threshold_low=" << format_double(r.eer_threshold_low) << '\n';
    out << "eer_threshold_high=" << format_double(r.eer_threshold_high) << '\n';
    out << "frr100=" << format_double(r.frr100) << '\n';
    out << "frr100_feasible=" << (r.frr100_feasible ? 1 : 0) << '\n';
    out << "auc=" << format_double(r.auc) << '\n';
    out << "n_authentic=" << r.n_authentic << '\n';
    out << "n_imposter=" << r.n_imposter << '\n';
    return out.str();
}

MetricReport parse_metrics(std::string_view text) {
    std::map<std::string, std::string> kv;
    for (const auto& raw : split(text, '\n')) {
        const std::string line = trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw DataError("metrics file: expected key=value, found '" + line + "'");
        }
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    MetricReport r;
    r.provenance.dataset_id = from_dash(kv["dataset_id"]);
    r.provenance.model_id = from_dash(kv["model_id"]);
    r.provenance.tap = from_dash(kv["tap"]);
    r.provenance.pair_list_id = from_dash(kv["pair_list"]);
    r.provenance.seed = static_cast<std::uint64_t>(need_count(kv, "seed"));
    r.eer = need_double(kv, "eer");
    r.eer_threshold_low = need_double(kv, "eer_threshold_low");
    r.eer_threshold_high = need_double(kv, "eer_threshold_high");
    r.frr100 = need_double(kv, "frr100");
    r.frr100_feasible = need_count(kv, "frr100_feasible") != 0;
    r.auc = need_double(kv, "auc");
    r.n_authentic = need_count(kv, "n_authentic");
    r.n_imposter = need_count(kv, "n_imposter");
    return r;
}

std::string serialize_curve(const std::vector<CurvePoint>& curve) {
    std::string out = "threshold,far,frr\n";
    for (const auto& p : curve) {
        out += format_double(p.threshold) + "," + format_double(p.far) + "," + format_double(p.frr) + "\n";
    }
    return out;
}

std::string report_stem(const Provenance& p) {
    std::string stem = or_dash(p.dataset_id) + "__" + or_dash(p.model_id) + "__" + or_dash(p.tap);
    for (char& c : stem) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
            c = '_';
        }
    }
    return stem;
}

namespace {

struct Canvas {
    cv::Mat image;
    cv::Rect plot;

    Canvas() : image(480, 640, CV_8UC3, cv::Scalar(255, 255, 255)), plot(70, 40, 540, 380) {
        cv::rectangle(image, plot, cv::Scalar(0, 0, 0), 1);
        for (int i = 0; i <= 10; ++i) {
            const int x = plot.x + plot.width * i / 10;
            const int y = plot.y + plot.height - plot.height * i / 10;
            cv::line(image, {x, plot.y}, {x, plot.y + plot.height}, cv::Scalar(225, 225, 225), 1);
            cv::line(image, {plot.x, y}, {plot.x + plot.width, y}, cv::Scalar(225, 225, 225), 1);
            if (i % 2 == 0) {
                std::ostringstream label;
                label << std::fixed << std::setprecision(1) << i / 10.0;
                cv::putText(image, label.str(), {x - 10, plot.y + plot.height + 18}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                            cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
                cv::putText(image, label.str(), {plot.x - 32, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                            cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
            }
        }
        cv::rectangle(image, plot, cv::Scalar(0, 0, 0), 1);
    }

    cv::Point at(double fx, double fy) const {
        fx = std::clamp(fx, 0.0, 1.0);
        fy = std::clamp(fy, 0.0, 1.0);
        return {plot.x + static_cast<int>(std::lround(fx * plot.width)),
                plot.y + plot.height - static_cast<int>(std::lround(fy * plot.height))};
    }

    void polyline(const std::vector<cv::Point>& pts, cv::Scalar color) {
        if (pts.size() >= 2) {
            cv::polylines(image, pts, false, color, 2, cv::LINE_AA);
        }
    }

    void text(const std::string& s, cv::Point p, cv::Scalar color = cv::Scalar(0, 0, 0), double scale = 0.5) {
        cv::putText(image, s, p, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
    }

    void save(const fs::path& path) const {
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        if (!cv::imwrite(path.string(), image)) {
            throw DataError("cannot write plot " + path.string());
        }
    }
};

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

}  // namespace

void plot_far_frr(const MetricReport& report, const fs::path& path) {
    Canvas c;
    // Thresholds are mapped onto [0, 1] from the curve's own range.
    double lo = 0.0, hi = 1.0;
    if (!report.curve.empty()) {
        lo = std::min(0.0, report.curve.front().threshold);
        hi = std::max(1.0, report.curve.back().threshold);
    }
    const auto x_of = [&](double t) { return (t - lo) / (hi - lo); };
    std::vector<cv::Point> far, frr;
    for (std::size_t k = 0; k < report.curve.size(); ++k) {
        const auto& p = report.curve[k];
        // Step functions: values hold until the next threshold.
        if (k > 0) {
            const auto& prev = report.curve[k - 1];
            far.push_back(c.at(x_of(p.threshold), prev.far));
            frr.push_back(c.at(x_of(p.threshold), prev.frr));
        }
        far.push_back(c.at(x_of(p.threshold), p.far));
        frr.push_back(c.at(x_of(p.threshold), p.frr));
    }
    c.polyline(far, cv::Scalar(40, 40, 220));
    c.polyline(frr, cv::Scalar(200, 90, 20));
    if (!report.curve.empty()) {
        const double mid = (report.eer_threshold_low + report.eer_threshold_high) / 2.0;
        cv::circle(c.image, c.at(x_of(mid), report.eer), 4, cv::Scalar(0, 0, 0), -1, cv::LINE_AA);
    }
    c.text("FAR", {c.plot.x + c.plot.width - 90, c.plot.y + 20}, cv::Scalar(40, 40, 220));
    c.text("FRR", {c.plot.x + c.plot.width - 45, c.plot.y + 20}, cv::Scalar(200, 90, 20));
    c.text("threshold", {c.plot.x + c.plot.width / 2 - 30, c.plot.y + c.plot.height + 36});
    c.text(report_stem(report.provenance) + "  EER " + fixed(report.eer, 4), {c.plot.x, 28});
    c.save(path);
}

void plot_roc(const MetricReport& report, const fs::path& path) {
    Canvas c;
    cv::line(c.image, c.at(0, 0), c.at(1, 1), cv::Scalar(180, 180, 180), 1, cv::LINE_AA);
    std::vector<cv::Point> roc;
    for (auto it = report.curve.rbegin(); it != report.curve.rend(); ++it) {
        roc.push_back(c.at(it->far, 1.0 - it->frr));
    }
    c.polyline(roc, cv::Scalar(30, 140, 30));
    c.text("FPR", {c.plot.x + c.plot.width / 2 - 10, c.plot.y + c.plot.height + 36});
    c.text("TPR", {8, c.plot.y + c.plot.height / 2});
    c.text(report_stem(report.provenance) + "  AUC " + fixed(report.auc, 4), {c.plot.x, 28});
    c.save(path);
}

ReportFiles emit_report(const MetricReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    const std::string stem = report_stem(report.provenance);
    ReportFiles files{dir / (stem + ".metrics"), dir / (stem + ".curve.csv"), dir / (stem + ".far_frr.png"),
                      dir / (stem + ".roc.png")};
    write_text_file(files.metrics, serialize_metrics(report));
    write_text_file(files.curve, serialize_curve(report.curve));
    plot_far_frr(report, files.far_frr_plot);
    plot_roc(report, files.roc_plot);
    return files;
}

void ResultTable::set(const std::string& dataset, const std::string& model, double value) {
    if (std::find(models.begin(), models.end(), model) == models.end()) {
        models.push_back(model);
    }
    cells[dataset][model] = value;
}

std::vector<std::string> ResultTable::datasets() const {
    std::vector<std::string> out;
    for (const auto& [d, row] : cells) {
        out.push_back(d);
    }
    return out;
}

std::string render_table_csv(const ResultTable& t) {
    std::vector<std::string> header{"dataset"};
    header.insert(header.end(), t.models.begin(), t.models.end());
    std::string out = csv_join(header) + "\n";
    for (const auto& [dataset, row] : t.cells) {
        std::vector<std::string> fields{dataset};
        for (const auto& m : t.models) {
            const auto it = row.find(m);
            fields.push_back(it == row.end() ? std::string() : format_double(it->second));
        }
        out += csv_join(fields) + "\n";
    }
    return out;
}

std::string render_table_markdown(const ResultTable& t) {
    std::string out = "| Dataset |";
    for (const auto& m : t.models) {
        out += " " + m + " |";
    }
    out += "\n|---|";
    for (std::size_t i = 0; i < t.models.size(); ++i) {
        out += "---|";
    }
    out += "\n";
    for (const auto& [dataset, row] : t.cells) {
        out += "| " + dataset + " |";
        for (const auto& m : t.models) {
            const auto it = row.find(m);
            out += " " + (it == row.end() ? std::string("-") : fixed(it->second, 6)) + " |";
        }
        out += "\n";
    }
    return out;
}

}  // namespace maskmatch::eval
