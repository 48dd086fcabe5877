#include "maskmatch/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maskmatch/common/error.hpp"

namespace maskmatch::eval {

namespace {

void check(const ScoreSet& s) {
    if (s.authentic.empty() || s.imposter.empty()) {
        throw EmptyPartition();
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(s.authentic.begin(), s.authentic.end(), finite) ||
        !std::all_of(s.imposter.begin(), s.imposter.end(), finite)) {
        throw DomainError("scores must be finite");
    }
}

}  // namespace

std::vector<CurvePoint> far_frr_curve(const ScoreSet& scores) {
    check(scores);
    std::vector<double> auth = scores.authentic;
    std::vector<double> imp = scores.imposter;
    std::sort(auth.begin(), auth.end());
    std::sort(imp.begin(), imp.end());
    std::vector<double> thresholds;
    thresholds.reserve(auth.size() + imp.size() + 2);
    std::merge(auth.begin(), auth.end(), imp.begin(), imp.end(), std::back_inserter(thresholds));
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    const double inf = std::numeric_limits<double>::infinity();
    thresholds.insert(thresholds.begin(), std::nextafter(thresholds.front(), -inf));
    thresholds.push_back(std::nextafter(thresholds.back(), inf));

    const double na = static_cast<double>(auth.size());
    const double ni = static_cast<double>(imp.size());
    std::vector<CurvePoint> curve;
    curve.reserve(thresholds.size());
    std::size_t a_below = 0, i_below = 0;
    for (double t : thresholds) {
        while (a_below < auth.size() && auth[a_below] < t) {
            ++a_below;
        }
        while (i_below < imp.size() && imp[i_below] < t) {
            ++i_below;
        }
        curve.push_back({t, static_cast<double>(imp.size() - i_below) / ni, static_cast<double>(a_below) / na});
    }
    return curve;
}

EerResult eer_detail(const std::vector<CurvePoint>& curve) {
    if (curve.empty()) {
        throw EmptyPartition();
    }
    for (std::size_t k = 0; k < curve.size(); ++k) {
        const double d = curve[k].far - curve[k].frr;
        if (d > 0.0) {
            continue;
        }
        if (d == 0.0 || k == 0) {
            return {curve[k].far, curve[k], curve[k]};
        }
        const CurvePoint& p = curve[k - 1];
        const CurvePoint& q = curve[k];
        const double dp = p.far - p.frr;
        const double alpha = dp / (dp - d);
        const double e = p.far + alpha * (q.far - p.far);
        return {e, p, q};
    }
    return {curve.back().far, curve.back(), curve.back()};
}

EerResult eer_detail(const ScoreSet& scores) { return eer_detail(far_frr_curve(scores)); }

double eer(const ScoreSet& scores) { return eer_detail(scores).eer; }

Frr100Result frr100_detail(const std::vector<CurvePoint>& curve) {
    if (curve.empty()) {
        throw EmptyPartition();
    }
    Frr100Result r{1.0, false, curve.back().threshold};
    // The last point is the all-reject sentinel.
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
        if (curve[k].far < 0.01 && (!r.feasible || curve[k].frr < r.frr)) {
            r = {curve[k].frr, true, curve[k].threshold};
        }
    }
    return r;
}

Frr100Result frr100_detail(const ScoreSet& scores) { return frr100_detail(far_frr_curve(scores)); }

double frr100(const ScoreSet& scores) { return frr100_detail(scores).frr; }

double roc_auc(const std::vector<CurvePoint>& curve) {
    double area = 0.0;
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
        const double width = curve[k].far - curve[k + 1].far;
        const double tpr_a = 1.0 - curve[k].frr;
        const double tpr_b = 1.0 - curve[k + 1].frr;
        area += width * (tpr_a + tpr_b) / 2.0;
    }
    return area;
}

double roc_auc(const ScoreSet& scores) { return roc_auc(far_frr_curve(scores)); }

MetricReport compute_report(const ScoreSet& scores) {
    MetricReport r;
    r.provenance = scores.provenance;
    r.curve = far_frr_curve(scores);
    const EerResult e = eer_detail(r.curve);
    r.eer = e.eer;
    r.eer_threshold_low = e.lower.threshold;
    r.eer_threshold_high = e.upper.threshold;
    const Frr100Result f = frr100_detail(r.curve);
    r.frr100 = f.frr;
    r.frr100_feasible = f.feasible;
    r.auc = roc_auc(r.curve);
    r.n_authentic = scores.authentic.size();
    r.n_imposter = scores.imposter.size();
    return r;
}

}  // namespace maskmatch::eval
