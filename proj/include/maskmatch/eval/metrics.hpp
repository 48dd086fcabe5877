#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace maskmatch::eval {

struct Provenance {
    std::string dataset_id;
    std::string model_id;
    std::string tap;
    std::string pair_list_id;
    std::uint64_t seed = 0;

    bool operator==(const Provenance&) const = default;
};

// Labelled similarity scores of one model on one pair list.
struct ScoreSet {
    std::vector<double> authentic;
    std::vector<double> imposter;
    Provenance provenance;
};

// Operating point: accept iff score >= threshold.
struct CurvePoint {
    double threshold = 0.0;
    double far = 0.0;
    double frr = 0.0;
};

// Thresholds are a sentinel below the lowest score, every distinct score in
// increasing order, and a sentinel above the highest score. Throws
// EmptyPartition (or DomainError for non-finite scores).
std::vector<CurvePoint> far_frr_curve(const ScoreSet& scores);

struct EerResult {
    double eer = 0.0;
    // Bracketing grid points around the sign change of FAR - FRR; equal when
    // the grid hits FAR == FRR exactly.
    CurvePoint lower;
    CurvePoint upper;
};

EerResult eer_detail(const std::vector<CurvePoint>& curve);
EerResult eer_detail(const ScoreSet& scores);
double eer(const ScoreSet& scores);

struct Frr100Result {
    double frr = 1.0;
    bool feasible = false;  // false when only the all-reject sentinel keeps FAR < 1%
    double threshold = 0.0;
};

Frr100Result frr100_detail(const std::vector<CurvePoint>& curve);
Frr100Result frr100_detail(const ScoreSet& scores);
double frr100(const ScoreSet& scores);

// Trapezoidal area under (FAR, 1 - FRR); equals the Mann-Whitney statistic
// with ties counted as one half.
double roc_auc(const std::vector<CurvePoint>& curve);
double roc_auc(const ScoreSet& scores);

struct MetricReport {
    Provenance provenance;
    double eer = 0.0;
    double eer_threshold_low = 0.0;
    double eer_threshold_high = 0.0;
    double frr100 = 1.0;
    bool frr100_feasible = false;
    double auc = 0.0;
    std::size_t n_authentic = 0;
    std::size_t n_imposter = 0;
    std::vector<CurvePoint> curve;
};

MetricReport compute_report(const ScoreSet& scores);

}  // namespace maskmatch::eval
