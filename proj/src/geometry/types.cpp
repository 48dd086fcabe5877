#include "maskmatch/geometry/types.hpp"

#include <algorithm>
#include <cmath>

namespace maskmatch::geometry {

double intersection_over_union(const FaceBox& a, const FaceBox& b) {
    const double inter = (a.rect() & b.rect()).area();
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

bool LandmarkSet::all_finite() const {
    return std::all_of(points.begin(), points.end(),
                       [](const cv::Point2d& p) { return std::isfinite(p.x) && std::isfinite(p.y); });
}

const std::array<int, kLandmarkCount>& mirror_permutation() {
    static const std::array<int, kLandmarkCount> perm = [] {
        std::array<int, kLandmarkCount> p{};
        for (int i = 0; i <= 16; ++i) {
            p[i] = 16 - i;
        }
        for (int i = 17; i <= 26; ++i) {
            p[i] = 43 - i;
        }
        for (int i = 27; i <= 30; ++i) {
            p[i] = i;
        }
        for (int i = 31; i <= 35; ++i) {
            p[i] = 66 - i;
        }
        const int eye_a[6] = {36, 37, 38, 39, 40, 41};
        const int eye_b[6] = {45, 44, 43, 42, 47, 46};
        for (int i = 0; i < 6; ++i) {
            p[eye_a[i]] = eye_b[i];
            p[eye_b[i]] = eye_a[i];
        }
        for (int i = 48; i <= 54; ++i) {
            p[i] = 102 - i;
        }
        for (int i = 55; i <= 59; ++i) {
            p[i] = 114 - i;
        }
        for (int i = 60; i <= 64; ++i) {
            p[i] = 124 - i;
        }
        for (int i = 65; i <= 67; ++i) {
            p[i] = 132 - i;
        }
        return p;
    }();
    return perm;
}

LandmarkSet mirror_landmarks(const LandmarkSet& landmarks, int image_width) {
    const auto& perm = mirror_permutation();
    LandmarkSet out;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        const cv::Point2d& src = landmarks[static_cast<std::size_t>(perm[i])];
        out[i] = {static_cast<double>(image_width - 1) - src.x, src.y};
    }
    return out;
}

std::vector<int> default_mask_indices() {
    std::vector<int> idx;
    for (int i = 2; i <= 14; ++i) {
        idx.push_back(i);
    }
    idx.push_back(28);
    return idx;
}

FaceBox face_box_from_landmarks(const LandmarkSet& landmarks) {
    double x0 = landmarks[0].x, x1 = x0, y0 = landmarks[0].y, y1 = y0;
    for (const auto& p : landmarks.points) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const double h = y1 - y0;
    y0 -= 0.25 * h;
    return {x0, y0, x1 - x0, y1 - y0, 1.0};
}

}  // namespace maskmatch::geometry
