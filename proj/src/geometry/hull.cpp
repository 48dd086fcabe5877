#include "maskmatch/geometry/hull.hpp"

#include <algorithm>
#include <cmath>

namespace maskmatch::geometry {

double cross(const cv::Point2d& o, const cv::Point2d& a, const cv::Point2d& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<cv::Point2d> convex_hull(std::span<const cv::Point2d> points) {
    std::vector<cv::Point2d> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const cv::Point2d& a, const cv::Point2d& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) {
        return pts;
    }
    std::vector<cv::Point2d> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) {
            --k;
        }
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = pts.size() - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) {
            --k;
        }
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double signed_area(std::span<const cv::Point2d> polygon) {
    double a = 0.0;
    for (std::size_t i = 0; i < polygon.size(); ++i) {
        const auto& p = polygon[i];
        const auto& q = polygon[(i + 1) % polygon.size()];
        a += p.x * q.y - q.x * p.y;
    }
    return a / 2.0;
}

bool is_convex(std::span<const cv::Point2d> polygon) {
    const std::size_t n = polygon.size();
    if (n < 3) {
        return false;
    }
    int sign = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = cross(polygon[i], polygon[(i + 1) % n], polygon[(i + 2) % n]);
        const int s = c > 0.0 ? 1 : (c < 0.0 ? -1 : 0);
        if (s == 0 || (sign != 0 && s != sign)) {
            return false;
        }
        sign = s;
    }
    return true;
}

bool convex_contains(std::span<const cv::Point2d> polygon, const cv::Point2d& p) {
    const std::size_t n = polygon.size();
    if (n < 3) {
        return false;
    }
    const double orientation = signed_area(polygon) >= 0.0 ? 1.0 : -1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = polygon[i];
        const auto& b = polygon[(i + 1) % n];
        const double c = orientation * cross(a, b, p);
        const double scale = std::hypot(b.x - a.x, b.y - a.y) * (std::hypot(p.x - a.x, p.y - a.y) + 1.0);
        if (c < -1e-9 * scale) {
            return false;
        }
    }
    return true;
}

}  // namespace maskmatch::geometry
