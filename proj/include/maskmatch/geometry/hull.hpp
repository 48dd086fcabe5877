#pragma once

#include <span>
#include <vector>

#include <opencv2/core.hpp>

namespace maskmatch::geometry {

double cross(const cv::Point2d& o, const cv::Point2d& a, const cv::Point2d& b);

// Andrew's monotone chain. Returns the strict hull (no collinear vertices)
// with positive signed area; fewer than three vertices means degenerate input.
std::vector<cv::Point2d> convex_hull(std::span<const cv::Point2d> points);

double signed_area(std::span<const cv::Point2d> polygon);

// True when every turn has the same strict orientation.
bool is_convex(std::span<const cv::Point2d> polygon);

// Closed containment test for a convex polygon of either orientation, with a
// relative tolerance for points that sit on an edge.
bool convex_contains(std::span<const cv::Point2d> polygon, const cv::Point2d& p);

}  // namespace maskmatch::geometry
