#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

namespace maskmatch::geometry {

struct Rgb {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;

    cv::Vec3b bgr() const { return {b, g, r}; }
    bool operator==(const Rgb&) const = default;
};

// Axis-aligned detection in pixel coordinates.
struct FaceBox {
    double x = 0.0;
    double y = 0.0;
    double width = 0.0;
    double height = 0.0;
    double confidence = 0.0;

    double area() const { return width * height; }
    cv::Rect2d rect() const { return {x, y, width, height}; }
    cv::Point2d center() const { return {x + width / 2.0, y + height / 2.0}; }
};

double intersection_over_union(const FaceBox& a, const FaceBox& b);

inline constexpr std::size_t kLandmarkCount = 68;

// 68 points in the iBUG 300-W order: jaw 0-16, brows 17-26, nose 27-35,
// eyes 36-47, mouth 48-67. Left/right refer to the image, not the subject.
struct LandmarkSet {
    std::array<cv::Point2d, kLandmarkCount> points{};

    const cv::Point2d& operator[](std::size_t i) const { return points[i]; }
    cv::Point2d& operator[](std::size_t i) { return points[i]; }
    bool all_finite() const;
};

// Index of each point's mirror partner under a horizontal flip.
const std::array<int, kLandmarkCount>& mirror_permutation();

// Landmarks of the horizontally flipped image of width `image_width`.
LandmarkSet mirror_landmarks(const LandmarkSet& landmarks, int image_width);

// Jaw points 2-14 plus nose-bridge point 28: a nose-to-chin cover.
std::vector<int> default_mask_indices();
inline constexpr Rgb kDefaultMaskColor{110, 140, 200};

// Bounding box of the landmarks, extended upward to include the forehead.
FaceBox face_box_from_landmarks(const LandmarkSet& landmarks);

// Convex polygon in pixel coordinates with counter-clockwise vertex order
// (positive shoelace area in the x-right, y-down pixel frame).
struct MaskPolygon {
    std::vector<cv::Point2d> vertices;
    Rgb fill_color = kDefaultMaskColor;
};

}  // namespace maskmatch::geometry
