#pragma once

#include <span>
#include <vector>

#include <opencv2/core.hpp>

#include "maskmatch/geometry/types.hpp"

namespace maskmatch::geometry {

// Pluggable face detector. Implementations must be safe to call concurrently.
class FaceDetector {
public:
    virtual ~FaceDetector() = default;
    // Detections on a 3-channel BGR image, in any order.
    virtual std::vector<FaceBox> detect(const cv::Mat& bgr) const = 0;
};

// Pluggable 68-point landmark predictor. Implementations must be safe to call
// concurrently and throw LandmarkFailure when they cannot produce a shape.
class LandmarkPredictor {
public:
    virtual ~LandmarkPredictor() = default;
    virtual LandmarkSet predict(const cv::Mat& bgr, const FaceBox& box) const = 0;
};

// 1-channel input is replicated to 3 channels and alpha is dropped.
cv::Mat to_bgr(const cv::Mat& image);

// Largest-area detection; throws NoFaceFound.
FaceBox detect_primary_face(const FaceDetector& detector, const cv::Mat& image);

// Validates the box, runs the predictor and clamps points to the image.
// Throws LandmarkFailure for boxes narrower than 2 px or outside the image.
LandmarkSet predict_landmarks(const LandmarkPredictor& predictor, const cv::Mat& image, const FaceBox& box);

// Convex hull of the selected landmarks. Throws DomainError for an empty or
// out-of-range index set and DegenerateHull when the points are collinear.
MaskPolygon build_mask_polygon(const LandmarkSet& landmarks, std::span<const int> index_set, Rgb color);

// CV_8U mask (255 inside) of the pixels whose centres lie in the closed polygon.
cv::Mat rasterize_polygon(cv::Size size, std::span<const cv::Point2d> polygon);

// Fills the rasterised polygon with the polygon colour; every other pixel is
// copied unchanged. Parts of the polygon outside the image are clipped.
cv::Mat apply_mask(const cv::Mat& image, const MaskPolygon& polygon);

// A masked image stays usable when the detector still finds a face on it.
// With a landmark predictor, the predicted shape must also be finite.
bool verify_maskability(const FaceDetector& detector, const cv::Mat& masked_image,
                        const LandmarkPredictor* landmark_check = nullptr);

}  // namespace maskmatch::geometry
