#include "maskmatch/geometry/face_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <opencv2/imgproc.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/geometry/hull.hpp"

namespace maskmatch::geometry {

cv::Mat to_bgr(const cv::Mat& image) {
    if (image.empty()) {
        throw DataError("empty image");
    }
    cv::Mat src = image;
    if (src.depth() != CV_8U) {
        src.convertTo(src, CV_8U);
    }
    switch (src.channels()) {
        case 1: {
            cv::Mat out;
            cv::cvtColor(src, out, cv::COLOR_GRAY2BGR);
            return out;
        }
        case 3:
            return src;
        case 4: {
            cv::Mat out;
            cv::cvtColor(src, out, cv::COLOR_BGRA2BGR);
            return out;
        }
        default:
            throw DataError("unsupported channel count " + std::to_string(src.channels()));
    }
}

FaceBox detect_primary_face(const FaceDetector& detector, const cv::Mat& image) {
    const cv::Mat bgr = to_bgr(image);
    const std::vector<FaceBox> boxes = detector.detect(bgr);
    const cv::Rect2d bounds(0, 0, bgr.cols, bgr.rows);
    const FaceBox* best = nullptr;
    for (const auto& b : boxes) {
        if (b.width <= 0.0 || b.height <= 0.0 || (b.rect() & bounds).area() <= 0.0) {
            continue;
        }
        // Strict comparison keeps the first of equal-area boxes.
        if (best == nullptr || b.area() > best->area()) {
            best = &b;
        }
    }
    if (best == nullptr) {
        throw NoFaceFound();
    }
    return *best;
}

LandmarkSet predict_landmarks(const LandmarkPredictor& predictor, const cv::Mat& image, const FaceBox& box) {
    const cv::Mat bgr = to_bgr(image);
    if (box.width < 2.0 || box.height < 2.0) {
        throw LandmarkFailure("degenerate face box");
    }
    const cv::Rect2d bounds(0, 0, bgr.cols, bgr.rows);
    if ((box.rect() & bounds).area() <= 0.0) {
        throw LandmarkFailure("face box outside image");
    }
    LandmarkSet shape = predictor.predict(bgr, box);
    if (!shape.all_finite()) {
        throw LandmarkFailure("predictor returned non-finite points");
    }
    for (auto& p : shape.points) {
        p.x = std::clamp(p.x, 0.0, static_cast<double>(bgr.cols - 1));
        p.y = std::clamp(p.y, 0.0, static_cast<double>(bgr.rows - 1));
    }
    return shape;
}

MaskPolygon build_mask_polygon(const LandmarkSet& landmarks, std::span<const int> index_set, Rgb color) {
    if (index_set.empty()) {
        throw DomainError("mask index set is empty");
    }
    std::vector<cv::Point2d> selected;
    selected.reserve(index_set.size());
    for (int i : index_set) {
        if (i < 0 || i >= static_cast<int>(kLandmarkCount)) {
            throw DomainError("landmark index " + std::to_string(i) + " outside [0, 67]");
        }
        selected.push_back(landmarks[static_cast<std::size_t>(i)]);
    }
    std::vector<cv::Point2d> hull = convex_hull(selected);
    if (hull.size() < 3) {
        throw DegenerateHull("selected landmarks are collinear");
    }
    return {std::move(hull), color};
}

cv::Mat rasterize_polygon(cv::Size size, std::span<const cv::Point2d> polygon) {
    cv::Mat mask(size, CV_8U, cv::Scalar(0));
    if (polygon.size() < 3 || size.area() == 0) {
        return mask;
    }
    double x0 = polygon[0].x, x1 = x0, y0 = polygon[0].y, y1 = y0;
    for (const auto& p : polygon) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
    }
    const int cx0 = std::max(0, static_cast<int>(std::ceil(x0)));
    const int cx1 = std::min(size.width - 1, static_cast<int>(std::floor(x1)));
    const int cy0 = std::max(0, static_cast<int>(std::ceil(y0)));
    const int cy1 = std::min(size.height - 1, static_cast<int>(std::floor(y1)));
    const double orientation = signed_area(polygon) >= 0.0 ? 1.0 : -1.0;
    const std::size_t n = polygon.size();
    for (int y = cy0; y <= cy1; ++y) {
        auto* row = mask.ptr<std::uint8_t>(y);
        for (int x = cx0; x <= cx1; ++x) {
            const cv::Point2d p(x, y);
            bool inside = true;
            for (std::size_t i = 0; i < n && inside; ++i) {
                inside = orientation * cross(polygon[i], polygon[(i + 1) % n], p) >= 0.0;
            }
            if (inside) {
                row[x] = 255;
            }
        }
    }
    return mask;
}

cv::Mat apply_mask(const cv::Mat& image, const MaskPolygon& polygon) {
    cv::Mat out = to_bgr(image).clone();
    const cv::Mat mask = rasterize_polygon(out.size(), polygon.vertices);
    out.setTo(cv::Scalar(polygon.fill_color.b, polygon.fill_color.g, polygon.fill_color.r), mask);
    return out;
}

bool verify_maskability(const FaceDetector& detector, const cv::Mat& masked_image,
                        const LandmarkPredictor* landmark_check) {
    try {
        const FaceBox box = detect_primary_face(detector, masked_image);
        if (landmark_check != nullptr) {
            (void)predict_landmarks(*landmark_check, masked_image, box);
        }
        return true;
    } catch (const NoFaceFound&) {
        return false;
    } catch (const LandmarkFailure&) {
        return false;
    } catch (const DataError&) {
        return false;
    }
}

}  // namespace maskmatch::geometry
