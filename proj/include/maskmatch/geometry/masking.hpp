#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <opencv2/core.hpp>

#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/geometry/face_geometry.hpp"

namespace maskmatch::geometry {

struct MaskSettings {
    std::vector<int> index_set = default_mask_indices();
    Rgb fill_color = kDefaultMaskColor;
    std::filesystem::path detector_weights;
    std::filesystem::path landmark_weights;
    // Also require a finite landmark fit on the masked output.
    bool validate_landmarks = false;
};

// JSON document with keys index_set, fill_color, detector_weights,
// landmark_weights and validate_landmarks. Relative weight paths are resolved
// against `base_dir`. Throws ConfigError.
MaskSettings parse_mask_settings(std::string_view json_text, const std::filesystem::path& base_dir = {});
MaskSettings load_mask_settings(const std::filesystem::path& path);
std::string serialize_mask_settings(const MaskSettings& settings);

struct MaskedFace {
    cv::Mat image;
    FaceBox box;
    LandmarkSet landmarks;
    MaskPolygon polygon;
};

// Detect, landmark, build the hull and paint it. Throws NoFaceFound,
// LandmarkFailure or DegenerateHull.
MaskedFace mask_image(const cv::Mat& image, const MaskSettings& settings, const FaceDetector& detector,
                      const LandmarkPredictor& predictor);

enum class MaskStatus { masked, discarded_no_face, discarded_io };
std::string_view to_string(MaskStatus s);
std::optional<MaskStatus> parse_mask_status(std::string_view s);

struct MaskOutcome {
    std::string image_id;
    MaskStatus status = MaskStatus::masked;
    std::string output_path;  // relative to the output root; empty when discarded
    std::string reason;
    std::optional<MaskPolygon> polygon;  // in-memory only
};

struct MaskingReport {
    std::size_t input_count = 0;
    std::size_t masked_count = 0;
    std::size_t discarded_count = 0;
    std::vector<std::string> discarded_ids;
    std::vector<MaskOutcome> outcomes;  // input order

    std::size_t io_failures() const;
};

struct MaskingResult {
    data::DatasetIndex masked;
    MaskingReport report;
};

struct MaskRunOptions {
    std::filesystem::path output_root;
    unsigned workers = 1;
};

// Masks every unmasked record of `index`. Outputs go to
// <output_root>/<identity_id>/<image_id>.png and are indexed as the masked
// variant under the same identity and dataset, with image id
// "<image_id>_masked". Masked input records are ignored.
MaskingResult mask_dataset(const data::DatasetIndex& index, const MaskSettings& settings,
                           const FaceDetector& detector, const LandmarkPredictor& predictor,
                           const MaskRunOptions& options);

// Loads the detector and predictor named in the settings.
MaskingResult mask_dataset(const data::DatasetIndex& index, const MaskSettings& settings,
                           const MaskRunOptions& options);

// Line-delimited report: "# input=N masked=M discarded=D" then
// image_id,status,output_path,reason.
std::string serialize_masking_report(const MaskingReport& report);
MaskingReport parse_masking_report(std::string_view text);

}  // namespace maskmatch::geometry
