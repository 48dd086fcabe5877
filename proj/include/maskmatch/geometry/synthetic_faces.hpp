#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>

#include "maskmatch/common/rng.hpp"
#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/geometry/types.hpp"

namespace maskmatch::geometry {

// Procedural frontal-face renderer with exact 68-point ground truth. It backs
// the bundled smoke corpus and the toy training corpora; nothing here is meant
// to look photographic, only to exercise detection, landmarking and identity
// matching with controllable identity and nuisance factors.

// Stable per-identity appearance.
struct IdentityTraits {
    cv::Vec3d skin_bgr;
    cv::Vec3d hair_bgr;
    cv::Vec3d iris_bgr;
    cv::Vec3d lip_bgr;
    double face_width = 1.0;   // horizontal stretch of the unit face
    double face_height = 1.0;  // vertical stretch
    double eye_spacing = 1.0;
    double eye_size = 1.0;
    double brow_raise = 0.0;   // unit-face offset, negative is higher
    double brow_thickness = 0.07;
    double hairline = -0.66;   // unit-face y of the fringe
    int hair_style = 0;        // 0 short, 1 long, 2 side parting, 3 bald
    bool glasses = false;
};

// Per-image nuisance factors.
struct RenderConditions {
    double rotation = 0.0;      // radians
    double scale = 38.0;        // unit-face half-width in output pixels
    cv::Point2d center{64.0, 68.0};
    double brightness = 1.0;
    double light_angle = 0.0;   // direction of the lighting gradient
    double light_strength = 0.1;
    double mouth_open = 0.0;
    double noise_sigma = 3.0;
    std::uint64_t background_seed = 0;
};

IdentityTraits sample_identity(Rng& rng);

// Conditions centred on a canvas of the given size.
RenderConditions sample_conditions(Rng& rng, cv::Size canvas = {128, 128});

// Mean shape in the unit-face frame (x right, y down, half-width 1).
const LandmarkSet& unit_face_shape();

struct RenderedFace {
    cv::Mat image;  // CV_8UC3 BGR
    LandmarkSet landmarks;
    FaceBox box;
};

RenderedFace render_face(const IdentityTraits& identity, const RenderConditions& conditions,
                         cv::Size canvas = {128, 128});

// Draws a face onto an existing BGR canvas (no background, no noise) and
// returns its landmarks; used to compose multi-face scenes.
LandmarkSet draw_face(cv::Mat& canvas, const IdentityTraits& identity, const RenderConditions& conditions);

// Textured background of the given size.
cv::Mat render_background(cv::Size size, std::uint64_t seed);

struct SyntheticCorpusOptions {
    std::string dataset_id = "synthetic";
    std::size_t identities = 20;
    std::size_t images_per_identity = 6;
    std::uint64_t seed = 1;
    cv::Size canvas{128, 128};
};

// Renders unmasked PNGs to <root>/<identity_id>/<k>.png and returns their
// index (root-relative paths). Identity ids are "<dataset_id>_<n>"; traits
// come from (seed, n) only, so corpora with different seeds or dataset ids
// share no identity.
data::DatasetIndex write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpusOptions& options);

}  // namespace maskmatch::geometry
