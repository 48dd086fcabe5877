#pragma once

#include <string>

#include <opencv2/core.hpp>

#include "maskmatch/common/rng.hpp"

namespace maskmatch::train {

// Stochastic view recipe for instance discrimination. Probabilities are per
// view; ranges are inclusive.
struct AugmentConfig {
    double crop_scale_min = 0.2;
    double crop_scale_max = 1.0;
    double crop_ratio_min = 3.0 / 4.0;
    double crop_ratio_max = 4.0 / 3.0;
    double flip_probability = 0.5;
    double jitter_probability = 0.8;
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double hue = 0.1;
    double grayscale_probability = 0.2;
    double blur_probability = 0.5;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;

    bool operator==(const AugmentConfig&) const = default;
};

// Named presets: "mocov2" (crop, flip, colour jitter, grayscale, blur) and
// "none". Throws ConfigError for other names.
AugmentConfig augment_preset(const std::string& name);

// One random view of a BGR image, resized to output_size x output_size.
cv::Mat augment_view(const cv::Mat& bgr, const AugmentConfig& config, int output_size, Rng& rng);

}  // namespace maskmatch::train
