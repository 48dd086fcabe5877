#include "maskmatch/train/augment.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "maskmatch/common/error.hpp"

namespace maskmatch::train {

AugmentConfig augment_preset(const std::string& name) {
    if (name == "mocov2") {
        return AugmentConfig{};
    }
    if (name == "none") {
        AugmentConfig c;
        c.crop_scale_min = c.crop_scale_max = 1.0;
        c.crop_ratio_min = c.crop_ratio_max = 1.0;
        c.flip_probability = c.jitter_probability = c.grayscale_probability = c.blur_probability = 0.0;
        return c;
    }
    throw ConfigError("unknown augmentation recipe '" + name + "'");
}

namespace {

cv::Rect random_crop(const cv::Size& size, const AugmentConfig& c, Rng& rng) {
    const double area = static_cast<double>(size.area());
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(c.crop_scale_min, c.crop_scale_max);
        const double ratio = std::exp(rng.uniform(std::log(c.crop_ratio_min), std::log(c.crop_ratio_max)));
        const int w = static_cast<int>(std::lround(std::sqrt(target * ratio)));
        const int h = static_cast<int>(std::lround(std::sqrt(target / ratio)));
        if (w > 0 && h > 0 && w <= size.width && h <= size.height) {
            const int x = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size.width - w + 1)));
            const int y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(size.height - h + 1)));
            return {x, y, w, h};
        }
    }
    return {0, 0, size.width, size.height};
}

cv::Mat gray3(const cv::Mat& bgr) {
    cv::Mat gray, out;
    cv::cvtColor(bgr, gray, cv::COLOR_BGR2GRAY);
    cv::cvtColor(gray, out, cv::COLOR_GRAY2BGR);
    return out;
}

void color_jitter(cv::Mat& img, const AugmentConfig& c, Rng& rng) {
    const auto factor = [&rng](double spread) { return rng.uniform(std::max(0.0, 1.0 - spread), 1.0 + spread); };
    img *= factor(c.brightness);
    cv::Mat gray;
    cv::cvtColor(img, gray, cv::COLOR_BGR2GRAY);
    const double mean = cv::mean(gray)[0];
    const double k = factor(c.contrast);
    img = img * k + cv::Scalar::all(mean * (1.0 - k));
    const double s = factor(c.saturation);
    cv::Mat g3 = gray3(img);
    img = img * s + g3 * (1.0 - s);
    img = cv::min(cv::max(img, 0.0), 1.0);
    if (c.hue > 0.0) {
        cv::Mat hsv;
        cv::cvtColor(img, hsv, cv::COLOR_BGR2HSV);  // H in [0, 360)
        const double shift = rng.uniform(-c.hue, c.hue) * 360.0;
        for (int y = 0; y < hsv.rows; ++y) {
            auto* row = hsv.ptr<cv::Vec3f>(y);
            for (int x = 0; x < hsv.cols; ++x) {
                float h = row[x][0] + static_cast<float>(shift);
                h = std::fmod(h, 360.0f);
                row[x][0] = h < 0.0f ? h + 360.0f : h;
            }
        }
        cv::cvtColor(hsv, img, cv::COLOR_HSV2BGR);
    }
}

}  // namespace

cv::Mat augment_view(const cv::Mat& bgr, const AugmentConfig& c, int output_size, Rng& rng) {
    if (bgr.empty()) {
        throw DataError("cannot augment an empty image");
    }
    cv::Mat view;
    cv::resize(bgr(random_crop(bgr.size(), c, rng)), view, cv::Size(output_size, output_size), 0, 0,
               cv::INTER_LINEAR);
    if (rng.bernoulli(c.flip_probability)) {
        cv::flip(view, view, 1);
    }
    cv::Mat f;
    view.convertTo(f, CV_32FC3, 1.0 / 255.0);
    if (rng.bernoulli(c.jitter_probability)) {
        color_jitter(f, c, rng);
    }
    if (rng.bernoulli(c.grayscale_probability)) {
        f = gray3(f);
    }
    if (rng.bernoulli(c.blur_probability)) {
        const double sigma = rng.uniform(c.blur_sigma_min, c.blur_sigma_max);
        cv::GaussianBlur(f, f, cv::Size(0, 0), sigma);
    }
    cv::Mat out;
    f.convertTo(out, CV_8UC3, 255.0);
    return out;
}

}  // namespace maskmatch::train
