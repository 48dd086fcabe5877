#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/face.hpp>
#include <opencv2/objdetect.hpp>

#include "maskmatch/geometry/face_geometry.hpp"

namespace maskmatch::geometry {

// Sliding-window HOG + linear SVM detector. Weights live in an OpenCV YAML
// file under the node "hog_face_detector".
class HogFaceDetector final : public FaceDetector {
public:
    struct Params {
        cv::Size window{48, 48};
        double scale_step = 1.08;
        double hit_threshold = 0.0;
        int group_threshold = 2;
        cv::Size stride{4, 4};
    };

    HogFaceDetector(std::vector<float> svm_weights, Params params);

    static std::unique_ptr<HogFaceDetector> load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::vector<FaceBox> detect(const cv::Mat& bgr) const override;

    const Params& params() const { return params_; }
    // Raw window score (SVM margin) of a crop resized to the window.
    double window_score(const cv::Mat& bgr_crop) const;

private:
    Params params_;
    std::vector<float> weights_;
    cv::HOGDescriptor hog_;
};

struct HogTrainingOptions {
    int face_samples = 400;
    double masked_fraction = 0.5;
    int negatives_per_image = 6;
    double svm_c = 0.01;
    int mining_rounds = 1;
    std::uint64_t seed = 7;
    HogFaceDetector::Params params;
};

// Trains on procedurally rendered faces; a share of the positives carries a
// randomly coloured default-index mask so masked faces stay detectable.
std::unique_ptr<HogFaceDetector> train_hog_detector(const HogTrainingOptions& options);

// OpenCV cascade (Haar or LBP XML). CascadeClassifier is not reentrant, so
// calls are serialised.
class CascadeFaceDetector final : public FaceDetector {
public:
    explicit CascadeFaceDetector(const std::filesystem::path& path, double scale_factor = 1.1, int min_neighbors = 3);
    std::vector<FaceBox> detect(const cv::Mat& bgr) const override;

private:
    mutable std::mutex mutex_;
    mutable cv::CascadeClassifier cascade_;
    double scale_factor_;
    int min_neighbors_;
};

// Picks the adapter from the file contents (HOG YAML or cascade XML).
std::unique_ptr<FaceDetector> load_face_detector(const std::filesystem::path& path);

// FacemarkLBF regressor. With `symmetrize`, the prediction is averaged with
// the mirrored prediction on the flipped image, which makes the output
// exactly equivariant under horizontal flips.
class LbfLandmarkPredictor final : public LandmarkPredictor {
public:
    explicit LbfLandmarkPredictor(const std::filesystem::path& model_path, bool symmetrize = true);
    LandmarkSet predict(const cv::Mat& bgr, const FaceBox& box) const override;

private:
    LandmarkSet fit_once(const cv::Mat& bgr, const cv::Rect& box) const;

    mutable std::mutex mutex_;
    cv::Ptr<cv::face::FacemarkLBF> model_;
    bool symmetrize_;
};

struct LbfTrainingOptions {
    int samples = 80;
    int stages = 3;
    int trees = 4;
    int tree_depth = 4;
    std::uint64_t seed = 11;
};

// Trains on rendered faces with exact landmarks and writes the model file.
void train_lbf_predictor(const LbfTrainingOptions& options, const std::filesystem::path& model_path);

}  // namespace maskmatch::geometry
