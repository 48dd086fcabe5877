#include "maskmatch/geometry/adapters.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>
#include <opencv2/ml.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"
#include "maskmatch/geometry/synthetic_faces.hpp"

namespace maskmatch::geometry {

namespace {

constexpr const char* kHogNode = "hog_face_detector";

cv::HOGDescriptor make_hog(cv::Size window) {
    return cv::HOGDescriptor(window, cv::Size(16, 16), cv::Size(8, 8), cv::Size(8, 8), 9);
}

cv::Mat to_gray(const cv::Mat& bgr) {
    if (bgr.channels() == 1) {
        return bgr;
    }
    cv::Mat g;
    cv::cvtColor(bgr, g, cv::COLOR_BGR2GRAY);
    return g;
}

cv::Rect clip(const cv::Rect& r, cv::Size size) { return r & cv::Rect(0, 0, size.width, size.height); }

cv::Rect to_rect(const FaceBox& b) {
    return {static_cast<int>(std::lround(b.x)), static_cast<int>(std::lround(b.y)),
            static_cast<int>(std::lround(b.width)), static_cast<int>(std::lround(b.height))};
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct SampleSet {
    std::vector<std::vector<float>> features;
    std::vector<int> labels;
};

void add_sample(SampleSet& set, const cv::HOGDescriptor& hog, const cv::Mat& crop, int label) {
    if (crop.empty()) {
        return;
    }
    cv::Mat resized;
    cv::resize(to_gray(crop), resized, hog.winSize, 0, 0, cv::INTER_AREA);
    std::vector<float> d;
    hog.compute(resized, d);
    set.features.push_back(std::move(d));
    set.labels.push_back(label);
}

std::vector<float> fit_linear_svm(const SampleSet& set, double c) {
    cv::Mat x(static_cast<int>(set.features.size()), static_cast<int>(set.features.front().size()), CV_32F);
    for (int i = 0; i < x.rows; ++i) {
        std::copy(set.features[i].begin(), set.features[i].end(), x.ptr<float>(i));
    }
    cv::Mat y(set.labels, true);
    auto svm = cv::ml::SVM::create();
    svm->setType(cv::ml::SVM::C_SVC);
    svm->setKernel(cv::ml::SVM::LINEAR);
    svm->setC(c);
    svm->train(x, cv::ml::ROW_SAMPLE, y);
    const cv::Mat sv = svm->getSupportVectors();
    cv::Mat alpha, idx;
    const double rho = svm->getDecisionFunction(0, alpha, idx);
    // OpenCV's decision sign is inverted relative to the HOG detector convention.
    std::vector<float> w(static_cast<std::size_t>(sv.cols) + 1);
    for (int i = 0; i < sv.cols; ++i) {
        w[static_cast<std::size_t>(i)] = -sv.at<float>(0, i);
    }
    w.back() = static_cast<float>(rho);
    return w;
}

}  // namespace

HogFaceDetector::HogFaceDetector(std::vector<float> svm_weights, Params params)
    : params_(params), weights_(std::move(svm_weights)), hog_(make_hog(params.window)) {
    if (weights_.size() != hog_.getDescriptorSize() + 1) {
        throw ModelError("HOG detector weight length does not match the window layout");
    }
    hog_.setSVMDetector(weights_);
}

std::unique_ptr<HogFaceDetector> HogFaceDetector::load(const std::filesystem::path& path) {
    cv::FileStorage fs(path.string(), cv::FileStorage::READ);
    if (!fs.isOpened()) {
        throw DataError("cannot open detector weights " + path.string());
    }
    const cv::FileNode node = fs[kHogNode];
    if (node.empty()) {
        throw ModelError(path.string() + " is not a HOG detector file");
    }
    Params p;
    p.window = {static_cast<int>(node["window_width"]), static_cast<int>(node["window_height"])};
    p.scale_step = static_cast<double>(node["scale_step"]);
    p.hit_threshold = static_cast<double>(node["hit_threshold"]);
    p.group_threshold = static_cast<int>(node["group_threshold"]);
    p.stride = {static_cast<int>(node["stride"]), static_cast<int>(node["stride"])};
    std::vector<float> w;
    node["weights"] >> w;
    return std::make_unique<HogFaceDetector>(std::move(w), p);
}

void HogFaceDetector::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    cv::FileStorage fs(path.string(), cv::FileStorage::WRITE);
    if (!fs.isOpened()) {
        throw DataError("cannot write detector weights " + path.string());
    }
    fs << kHogNode << "{";
    fs << "window_width" << params_.window.width << "window_height" << params_.window.height;
    fs << "scale_step" << params_.scale_step << "hit_threshold" << params_.hit_threshold;
    fs << "group_threshold" << params_.group_threshold << "stride" << params_.stride.width;
    fs << "weights" << weights_;
    fs << "}";
}

std::vector<FaceBox> HogFaceDetector::detect(const cv::Mat& bgr) const {
    const cv::Mat gray = to_gray(bgr);
    if (gray.cols < params_.window.width || gray.rows < params_.window.height) {
        return {};
    }
    std::vector<cv::Rect> found;
    std::vector<double> weights;
    hog_.detectMultiScale(gray, found, weights, params_.hit_threshold, params_.stride, cv::Size(), params_.scale_step,
                          params_.group_threshold);
    std::vector<FaceBox> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        const cv::Rect r = clip(found[i], gray.size());
        if (r.area() == 0) {
            continue;
        }
        const double w = i < weights.size() ? weights[i] : 0.0;
        out.push_back({static_cast<double>(r.x), static_cast<double>(r.y), static_cast<double>(r.width),
                       static_cast<double>(r.height), logistic(w)});
    }
    return out;
}

double HogFaceDetector::window_score(const cv::Mat& bgr_crop) const {
    cv::Mat resized;
    cv::resize(to_gray(bgr_crop), resized, params_.window, 0, 0, cv::INTER_AREA);
    std::vector<float> d;
    hog_.compute(resized, d);
    double s = weights_.back();
    for (std::size_t i = 0; i < d.size(); ++i) {
        s += static_cast<double>(d[i]) * weights_[i];
    }
    return s;
}

std::unique_ptr<HogFaceDetector> train_hog_detector(const HogTrainingOptions& options) {
    Rng rng(options.seed);
    const cv::HOGDescriptor hog = make_hog(options.params.window);
    const std::vector<int> mask_indices = default_mask_indices();
    SampleSet set;
    std::vector<std::pair<cv::Mat, FaceBox>> scenes;
    for (int n = 0; n < options.face_samples; ++n) {
        const IdentityTraits id = sample_identity(rng);
        const RenderConditions cond = sample_conditions(rng);
        RenderedFace face = render_face(id, cond);
        if (rng.bernoulli(options.masked_fraction)) {
            const Rgb color{static_cast<std::uint8_t>(rng.uniform_index(256)),
                            static_cast<std::uint8_t>(rng.uniform_index(256)),
                            static_cast<std::uint8_t>(rng.uniform_index(256))};
            face.image = apply_mask(face.image, build_mask_polygon(face.landmarks, mask_indices, color));
        }
        const cv::Rect box = clip(to_rect(face.box), face.image.size());
        add_sample(set, hog, face.image(box), 1);
        cv::Mat flipped;
        cv::flip(face.image(box), flipped, 1);
        add_sample(set, hog, flipped, 1);
        for (int k = 0; k < options.negatives_per_image; ++k) {
            const int side = 16 + static_cast<int>(rng.uniform_index(100));
            const int x = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(128 - side + 1)));
            const int y = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(128 - side + 1)));
            const cv::Rect r(x, y, side, side);
            const FaceBox fb{double(x), double(y), double(side), double(side), 1.0};
            if (intersection_over_union(fb, face.box) < 0.3) {
                add_sample(set, hog, face.image(r), -1);
            }
        }
        scenes.emplace_back(face.image, face.box);
    }

    auto weights = fit_linear_svm(set, options.svm_c);
    for (int round = 0; round < options.mining_rounds; ++round) {
        cv::HOGDescriptor probe = make_hog(options.params.window);
        probe.setSVMDetector(weights);
        for (const auto& [image, box] : scenes) {
            std::vector<cv::Rect> found;
            std::vector<double> w;
            probe.detectMultiScale(to_gray(image), found, w, 0.0, options.params.stride, cv::Size(), 1.1, 0);
            for (const auto& r : found) {
                const FaceBox fb{double(r.x), double(r.y), double(r.width), double(r.height), 1.0};
                if (intersection_over_union(fb, box) < 0.3) {
                    add_sample(set, hog, image(clip(r, image.size())), -1);
                }
            }
        }
        weights = fit_linear_svm(set, options.svm_c);
    }
    return std::make_unique<HogFaceDetector>(std::move(weights), options.params);
}

CascadeFaceDetector::CascadeFaceDetector(const std::filesystem::path& path, double scale_factor, int min_neighbors)
    : scale_factor_(scale_factor), min_neighbors_(min_neighbors) {
    if (!cascade_.load(path.string()) || cascade_.empty()) {
        throw ModelError("cannot load cascade " + path.string());
    }
}

std::vector<FaceBox> CascadeFaceDetector::detect(const cv::Mat& bgr) const {
    cv::Mat gray;
    cv::equalizeHist(to_gray(bgr), gray);
    std::vector<cv::Rect> found;
    std::vector<int> levels;
    std::vector<double> weights;
    {
        const std::lock_guard lock(mutex_);
        cascade_.detectMultiScale(gray, found, levels, weights, scale_factor_, min_neighbors_, 0, cv::Size(), cv::Size(),
                                  true);
    }
    std::vector<FaceBox> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        const cv::Rect r = clip(found[i], gray.size());
        if (r.area() == 0) {
            continue;
        }
        const double w = i < weights.size() ? weights[i] : 0.0;
        out.push_back({double(r.x), double(r.y), double(r.width), double(r.height), logistic(w)});
    }
    return out;
}

std::unique_ptr<FaceDetector> load_face_detector(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw DataError("detector weights not found: " + path.string());
    }
    {
        cv::FileStorage fs(path.string(), cv::FileStorage::READ);
        if (fs.isOpened() && !fs[kHogNode].empty()) {
            fs.release();
            return HogFaceDetector::load(path);
        }
    }
    return std::make_unique<CascadeFaceDetector>(path);
}

LbfLandmarkPredictor::LbfLandmarkPredictor(const std::filesystem::path& model_path, bool symmetrize)
    : symmetrize_(symmetrize) {
    if (!std::filesystem::exists(model_path)) {
        throw DataError("landmark weights not found: " + model_path.string());
    }
    cv::face::FacemarkLBF::Params p;
    p.n_landmarks = static_cast<int>(kLandmarkCount);
    p.verbose = false;
    model_ = cv::face::FacemarkLBF::create(p);
    try {
        model_->loadModel(model_path.string());
    } catch (const cv::Exception& e) {
        throw ModelError("cannot load landmark model " + model_path.string() + ": " + e.what());
    }
}

LandmarkSet LbfLandmarkPredictor::fit_once(const cv::Mat& bgr, const cv::Rect& box) const {
    std::vector<cv::Rect> faces{box};
    std::vector<std::vector<cv::Point2f>> shapes;
    bool ok = false;
    {
        const std::lock_guard lock(mutex_);
        try {
            ok = model_->fit(bgr, faces, shapes);
        } catch (const cv::Exception& e) {
            throw LandmarkFailure(std::string("landmark fit failed: ") + e.what());
        }
    }
    if (!ok || shapes.size() != 1 || shapes[0].size() != kLandmarkCount) {
        throw LandmarkFailure("landmark fit returned no shape");
    }
    LandmarkSet out;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        out[i] = {shapes[0][i].x, shapes[0][i].y};
    }
    return out;
}

LandmarkSet LbfLandmarkPredictor::predict(const cv::Mat& bgr, const FaceBox& box) const {
    const cv::Rect r = to_rect(box);
    const LandmarkSet direct = fit_once(bgr, r);
    if (!symmetrize_) {
        return direct;
    }
    cv::Mat flipped;
    cv::flip(bgr, flipped, 1);
    const cv::Rect mirrored_box(bgr.cols - r.x - r.width, r.y, r.width, r.height);
    const LandmarkSet back = mirror_landmarks(fit_once(flipped, mirrored_box), bgr.cols);
    LandmarkSet out;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        out[i] = (direct[i] + back[i]) * 0.5;
    }
    return out;
}

namespace {

struct TrainingBox {
    cv::Rect box;
};

bool current_box(cv::InputArray, cv::OutputArray faces, void* user_data) {
    const auto* state = static_cast<const TrainingBox*>(user_data);
    std::vector<cv::Rect> v{state->box};
    cv::Mat(v).copyTo(faces);
    return true;
}

}  // namespace

void train_lbf_predictor(const LbfTrainingOptions& options, const std::filesystem::path& model_path) {
    if (model_path.has_parent_path()) {
        std::filesystem::create_directories(model_path.parent_path());
    }
    cv::face::FacemarkLBF::Params p;
    p.n_landmarks = static_cast<int>(kLandmarkCount);
    p.verbose = false;
    p.model_filename = model_path.string();
    p.stages_n = options.stages;
    p.tree_n = options.trees;
    p.tree_depth = options.tree_depth;
    p.initShape_n = 5;
    p.seed = static_cast<unsigned int>(options.seed & 0xffffffffu);
    auto model = cv::face::FacemarkLBF::create(p);
    TrainingBox state;
    model->setFaceDetector(&current_box, &state);

    Rng rng(options.seed);
    for (int n = 0; n < options.samples; ++n) {
        const RenderedFace face = render_face(sample_identity(rng), sample_conditions(rng));
        std::vector<cv::Point2f> pts;
        pts.reserve(kLandmarkCount);
        for (const auto& q : face.landmarks.points) {
            pts.emplace_back(static_cast<float>(q.x), static_cast<float>(q.y));
        }
        state.box = clip(to_rect(face.box), face.image.size());
        if (!model->addTrainingSample(face.image, pts)) {
            throw ModelError("landmark trainer rejected a sample");
        }
    }
    model->training();
    if (!std::filesystem::exists(model_path)) {
        throw ModelError("landmark trainer did not write " + model_path.string());
    }
}

}  // namespace maskmatch::geometry
