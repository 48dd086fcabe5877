#include <filesystem>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/geometry/adapters.hpp"
#include "maskmatch/geometry/masking.hpp"
#include "maskmatch/geometry/synthetic_faces.hpp"
#include "support/oracles.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::geometry;
namespace fs = std::filesystem;

namespace {

struct Models {
    std::unique_ptr<FaceDetector> detector = load_face_detector(testkit::asset_dir() / "hog.yml");
    LbfLandmarkPredictor predictor{testkit::asset_dir() / "lbf.yaml"};
};

Models& models() {
    static Models m;
    return m;
}

}  // namespace

TEST(Detector, FindsRenderedFaces) {
    Rng rng(404);
    int hits = 0;
    for (int k = 0; k < 30; ++k) {
        const auto face = render_face(sample_identity(rng), sample_conditions(rng));
        const auto found = detect_primary_face(*models().detector, face.image);
        hits += intersection_over_union(found, face.box) > 0.4;
    }
    EXPECT_GE(hits, 27);
}

TEST(Detector, BlankImageHasNoFace) {
    const cv::Mat blank(128, 128, CV_8UC3, cv::Scalar(128, 128, 128));
    EXPECT_THROW(detect_primary_face(*models().detector, blank), NoFaceFound);
}

TEST(Landmarks, PredictionTracksGroundTruth) {
    Rng rng(505);
    double total = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto face = render_face(sample_identity(rng), sample_conditions(rng));
        const auto lm = predict_landmarks(models().predictor, face.image, face.box);
        double err = 0.0;
        for (std::size_t i = 0; i < kLandmarkCount; ++i) err += cv::norm(lm[i] - face.landmarks[i]);
        total += err / double(kLandmarkCount) / face.box.width;
    }
    EXPECT_LT(total / 20.0, 0.08);
}

TEST(Landmarks, SymmetrisedPredictorIsMirrorEquivariant) {
    Rng rng(606);
    const auto face = render_face(sample_identity(rng), sample_conditions(rng));
    cv::Mat flipped;
    cv::flip(face.image, flipped, 1);
    FaceBox fbox = face.box;
    fbox.x = 128.0 - face.box.x - face.box.width;
    const auto direct = predict_landmarks(models().predictor, face.image, face.box);
    const auto mirrored = mirror_landmarks(predict_landmarks(models().predictor, flipped, fbox), 128);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        EXPECT_NEAR(direct[i].x, mirrored[i].x, 1e-6);
        EXPECT_NEAR(direct[i].y, mirrored[i].y, 1e-6);
    }
}

TEST(Landmarks, BoxesOutsideTheImageFail) {
    const cv::Mat img(64, 64, CV_8UC3, cv::Scalar(0, 0, 0));
    EXPECT_THROW(predict_landmarks(models().predictor, img, {100, 100, 20, 20}), LandmarkFailure);
    EXPECT_THROW(predict_landmarks(models().predictor, img, {10, 10, 1, 20}), LandmarkFailure);
}

TEST(MaskImage, PolygonIsConvexAndContainsItsLandmarks) {
    Rng rng(707);
    MaskSettings settings;
    for (int k = 0; k < 10; ++k) {
        const auto face = render_face(sample_identity(rng), sample_conditions(rng));
        const auto out = mask_image(face.image, settings, *models().detector, models().predictor);
        EXPECT_TRUE(testkit::oracle_is_convex(out.polygon.vertices));
        for (int i : settings.index_set) {
            EXPECT_TRUE(testkit::oracle_contains(out.polygon.vertices, out.landmarks[std::size_t(i)], 1e-6));
        }
        EXPECT_EQ(out.image.size(), face.image.size());
    }
}

TEST(MaskDataset, CountsBalanceAndFailuresAreClassified) {
    const auto dir = testkit::fresh_dir("mask_dataset");
    SyntheticCorpusOptions o;
    o.identities = 4;
    o.images_per_identity = 3;
    auto index = write_synthetic_corpus(dir / "in", o);
    std::vector<data::ImageRecord> records(index.records().begin(), index.records().end());
    cv::imwrite((dir / "in" / "blank.png").string(), cv::Mat(128, 128, CV_8UC3, cv::Scalar(90, 90, 90)));
    records.push_back({"blank", "nobody", o.dataset_id, data::Variant::unmasked, "blank.png"});
    records.push_back({"gone", "nobody", o.dataset_id, data::Variant::unmasked, "missing.png"});
    index = data::DatasetIndex::from_records(records, dir / "in");

    const auto result = mask_dataset(index, MaskSettings{}, *models().detector, models().predictor,
                                     {dir / "out", 2});
    const auto& r = result.report;
    EXPECT_EQ(r.input_count, 14u);
    EXPECT_EQ(r.masked_count + r.discarded_count, r.input_count);
    EXPECT_EQ(result.masked.size(), r.masked_count);
    EXPECT_EQ(r.io_failures(), 1u);
    EXPECT_EQ(r.outcomes[12].status, MaskStatus::discarded_no_face);
    EXPECT_EQ(r.outcomes[13].status, MaskStatus::discarded_io);
    for (const auto& rec : result.masked.records()) {
        EXPECT_EQ(rec.variant, data::Variant::masked);
        EXPECT_EQ(rec.image_id, index.find(rec.image_id.substr(0, rec.image_id.size() - 7))->image_id + "_masked");
        EXPECT_TRUE(fs::exists(result.masked.resolve(rec)));
    }

    const auto back = parse_masking_report(serialize_masking_report(r));
    EXPECT_EQ(back.input_count, r.input_count);
    EXPECT_EQ(back.masked_count, r.masked_count);
    EXPECT_EQ(back.discarded_ids, r.discarded_ids);
}

TEST(MaskSettings, ParsesAndResolvesRelativeWeights) {
    const auto s = parse_mask_settings(R"({"index_set":[2,8,14,28],"fill_color":[1,2,3],
        "detector_weights":"w/hog.yml","landmark_weights":"/abs/lbf.yaml","validate_landmarks":true})",
                                       "/base");
    EXPECT_EQ(s.index_set, (std::vector<int>{2, 8, 14, 28}));
    EXPECT_EQ(s.fill_color, (Rgb{1, 2, 3}));
    EXPECT_EQ(s.detector_weights, fs::path("/base/w/hog.yml"));
    EXPECT_EQ(s.landmark_weights, fs::path("/abs/lbf.yaml"));
    EXPECT_TRUE(s.validate_landmarks);
    EXPECT_EQ(parse_mask_settings(serialize_mask_settings(s)).index_set, s.index_set);
    EXPECT_THROW(parse_mask_settings(R"({"index_set":[70]})"), ConfigError);
    EXPECT_THROW(parse_mask_settings(R"({"fill_color":[1,2]})"), ConfigError);
    EXPECT_THROW(parse_mask_settings("[1]"), ConfigError);
}
