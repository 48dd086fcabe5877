#include "maskmatch/geometry/masking.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/geometry/adapters.hpp"

namespace maskmatch::geometry {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve_against(const fs::path& p, const fs::path& base) {
    if (p.empty() || p.is_absolute() || base.empty()) {
        return p;
    }
    return base / p;
}

}  // namespace

MaskSettings parse_mask_settings(std::string_view json_text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mask settings: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("mask settings must be a JSON object");
    }
    MaskSettings s;
    try {
        if (doc.contains("index_set")) {
            s.index_set = doc.at("index_set").get<std::vector<int>>();
        }
        if (doc.contains("fill_color")) {
            const auto c = doc.at("fill_color").get<std::vector<int>>();
            if (c.size() != 3 || std::any_of(c.begin(), c.end(), [](int v) { return v < 0 || v > 255; })) {
                throw ConfigError("fill_color must be three integers in [0, 255]");
            }
            s.fill_color = {static_cast<std::uint8_t>(c[0]), static_cast<std::uint8_t>(c[1]),
                            static_cast<std::uint8_t>(c[2])};
        }
        if (doc.contains("detector_weights")) {
            s.detector_weights = resolve_against(doc.at("detector_weights").get<std::string>(), base_dir);
        }
        if (doc.contains("landmark_weights")) {
            s.landmark_weights = resolve_against(doc.at("landmark_weights").get<std::string>(), base_dir);
        }
        s.validate_landmarks = doc.value("validate_landmarks", false);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mask settings: ") + e.what());
    }
    if (s.index_set.empty()) {
        throw ConfigError("index_set must not be empty");
    }
    for (int i : s.index_set) {
        if (i < 0 || i >= static_cast<int>(kLandmarkCount)) {
            throw ConfigError("index_set entry " + std::to_string(i) + " outside [0, 67]");
        }
    }
    return s;
}

MaskSettings load_mask_settings(const fs::path& path) {
    return parse_mask_settings(read_text_file(path), path.parent_path());
}

std::string serialize_mask_settings(const MaskSettings& s) {
    json doc;
    doc["index_set"] = s.index_set;
    doc["fill_color"] = {s.fill_color.r, s.fill_color.g, s.fill_color.b};
    doc["detector_weights"] = s.detector_weights.string();
    doc["landmark_weights"] = s.landmark_weights.string();
    doc["validate_landmarks"] = s.validate_landmarks;
    return doc.dump(2) + "\n";
}

MaskedFace mask_image(const cv::Mat& image, const MaskSettings& settings, const FaceDetector& detector,
                      const LandmarkPredictor& predictor) {
    const cv::Mat bgr = to_bgr(image);
    MaskedFace out;
    out.box = detect_primary_face(detector, bgr);
    out.landmarks = predict_landmarks(predictor, bgr, out.box);
    out.polygon = build_mask_polygon(out.landmarks, settings.index_set, settings.fill_color);
    out.image = apply_mask(bgr, out.polygon);
    return out;
}

std::string_view to_string(MaskStatus s) {
    switch (s) {
        case MaskStatus::masked:
            return "masked";
        case MaskStatus::discarded_no_face:
            return "discarded_no_face";
        case MaskStatus::discarded_io:
            return "discarded_io";
    }
    return "masked";
}

std::optional<MaskStatus> parse_mask_status(std::string_view s) {
    for (auto v : {MaskStatus::masked, MaskStatus::discarded_no_face, MaskStatus::discarded_io}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    return std::nullopt;
}

std::size_t MaskingReport::io_failures() const {
    return static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), [](const MaskOutcome& o) {
        return o.status == MaskStatus::discarded_io;
    }));
}

namespace {

MaskOutcome mask_one(const data::DatasetIndex& index, const data::ImageRecord& rec, const MaskSettings& settings,
                     const FaceDetector& detector, const LandmarkPredictor& predictor, const fs::path& out_root) {
    MaskOutcome o;
    o.image_id = rec.image_id;
    cv::Mat image;
    try {
        image = cv::imread(index.resolve(rec).string(), cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception&) {
        image.release();
    }
    if (image.empty()) {
        o.status = MaskStatus::discarded_io;
        o.reason = "unreadable image " + index.resolve(rec).string();
        return o;
    }
    MaskedFace masked;
    try {
        masked = mask_image(image, settings, detector, predictor);
    } catch (const NoFaceFound&) {
        o.status = MaskStatus::discarded_no_face;
        o.reason = "no face detected";
        return o;
    } catch (const LandmarkFailure& e) {
        o.status = MaskStatus::discarded_no_face;
        o.reason = std::string("landmarks: ") + e.what();
        return o;
    } catch (const DegenerateHull& e) {
        o.status = MaskStatus::discarded_no_face;
        o.reason = std::string("hull: ") + e.what();
        return o;
    }
    const LandmarkPredictor* check = settings.validate_landmarks ? &predictor : nullptr;
    if (!verify_maskability(detector, masked.image, check)) {
        o.status = MaskStatus::discarded_no_face;
        o.reason = "face not detectable after masking";
        return o;
    }
    const fs::path rel = fs::path(rec.identity_id) / (rec.image_id + ".png");
    const fs::path dst = out_root / rel;
    bool written = false;
    try {
        fs::create_directories(dst.parent_path());
        written = cv::imwrite(dst.string(), masked.image);
    } catch (const std::exception&) {
        written = false;
    }
    if (!written) {
        o.status = MaskStatus::discarded_io;
        o.reason = "cannot write " + dst.string();
        return o;
    }
    o.status = MaskStatus::masked;
    o.output_path = rel.generic_string();
    o.polygon = std::move(masked.polygon);
    return o;
}

}  // namespace

MaskingResult mask_dataset(const data::DatasetIndex& index, const MaskSettings& settings,
                           const FaceDetector& detector, const LandmarkPredictor& predictor,
                           const MaskRunOptions& options) {
    std::vector<const data::ImageRecord*> inputs;
    for (const auto& rec : index.records()) {
        if (rec.variant == data::Variant::unmasked) {
            inputs.push_back(&rec);
        }
    }
    std::vector<MaskOutcome> outcomes(inputs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            outcomes[i] = mask_one(index, *inputs[i], settings, detector, predictor, options.output_root);
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(inputs.size())));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
    }

    MaskingResult result;
    MaskingReport& report = result.report;
    report.input_count = inputs.size();
    std::vector<data::ImageRecord> masked_records;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const MaskOutcome& o = outcomes[i];
        if (o.status == MaskStatus::masked) {
            ++report.masked_count;
            masked_records.push_back({inputs[i]->image_id + "_masked", inputs[i]->identity_id,
                                      inputs[i]->dataset_id, data::Variant::masked, o.output_path});
        } else {
            ++report.discarded_count;
            report.discarded_ids.push_back(o.image_id);
        }
    }
    report.outcomes = std::move(outcomes);
    result.masked = data::DatasetIndex::from_records(std::move(masked_records), options.output_root);
    return result;
}

MaskingResult mask_dataset(const data::DatasetIndex& index, const MaskSettings& settings,
                           const MaskRunOptions& options) {
    if (settings.detector_weights.empty() || settings.landmark_weights.empty()) {
        throw ConfigError("mask settings must name detector_weights and landmark_weights");
    }
    const auto detector = load_face_detector(settings.detector_weights);
    const LbfLandmarkPredictor predictor(settings.landmark_weights);
    return mask_dataset(index, settings, *detector, predictor, options);
}

std::string serialize_masking_report(const MaskingReport& report) {
    std::string out = "# input=" + std::to_string(report.input_count) + " masked=" +
                      std::to_string(report.masked_count) + " discarded=" + std::to_string(report.discarded_count) +
                      "\n";
    out += "image_id,status,output_path,reason\n";
    for (const auto& o : report.outcomes) {
        out += csv_join({o.image_id, std::string(to_string(o.status)), o.output_path, o.reason});
        out += '\n';
    }
    return out;
}

MaskingReport parse_masking_report(std::string_view text) {
    CsvDocument doc;
    try {
        doc = parse_csv(text);
    } catch (const LineError& e) {
        throw DataError("masking report: " + std::string(e.what()));
    }
    if (!doc.has_header || doc.header.fields != std::vector<std::string>{"image_id", "status", "output_path", "reason"}) {
        throw DataError("masking report: unexpected header");
    }
    MaskingReport r;
    for (const auto& row : doc.rows) {
        if (row.fields.size() != 4) {
            throw DataError("masking report: expected 4 fields (line " + std::to_string(row.line) + ")");
        }
        const auto status = parse_mask_status(row.fields[1]);
        if (!status) {
            throw DataError("masking report: bad status (line " + std::to_string(row.line) + ")");
        }
        MaskOutcome o{row.fields[0], *status, row.fields[2], row.fields[3], std::nullopt};
        ++r.input_count;
        if (o.status == MaskStatus::masked) {
            ++r.masked_count;
        } else {
            ++r.discarded_count;
            r.discarded_ids.push_back(o.image_id);
        }
        r.outcomes.push_back(std::move(o));
    }
    return r;
}

}  // namespace maskmatch::geometry
