#include "maskmatch/geometry/synthetic_faces.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "maskmatch/common/error.hpp"

namespace maskmatch::geometry {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSupersample = 2;

LandmarkSet build_unit_shape() {
    LandmarkSet s;
    for (int i = 0; i < 17; ++i) {
        const double t = i / 16.0;
        const double a = (1.06 - 1.12 * t) * kPi;
        const double sn = std::sin(a);
        const double narrow = 1.0 - 0.22 * std::max(0.0, sn) * std::max(0.0, sn);
        s[i] = {std::cos(a) * narrow, 0.05 + sn * 1.1};
    }
    const double brow_x[5] = {-0.78, -0.64, -0.48, -0.32, -0.17};
    const double brow_y[5] = {-0.42, -0.50, -0.53, -0.51, -0.46};
    for (int i = 0; i < 5; ++i) {
        s[17 + i] = {brow_x[i], brow_y[i]};
        s[26 - i] = {-brow_x[i], brow_y[i]};
    }
    for (int i = 0; i < 4; ++i) {
        s[27 + i] = {0.0, -0.33 + i * 0.19};
    }
    const double nose_x[5] = {-0.20, -0.10, 0.0, 0.10, 0.20};
    const double nose_y[5] = {0.30, 0.34, 0.36, 0.34, 0.30};
    for (int i = 0; i < 5; ++i) {
        s[31 + i] = {nose_x[i], nose_y[i]};
    }
    const cv::Point2d left_eye[6] = {{-0.60, -0.24}, {-0.49, -0.30}, {-0.36, -0.30},
                                     {-0.25, -0.23}, {-0.36, -0.19}, {-0.49, -0.19}};
    const int partner[6] = {3, 2, 1, 0, 5, 4};
    for (int i = 0; i < 6; ++i) {
        s[36 + i] = left_eye[i];
        s[42 + i] = {-left_eye[partner[i]].x, left_eye[partner[i]].y};
    }
    const cv::Point2d outer_lip[12] = {{-0.36, 0.62}, {-0.24, 0.56}, {-0.10, 0.53}, {0.0, 0.55},
                                       {0.10, 0.53},  {0.24, 0.56},  {0.36, 0.62},  {0.24, 0.70},
                                       {0.10, 0.74},  {0.0, 0.75},   {-0.10, 0.74}, {-0.24, 0.70}};
    for (int i = 0; i < 12; ++i) {
        s[48 + i] = outer_lip[i];
    }
    const cv::Point2d inner_lip[8] = {{-0.31, 0.62}, {-0.10, 0.59}, {0.0, 0.60},  {0.10, 0.59},
                                      {0.31, 0.62},  {0.10, 0.65},  {0.0, 0.66},  {-0.10, 0.65}};
    for (int i = 0; i < 8; ++i) {
        s[60 + i] = inner_lip[i];
    }
    return s;
}

cv::Scalar to_scalar(const cv::Vec3d& v, double f = 1.0) {
    return {std::clamp(v[0] * f, 0.0, 255.0), std::clamp(v[1] * f, 0.0, 255.0), std::clamp(v[2] * f, 0.0, 255.0)};
}

// Similarity transform of the unit face into canvas pixels.
struct Placement {
    double scale;
    double rotation;
    cv::Point2d center;
    double width;
    double height;

    cv::Point2d operator()(cv::Point2d p) const {
        p.x *= width;
        p.y *= height;
        const double c = std::cos(rotation), s = std::sin(rotation);
        return {center.x + scale * (c * p.x - s * p.y), center.y + scale * (s * p.x + c * p.y)};
    }

    cv::Point pixel(cv::Point2d p) const {
        const cv::Point2d q = (*this)(p);
        return {static_cast<int>(std::lround(q.x)), static_cast<int>(std::lround(q.y))};
    }

    double degrees() const { return rotation * 180.0 / kPi; }
};

std::vector<cv::Point> to_pixels(const std::vector<cv::Point2d>& pts) {
    std::vector<cv::Point> out;
    out.reserve(pts.size());
    for (const auto& p : pts) {
        out.emplace_back(static_cast<int>(std::lround(p.x)), static_cast<int>(std::lround(p.y)));
    }
    return out;
}

// Identity-specific deformation of the unit shape (still in unit coordinates).
LandmarkSet deform_shape(const IdentityTraits& id, double mouth_open) {
    LandmarkSet s = unit_face_shape();
    for (int e = 0; e < 2; ++e) {
        const int first = 36 + 6 * e;
        cv::Point2d c(0, 0);
        for (int i = 0; i < 6; ++i) {
            c += s[first + i];
        }
        c *= 1.0 / 6.0;
        const cv::Point2d moved(c.x * id.eye_spacing, c.y);
        for (int i = 0; i < 6; ++i) {
            s[first + i] = moved + (s[first + i] - c) * id.eye_size;
        }
    }
    for (int i = 17; i <= 26; ++i) {
        s[i].x *= 0.5 + 0.5 * id.eye_spacing;
        s[i].y += id.brow_raise;
    }
    for (int i : {56, 57, 58, 65, 66, 67}) {
        s[i].y += mouth_open;
    }
    for (int i : {55, 59}) {
        s[i].y += 0.6 * mouth_open;
    }
    return s;
}

}  // namespace

const LandmarkSet& unit_face_shape() {
    static const LandmarkSet shape = build_unit_shape();
    return shape;
}

IdentityTraits sample_identity(Rng& rng) {
    IdentityTraits t;
    // Skin tones along a light-to-dark axis with a warm/cool tint.
    const double tone = rng.uniform(0.45, 1.0);
    const double warmth = rng.uniform(-1.0, 1.0);
    t.skin_bgr = {(150 + 20 * warmth) * tone + 10, (175 + 5 * warmth) * tone + 10, 225 * tone + 15};
    const double hair_level = rng.uniform(0.0, 1.0);
    if (hair_level < 0.55) {
        t.hair_bgr = {rng.uniform(10, 40), rng.uniform(10, 45), rng.uniform(15, 60)};
    } else if (hair_level < 0.8) {
        t.hair_bgr = {rng.uniform(20, 60), rng.uniform(50, 100), rng.uniform(90, 160)};
    } else if (hair_level < 0.92) {
        t.hair_bgr = {rng.uniform(60, 110), rng.uniform(140, 190), rng.uniform(180, 230)};
    } else {
        const double g = rng.uniform(140, 210);
        t.hair_bgr = {g, g, g};
    }
    t.iris_bgr = {rng.uniform(10, 160), rng.uniform(20, 130), rng.uniform(10, 110)};
    t.lip_bgr = {rng.uniform(70, 110), rng.uniform(70, 100), rng.uniform(140, 200)};
    t.face_width = rng.uniform(0.90, 1.10);
    t.face_height = rng.uniform(0.94, 1.08);
    t.eye_spacing = rng.uniform(0.88, 1.12);
    t.eye_size = rng.uniform(0.85, 1.15);
    t.brow_raise = rng.uniform(-0.05, 0.05);
    t.brow_thickness = rng.uniform(0.045, 0.10);
    t.hairline = rng.uniform(-0.78, -0.62);
    t.hair_style = static_cast<int>(rng.uniform_index(4));
    t.glasses = rng.bernoulli(0.25);
    return t;
}

RenderConditions sample_conditions(Rng& rng, cv::Size canvas) {
    RenderConditions c;
    const double unit = std::min(canvas.width, canvas.height) / 128.0;
    c.rotation = rng.uniform(-0.10, 0.10);
    c.scale = rng.uniform(35.0, 41.0) * unit;
    c.center = {canvas.width / 2.0 + rng.uniform(-5.0, 5.0) * unit,
                canvas.height / 2.0 + rng.uniform(0.0, 8.0) * unit};
    c.brightness = rng.uniform(0.85, 1.12);
    c.light_angle = rng.uniform(0.0, 2.0 * kPi);
    c.light_strength = rng.uniform(0.0, 0.18);
    c.mouth_open = rng.bernoulli(0.3) ? rng.uniform(0.0, 0.05) : 0.0;
    c.noise_sigma = rng.uniform(2.0, 5.0);
    c.background_seed = rng.next_u64();
    return c;
}

cv::Mat render_background(cv::Size size, std::uint64_t seed) {
    Rng rng(seed);
    cv::Mat img(size, CV_8UC3,
                cv::Scalar(rng.uniform(30, 230), rng.uniform(30, 230), rng.uniform(30, 230)));
    const int cells = 6 + static_cast<int>(rng.uniform_index(12));
    cv::Mat noise(cells, cells, CV_8UC3);
    for (int y = 0; y < cells; ++y) {
        for (int x = 0; x < cells; ++x) {
            noise.at<cv::Vec3b>(y, x) = {static_cast<std::uint8_t>(rng.uniform_index(256)),
                                         static_cast<std::uint8_t>(rng.uniform_index(256)),
                                         static_cast<std::uint8_t>(rng.uniform_index(256))};
        }
    }
    cv::resize(noise, noise, size, 0, 0, cv::INTER_CUBIC);
    cv::addWeighted(img, 0.7, noise, 0.3, 0, img);
    return img;
}

LandmarkSet draw_face(cv::Mat& canvas, const IdentityTraits& id, const RenderConditions& cond) {
    const LandmarkSet unit = deform_shape(id, cond.mouth_open);
    const Placement place{cond.scale, cond.rotation, cond.center, id.face_width, id.face_height};
    const double s = cond.scale;
    const double deg = place.degrees();
    const auto axes = [s](double a, double b) {
        return cv::Size(std::max(1, static_cast<int>(std::lround(a * s))),
                        std::max(1, static_cast<int>(std::lround(b * s))));
    };
    const auto thick = [s](double t) { return std::max(1, static_cast<int>(std::lround(t * s))); };

    LandmarkSet pts;
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        pts[i] = place(unit[i]);
    }
    const cv::Scalar skin = to_scalar(id.skin_bgr);
    const cv::Scalar hair = to_scalar(id.hair_bgr);

    // Hair that falls behind the head.
    if (id.hair_style == 1) {
        std::vector<cv::Point2d> back;
        for (int i = 0; i <= 24; ++i) {
            const double a = -kPi * i / 24.0;
            back.push_back(place({std::cos(a) * 1.16, -0.15 + std::sin(a) * 1.12}));
        }
        back.push_back(place({-1.2, 1.05}));
        back.push_back(place({1.2, 1.05}));
        std::rotate(back.begin(), back.end() - 1, back.end());
        cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{to_pixels(back)}, to_scalar(id.hair_bgr, 0.85),
                     cv::LINE_AA);
    }

    // Neck and ears.
    const std::vector<cv::Point2d> neck = {place({-0.42, 0.55}), place({0.42, 0.55}), place({0.55, 2.2}),
                                           place({-0.55, 2.2})};
    cv::fillConvexPoly(canvas, to_pixels(neck), to_scalar(id.skin_bgr, 0.78), cv::LINE_AA);
    for (double side : {-1.0, 1.0}) {
        cv::ellipse(canvas, place.pixel({side * 0.98, -0.05}), axes(0.14, 0.25), deg, 0, 360,
                    to_scalar(id.skin_bgr, 0.88), -1, cv::LINE_AA);
    }

    // Head outline: jaw points then an arc over the crown.
    std::vector<cv::Point2d> head(pts.points.begin(), pts.points.begin() + 17);
    for (int i = 1; i < 16; ++i) {
        const double a = -0.06 * kPi - i / 16.0 * (0.88 * kPi);
        head.push_back(place({std::cos(a) * 0.98, -0.19 + std::sin(a) * 1.0}));
    }
    cv::Mat head_mask(canvas.size(), CV_8U, cv::Scalar(0));
    cv::fillPoly(head_mask, std::vector<std::vector<cv::Point>>{to_pixels(head)}, 255, cv::LINE_AA);

    // Skin with a radial falloff towards the face border.
    const cv::Rect roi = cv::boundingRect(to_pixels(head)) & cv::Rect(0, 0, canvas.cols, canvas.rows);
    const double inv_w = 1.0 / (s * id.face_width);
    const double inv_h = 1.0 / (s * id.face_height * 1.1);
    for (int y = roi.y; y < roi.y + roi.height; ++y) {
        auto* dst = canvas.ptr<cv::Vec3b>(y);
        const auto* m = head_mask.ptr<std::uint8_t>(y);
        for (int x = roi.x; x < roi.x + roi.width; ++x) {
            if (m[x] == 0) {
                continue;
            }
            const double dx = (x - cond.center.x) * inv_w;
            const double dy = (y - cond.center.y) * inv_h;
            const double shade = std::max(0.55, 1.05 - 0.45 * (dx * dx + dy * dy));
            const double alpha = m[x] / 255.0;
            for (int k = 0; k < 3; ++k) {
                dst[x][k] = cv::saturate_cast<std::uint8_t>(alpha * skin[k] * shade + (1.0 - alpha) * dst[x][k]);
            }
        }
    }

    // Hair cap with a style-dependent fringe.
    if (id.hair_style != 3) {
        std::vector<cv::Point2d> cap;
        for (int i = 0; i <= 20; ++i) {
            const double a = -kPi * i / 20.0;
            cap.push_back(place({std::cos(a) * 1.04, -0.19 + std::sin(a) * 1.08}));
        }
        for (int i = 0; i <= 10; ++i) {
            const double x = -1.0 + 2.0 * i / 10.0;
            double y = id.hairline - 0.12 * (1.0 - x * x) + 0.08;
            if (id.hair_style == 2) {
                y += 0.10 * (x + 1.0) / 2.0;
            }
            cap.push_back(place({x * 0.95, y}));
        }
        cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{to_pixels(cap)}, hair, cv::LINE_AA);
    } else {
        std::vector<cv::Point2d> cap;
        for (int i = 0; i <= 20; ++i) {
            const double a = -kPi * i / 20.0;
            cap.push_back(place({std::cos(a) * 0.99, -0.19 + std::sin(a) * 1.01}));
        }
        cv::Mat overlay = canvas.clone();
        cv::fillPoly(overlay, std::vector<std::vector<cv::Point>>{to_pixels(cap)}, hair, cv::LINE_AA);
        cv::addWeighted(canvas, 0.75, overlay, 0.25, 0, canvas);
    }

    // Soft shadows: eye sockets, nose sides, under the nose.
    cv::Mat shadow(canvas.size(), CV_8UC3, cv::Scalar(0, 0, 0));
    for (int e = 0; e < 2; ++e) {
        cv::Point2d c(0, 0);
        for (int i = 0; i < 6; ++i) {
            c += unit[36 + 6 * e + i];
        }
        c *= 1.0 / 6.0;
        cv::ellipse(shadow, place.pixel({c.x, c.y - 0.03}), axes(0.26, 0.15), deg, 0, 360, cv::Scalar(70, 70, 70),
                    -1);
    }
    cv::line(shadow, place.pixel({-0.12, -0.2}), place.pixel({-0.16, 0.3}), cv::Scalar(40, 40, 40), thick(0.08));
    cv::line(shadow, place.pixel({0.12, -0.2}), place.pixel({0.16, 0.3}), cv::Scalar(40, 40, 40), thick(0.08));
    cv::ellipse(shadow, place.pixel({0.0, 0.45}), axes(0.3, 0.06), deg, 0, 360, cv::Scalar(40, 40, 40), -1);
    cv::GaussianBlur(shadow, shadow, cv::Size(0, 0), std::max(0.5, 0.08 * s));
    cv::subtract(canvas, shadow, canvas, head_mask);

    // Eyes.
    const cv::Scalar iris = to_scalar(id.iris_bgr);
    for (int e = 0; e < 2; ++e) {
        const int first = 36 + 6 * e;
        std::vector<cv::Point2d> eye(pts.points.begin() + first, pts.points.begin() + first + 6);
        cv::fillConvexPoly(canvas, to_pixels(eye), cv::Scalar(225, 225, 225), cv::LINE_AA);
        const cv::Point2d c = (pts[first + 1] + pts[first + 2] + pts[first + 4] + pts[first + 5]) * 0.25;
        cv::circle(canvas, c, thick(0.065 * id.eye_size), iris, -1, cv::LINE_AA);
        cv::circle(canvas, c, thick(0.03 * id.eye_size), cv::Scalar(10, 10, 10), -1, cv::LINE_AA);
        std::vector<cv::Point2d> lid(pts.points.begin() + first, pts.points.begin() + first + 4);
        cv::polylines(canvas, to_pixels(lid), false, cv::Scalar(20, 20, 30), thick(0.03), cv::LINE_AA);
    }

    // Brows.
    const cv::Scalar brow = to_scalar(id.hair_bgr, id.hair_bgr[0] > 120 ? 0.6 : 0.8);
    for (int b = 0; b < 2; ++b) {
        std::vector<cv::Point2d> line(pts.points.begin() + 17 + 5 * b, pts.points.begin() + 22 + 5 * b);
        cv::polylines(canvas, to_pixels(line), false, brow, thick(id.brow_thickness), cv::LINE_AA);
    }

    // Nose: nostrils and a tip highlight.
    const cv::Scalar nostril = to_scalar(id.skin_bgr, 0.35);
    cv::ellipse(canvas, (pts[32] + pts[33]) * 0.5, axes(0.05, 0.025), deg, 0, 360, nostril, -1, cv::LINE_AA);
    cv::ellipse(canvas, (pts[34] + pts[33]) * 0.5, axes(0.05, 0.025), deg, 0, 360, nostril, -1, cv::LINE_AA);
    cv::circle(canvas, pts[30], thick(0.05), to_scalar(id.skin_bgr, 1.08), -1, cv::LINE_AA);

    // Mouth.
    std::vector<cv::Point2d> lips(pts.points.begin() + 48, pts.points.begin() + 60);
    cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{to_pixels(lips)}, to_scalar(id.lip_bgr, 0.8),
                 cv::LINE_AA);
    std::vector<cv::Point2d> inner(pts.points.begin() + 60, pts.points.begin() + 68);
    if (cond.mouth_open > 0.01) {
        cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{to_pixels(inner)}, cv::Scalar(30, 25, 50),
                     cv::LINE_AA);
    } else {
        cv::polylines(canvas, to_pixels(inner), true, cv::Scalar(30, 30, 60), thick(0.025), cv::LINE_AA);
    }

    if (id.glasses) {
        for (int e = 0; e < 2; ++e) {
            cv::Point2d c(0, 0);
            for (int i = 0; i < 6; ++i) {
                c += unit[36 + 6 * e + i];
            }
            c *= 1.0 / 6.0;
            cv::ellipse(canvas, place.pixel(c), axes(0.21 * id.eye_size + 0.03, 0.14), deg, 0, 360,
                        cv::Scalar(25, 25, 25), thick(0.03), cv::LINE_AA);
        }
        cv::line(canvas, place.pixel({-0.17, -0.27}), place.pixel({0.17, -0.27}), cv::Scalar(25, 25, 25),
                 thick(0.03), cv::LINE_AA);
    }
    return pts;
}

RenderedFace render_face(const IdentityTraits& identity, const RenderConditions& conditions, cv::Size canvas) {
    const cv::Size big(canvas.width * kSupersample, canvas.height * kSupersample);
    cv::Mat img = render_background(big, conditions.background_seed);

    RenderConditions scaled = conditions;
    scaled.scale *= kSupersample;
    // Output pixel i covers supersampled pixels k*i .. k*i+k-1.
    const double offset = (kSupersample - 1) / 2.0;
    scaled.center = conditions.center * static_cast<double>(kSupersample) + cv::Point2d(offset, offset);
    const LandmarkSet big_pts = draw_face(img, identity, scaled);

    // Directional lighting and global brightness.
    const double lx = std::cos(conditions.light_angle), ly = std::sin(conditions.light_angle);
    cv::Mat gain(big, CV_32F);
    for (int y = 0; y < big.height; ++y) {
        auto* g = gain.ptr<float>(y);
        for (int x = 0; x < big.width; ++x) {
            const double dx = (x - scaled.center.x) / scaled.scale;
            const double dy = (y - scaled.center.y) / scaled.scale;
            g[x] = static_cast<float>(conditions.brightness * (1.0 + conditions.light_strength * (lx * dx + ly * dy)));
        }
    }
    cv::Mat gain3;
    cv::merge(std::vector<cv::Mat>{gain, gain, gain}, gain3);
    cv::Mat lit;
    img.convertTo(lit, CV_32FC3);
    cv::multiply(lit, gain3, lit);

    cv::Mat small;
    cv::resize(lit, small, canvas, 0, 0, cv::INTER_AREA);
    Rng noise_rng(derive_seed(conditions.background_seed, "pixel_noise"));
    for (int y = 0; y < small.rows; ++y) {
        auto* p = small.ptr<cv::Vec3f>(y);
        for (int x = 0; x < small.cols; ++x) {
            for (int k = 0; k < 3; ++k) {
                p[x][k] += static_cast<float>(noise_rng.normal(0.0, conditions.noise_sigma));
            }
        }
    }
    RenderedFace out;
    small.convertTo(out.image, CV_8UC3);
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        out.landmarks[i] = (big_pts[i] - cv::Point2d(offset, offset)) * (1.0 / kSupersample);
    }
    out.box = face_box_from_landmarks(out.landmarks);
    return out;
}

data::DatasetIndex write_synthetic_corpus(const std::filesystem::path& root, const SyntheticCorpusOptions& options) {
    std::vector<data::ImageRecord> records;
    const std::uint64_t corpus_seed = derive_seed(options.seed, options.dataset_id);
    for (std::size_t n = 0; n < options.identities; ++n) {
        const std::string identity_id = options.dataset_id + "_" + std::to_string(n);
        Rng identity_rng(derive_seed(corpus_seed, static_cast<std::uint64_t>(n)));
        const IdentityTraits traits = sample_identity(identity_rng);
        std::filesystem::create_directories(root / identity_id);
        for (std::size_t k = 0; k < options.images_per_identity; ++k) {
            const RenderedFace face = render_face(traits, sample_conditions(identity_rng, options.canvas), options.canvas);
            const std::filesystem::path relative = std::filesystem::path(identity_id) / (std::to_string(k) + ".png");
            if (!cv::imwrite((root / relative).string(), face.image)) {
                throw DataError("cannot write " + (root / relative).string());
            }
            records.push_back({identity_id + "_" + std::to_string(k), identity_id, options.dataset_id,
                               data::Variant::unmasked, relative});
        }
    }
    return data::DatasetIndex::from_records(std::move(records), root, options.dataset_id);
}

}  // namespace maskmatch::geometry
