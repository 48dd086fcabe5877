#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>
#include <torch/torch.h>

#include "maskmatch/common/error.hpp"
#include "maskmatch/model/backbone.hpp"
#include "maskmatch/model/verifier.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::model;
namespace fs = std::filesystem;

namespace {

VerifierConfig tiny_config() {
    VerifierConfig c;
    c.backbone = preset_spec("resnet_tiny");
    return c;
}

std::shared_ptr<VerifierModel> tiny_model(std::uint64_t seed) {
    torch::manual_seed(seed);
    auto m = std::make_shared<VerifierModel>(tiny_config());
    m->eval();
    return m;
}

// Two-dimensional embeddings straight from a 1x1 input, so the taps can be
// computed by hand.
std::shared_ptr<VerifierModel> two_unit_model() {
    VerifierConfig c;
    c.backbone.input_resolution = 1;
    c.head_width = 2;
    auto m = std::make_shared<VerifierModel>(c, std::make_shared<testkit::LinearBackbone>(1, 2));
    torch::NoGradGuard g;
    m->fc()->weight.copy_(torch::tensor({{0.5, -1.0}, {2.0, 0.25}}));
    m->fc()->bias.copy_(torch::tensor({0.1, -0.2}));
    m->out()->weight.copy_(torch::tensor({{1.5, -0.5}}));
    m->out()->bias.copy_(torch::tensor({0.3}));
    return m;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool same_state(VerifierModel& a, VerifierModel& b) {
    auto pa = a.named_parameters();
    auto pb = b.named_parameters();
    for (const auto& item : pa) {
        if (!torch::equal(item.value(), pb[item.key()])) return false;
    }
    auto ba = a.named_buffers();
    auto bb = b.named_buffers();
    for (const auto& item : ba) {
        if (!torch::equal(item.value(), bb[item.key()])) return false;
    }
    return pa.size() == pb.size() && ba.size() == bb.size();
}

}  // namespace

TEST(Taps, NamesRoundTrip) {
    for (auto t : {Tap::final_output, Tap::fc512, Tap::bottleneck}) EXPECT_EQ(parse_tap(to_string(t)), t);
    EXPECT_EQ(parse_tap("bottleneck2048"), Tap::bottleneck);
    EXPECT_THROW(parse_tap("fc1024"), ConfigError);
}

TEST(Taps, DistanceToSimilarity) {
    EXPECT_EQ(distance_to_similarity(0.0), 1.0);
    EXPECT_DOUBLE_EQ(distance_to_similarity(3.0), 0.25);
    EXPECT_THROW(distance_to_similarity(-1e-9), DomainError);
    EXPECT_THROW(distance_to_similarity(NAN), DomainError);
}

TEST(Taps, HandComputedTwoUnitNetwork) {
    auto m = two_unit_model();
    const auto ea = torch::tensor({0.7f, -0.4f});
    const auto eb = torch::tensor({-0.2f, 0.9f});
    const double a0 = 0.7, a1 = -0.4, b0 = -0.2, b1 = 0.9;

    const double bottleneck = 1.0 / (1.0 + std::hypot(a0 - b0, a1 - b1));
    EXPECT_NEAR(m->similarity_from_embeddings(ea, eb, Tap::bottleneck), bottleneck, 1e-6);

    const double ha0 = sig(0.5 * a0 - 1.0 * a1 + 0.1), ha1 = sig(2.0 * a0 + 0.25 * a1 - 0.2);
    const double hb0 = sig(0.5 * b0 - 1.0 * b1 + 0.1), hb1 = sig(2.0 * b0 + 0.25 * b1 - 0.2);
    EXPECT_NEAR(m->similarity_from_embeddings(ea, eb, Tap::fc512), 1.0 / (1.0 + std::hypot(ha0 - hb0, ha1 - hb1)),
                1e-6);

    const double d0 = std::abs(a0 - b0), d1 = std::abs(a1 - b1);
    const double h0 = sig(0.5 * d0 - 1.0 * d1 + 0.1), h1 = sig(2.0 * d0 + 0.25 * d1 - 0.2);
    EXPECT_NEAR(m->similarity_from_embeddings(ea, eb, Tap::final_output), sig(1.5 * h0 - 0.5 * h1 + 0.3), 1e-6);
}

TEST(Taps, PreSigmoidFcTapIsConfigurable) {
    VerifierConfig c;
    c.backbone.input_resolution = 1;
    c.head_width = 2;
    c.fc_tap_pre_sigmoid = true;
    auto m = std::make_shared<VerifierModel>(c, std::make_shared<testkit::LinearBackbone>(1, 2));
    torch::NoGradGuard g;
    m->fc()->weight.copy_(torch::eye(2));
    m->fc()->bias.zero_();
    const double s = m->similarity_from_embeddings(torch::tensor({3.0f, 0.0f}), torch::tensor({0.0f, 4.0f}), Tap::fc512);
    EXPECT_NEAR(s, 1.0 / 6.0, 1e-6);
}

TEST(Similarity, SymmetricAndSelfSimilar) {
    auto m = tiny_model(1);
    for (int k = 0; k < 10; ++k) {
        const auto a = torch::randn({3, 64, 64});
        const auto b = torch::randn({3, 64, 64});
        for (auto tap : {Tap::final_output, Tap::fc512, Tap::bottleneck}) {
            EXPECT_EQ(m->similarity(a, b, tap), m->similarity(b, a, tap));
        }
        EXPECT_EQ(m->similarity(a, a, Tap::fc512), 1.0);
        EXPECT_EQ(m->similarity(a, a, Tap::bottleneck), 1.0);
        const double f = m->similarity(a, b, Tap::final_output);
        EXPECT_GT(f, 0.0);
        EXPECT_LT(f, 1.0);
    }
}

TEST(Similarity, WrongResolutionIsAShapeMismatch) {
    auto m = tiny_model(2);
    EXPECT_THROW(m->similarity(torch::randn({3, 32, 32}), torch::randn({3, 64, 64}), Tap::bottleneck), ShapeMismatch);
    EXPECT_THROW(m->embed(torch::randn({2, 1, 64, 64})), ShapeMismatch);
    EXPECT_THROW(m->similarity_from_embeddings(torch::randn({7}), torch::randn({128}), Tap::bottleneck),
                 ShapeMismatch);
}

TEST(Backbones, PresetEmbeddingLengths) {
    torch::NoGradGuard g;
    for (const auto& [name, dim] : std::vector<std::pair<std::string, std::int64_t>>{
             {"resnet50", 2048}, {"resnet18", 512}, {"vgg16", 512}, {"mobilenet_v2", 1280}, {"resnet_tiny", 128}}) {
        const auto spec = preset_spec(name);
        EXPECT_EQ(spec.embedding_dim, dim) << name;
        auto net = make_backbone(spec);
        net->eval();
        const auto out = net->forward(torch::randn({1, 3, spec.input_resolution, spec.input_resolution}));
        EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{1, dim})) << name;
    }
    EXPECT_THROW(preset_spec("alexnet"), ConfigError);
    auto bad = preset_spec("resnet18");
    bad.embedding_dim = 100;
    EXPECT_THROW(make_backbone(bad), ConfigError);
}

TEST(Backbones, DefaultIsResNet50WithFiftyThreeConvolutions) {
    const auto spec = preset_spec("resnet50");
    EXPECT_EQ(BackboneSpec{}, spec);
    auto net = make_backbone(spec);
    const auto layers = parameterized_layers(*net);
    std::size_t convs = 0;
    for (const auto& [name, module] : layers) convs += module->as<torch::nn::Conv2d>() != nullptr;
    EXPECT_EQ(convs, 53u);  // stem, 16 x 3 block convolutions, 4 projections
    EXPECT_EQ(layers.front().first.find("stem"), 0u);
}

TEST(Checkpoint, RoundTripIsExact) {
    const auto dir = testkit::fresh_dir("ckpt_roundtrip");
    auto m = tiny_model(3);
    const Lineage lin{"FT1-step100", "CP1", "FT1", "verifier", 100, 0.93};
    save_checkpoint(*m, lin, dir / "m.pt");
    const auto loaded = load_checkpoint(dir / "m.pt");
    EXPECT_TRUE(same_state(*m, *loaded.model));
    EXPECT_EQ(loaded.manifest.lineage, lin);
    EXPECT_EQ(loaded.manifest.config, m->config());
    EXPECT_EQ(read_checkpoint_manifest(dir / "m.pt").checksum, loaded.manifest.checksum);
    const auto x = torch::randn({3, 64, 64});
    const auto y = torch::randn({3, 64, 64});
    EXPECT_EQ(m->similarity(x, y, Tap::final_output), loaded.model->similarity(x, y, Tap::final_output));
}

TEST(Checkpoint, CorruptionAndAbsenceAreReported) {
    const auto dir = testkit::fresh_dir("ckpt_corrupt");
    auto m = tiny_model(4);
    save_checkpoint(*m, {}, dir / "m.pt");
    EXPECT_THROW(load_checkpoint(dir / "missing.pt"), DataError);

    const auto size = fs::file_size(dir / "m.pt");
    fs::copy_file(dir / "m.pt", dir / "flipped.pt");
    {
        std::fstream f(dir / "flipped.pt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekg(std::streamoff(size / 2));
        char c = 0;
        f.read(&c, 1);
        f.seekp(std::streamoff(size / 2));
        c = static_cast<char>(c ^ 0x5a);
        f.write(&c, 1);
    }
    EXPECT_THROW(load_checkpoint(dir / "flipped.pt"), ChecksumError);

    fs::copy_file(dir / "m.pt", dir / "short.pt");
    fs::resize_file(dir / "short.pt", size / 3);
    EXPECT_THROW(load_checkpoint(dir / "short.pt"), ChecksumError);
}

TEST(Checkpoint, BackboneWeightsNeedMatchingArchitecture) {
    const auto dir = testkit::fresh_dir("ckpt_backbone");
    auto tiny = tiny_model(5);
    save_checkpoint(*tiny, {}, dir / "tiny.pt");
    auto other = tiny_model(6);
    load_backbone_weights(*other, dir / "tiny.pt");
    EXPECT_TRUE(torch::equal(other->backbone().parameters().front(), tiny->backbone().parameters().front()));
    EXPECT_FALSE(torch::equal(other->fc()->weight, tiny->fc()->weight));

    VerifierConfig c;
    c.backbone = preset_spec("resnet18");
    c.backbone.input_resolution = 64;
    VerifierModel r18(c);
    EXPECT_THROW(load_backbone_weights(r18, dir / "tiny.pt"), ShapeMismatch);

    c = tiny_config();
    c.backbone.initial_weights = (dir / "tiny.pt").string();
    auto warm = make_verifier(c);
    EXPECT_TRUE(torch::equal(warm->backbone().parameters().back(), tiny->backbone().parameters().back()));
}

TEST(Config, SerialisesAndParses) {
    auto c = tiny_config();
    c.fc_tap_pre_sigmoid = true;
    c.normalization.mean = {0.5, 0.5, 0.5};
    EXPECT_EQ(parse_config(serialize_config(c)), c);
    EXPECT_EQ(parse_config(R"({"backbone":{"architecture":"vgg19"}})").backbone, preset_spec("vgg19"));
    EXPECT_THROW(parse_config(R"({"backbone":{"architecture":"lenet"}})"), ConfigError);
    EXPECT_THROW(parse_config("not json"), ConfigError);
}

TEST(Clone, CopiesStateDeeply) {
    auto m = tiny_model(7);
    auto c = clone_model(*m);
    EXPECT_TRUE(same_state(*m, *c));
    {
        torch::NoGradGuard g;
        c->fc()->weight.add_(1.0);
    }
    EXPECT_FALSE(same_state(*m, *c));
    copy_state(*m, *c);
    EXPECT_TRUE(same_state(*m, *c));
}

TEST(Scorers, ModelScorerMatchesDirectInference) {
    const auto dir = testkit::fresh_dir("scorer");
    geometry::SyntheticCorpusOptions o;
    o.identities = 3;
    o.images_per_identity = 2;
    const auto index = testkit::rendered_pair_index(dir, o);
    auto m = tiny_model(8);
    ModelScorer scorer(m, index, Tap::fc512);
    const auto& a = index.records()[0];
    const auto& b = index.records()[7];
    const auto ta = preprocess_image(cv::imread(index.resolve(a).string()), 64, {});
    const auto tb = preprocess_image(cv::imread(index.resolve(b).string()), 64, {});
    EXPECT_EQ(scorer.similarity(a, b), m->similarity(ta, tb, Tap::fc512));
    EXPECT_EQ(scorer.similarity(a, b), scorer.similarity(b, a));
    EXPECT_EQ(scorer.similarity(a, a), 1.0);
    data::ImageRecord ghost{"ghost", "x", o.dataset_id, data::Variant::masked, "nope.png"};
    EXPECT_THROW(scorer.similarity(a, ghost), DataError);
}

TEST(Scorers, EnsembleIsTheArithmeticMean) {
    const auto index = testkit::toy_index({{"d", 5}});
    std::vector<std::shared_ptr<const pairs::PairScorer>> members{
        std::make_shared<testkit::HashScorer>(1), std::make_shared<testkit::HashScorer>(2),
        std::make_shared<testkit::HashScorer>(3)};
    EnsembleScorer ensemble(members);
    EnsembleScorer single({members[1]});
    for (const auto& a : index.records()) {
        for (const auto& b : index.records()) {
            double sum = 0.0;
            for (const auto& m : members) sum += m->similarity(a, b);
            EXPECT_NEAR(ensemble.similarity(a, b), sum / 3.0, 1e-12);
            EXPECT_EQ(single.similarity(a, b), members[1]->similarity(a, b));
        }
    }
    EXPECT_THROW(EnsembleScorer({}), ConfigError);
}
