#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/model/verifier.hpp"
#include "maskmatch/train/augment.hpp"
#include "maskmatch/train/contrastive.hpp"
#include "maskmatch/train/finetune.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::train;
namespace fs = std::filesystem;

namespace {

std::shared_ptr<model::VerifierModel> tiny_model(std::uint64_t seed) {
    torch::manual_seed(seed);
    model::VerifierConfig c;
    c.backbone = model::preset_spec("resnet_tiny");
    return std::make_shared<model::VerifierModel>(c);
}

const data::DatasetIndex& rendered_corpus() {
    static const auto index = [] {
        geometry::SyntheticCorpusOptions o;
        o.dataset_id = "toy";
        o.identities = 6;
        o.images_per_identity = 3;
        return testkit::rendered_pair_index(testkit::fresh_dir("training_corpus"), o);
    }();
    return index;
}

std::map<std::string, torch::Tensor> snapshot(torch::nn::Module& m) {
    std::map<std::string, torch::Tensor> out;
    for (const auto& p : m.named_parameters()) out[p.key()] = p.value().detach().clone();
    for (const auto& b : m.named_buffers()) out[b.key()] = b.value().detach().clone();
    return out;
}

}  // namespace

TEST(Freeze, FreezesTheLeadingFloorFraction) {
    auto m = tiny_model(1);
    const auto layers = model::parameterized_layers(m->backbone());
    for (double p : {0.0, 0.3, 0.5, 0.9, 1.0}) {
        const auto n = freeze_fraction(*m, p);
        EXPECT_EQ(n, static_cast<std::size_t>(std::floor(p * double(layers.size()))));
        for (std::size_t k = 0; k < layers.size(); ++k) {
            for (const auto& param : layers[k].second->parameters(false)) {
                EXPECT_EQ(param.requires_grad(), k >= n) << layers[k].first;
            }
        }
        for (const auto& param : m->fc()->parameters()) EXPECT_TRUE(param.requires_grad());
        for (const auto& param : m->out()->parameters()) EXPECT_TRUE(param.requires_grad());
    }
    EXPECT_THROW(freeze_fraction(*m, -0.1), DomainError);
    EXPECT_THROW(freeze_fraction(*m, 1.5), DomainError);
}

TEST(Supervised, BceGradientMatchesFiniteDifferences) {
    torch::manual_seed(3);
    model::VerifierConfig c;
    c.backbone.input_resolution = 1;
    c.head_width = 2;
    model::VerifierModel m(c, std::make_shared<testkit::LinearBackbone>(1, 2));
    m.to(torch::kFloat64);
    std::size_t count = 0;
    for (const auto& p : m.parameters()) count += static_cast<std::size_t>(p.numel());
    ASSERT_LE(count, 20u);

    const auto a = torch::randn({6, 3, 1, 1}, torch::kFloat64);
    const auto b = torch::randn({6, 3, 1, 1}, torch::kFloat64);
    const auto y = torch::tensor({1.0, 0.0, 1.0, 1.0, 0.0, 0.0}, torch::kFloat64);
    auto loss = [&] { return torch::binary_cross_entropy_with_logits(m.forward(a, b), y); };

    m.zero_grad();
    loss().backward();
    const double eps = 1e-6;
    for (auto& p : m.parameters()) {
        auto flat = p.data().view({-1});
        auto grad = p.grad().view({-1});
        for (std::int64_t i = 0; i < flat.numel(); ++i) {
            torch::NoGradGuard g;
            const double orig = flat[i].item<double>();
            flat[i] = orig + eps;
            const double up = loss().item<double>();
            flat[i] = orig - eps;
            const double down = loss().item<double>();
            flat[i] = orig;
            const double numeric = (up - down) / (2 * eps);
            const double analytic = grad[i].item<double>();
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            EXPECT_LT(std::abs(numeric - analytic) / scale, 1e-4);
        }
    }
}

TEST(Supervised, FrozenLayersAreBitIdenticalAfterTraining) {
    auto m = tiny_model(4);
    const auto before = snapshot(*m);
    pairs::PairPool pool(rendered_corpus());
    FinetuneConfig c;
    c.iterations = 100;
    c.batch_size = 4;
    c.learning_rate = 0.05;
    c.frozen_fraction = 0.5;
    const auto run = finetune_supervised(c, {m, &pool, nullptr, "", std::nullopt});
    EXPECT_EQ(run.loss_trace.size(), 100u);

    const auto after = snapshot(*m);
    const auto layers = model::parameterized_layers(m->backbone());
    const auto frozen = static_cast<std::size_t>(std::floor(0.5 * double(layers.size())));
    ASSERT_EQ(m->frozen_layers(), frozen);
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const std::string prefix = "backbone." + layers[k].first + ".";
        bool changed = false;
        for (const auto& [name, value] : before) {
            if (name.rfind(prefix, 0) == 0) changed |= !torch::equal(value, after.at(name));
        }
        EXPECT_EQ(changed, k >= frozen) << layers[k].first;
    }
    EXPECT_FALSE(torch::equal(before.at("fc.weight"), after.at("fc.weight")));
}

TEST(Supervised, ZeroLearningRateLeavesParametersUnchanged) {
    auto m = tiny_model(5);
    std::map<std::string, torch::Tensor> before;
    for (const auto& p : m->named_parameters()) before[p.key()] = p.value().clone();
    pairs::PairPool pool(rendered_corpus());
    FinetuneConfig c;
    c.iterations = 5;
    c.batch_size = 4;
    c.learning_rate = 0.0;
    c.frozen_fraction = 0.0;
    finetune_supervised(c, {m, &pool, nullptr, "", std::nullopt});
    for (const auto& p : m->named_parameters()) EXPECT_TRUE(torch::equal(before.at(p.key()), p.value())) << p.key();
}

TEST(Supervised, RunDirectoryGetsLogAndRetainedCheckpoints) {
    const auto dir = testkit::fresh_dir("finetune_run");
    auto m = tiny_model(6);
    pairs::PairPool pool(rendered_corpus());
    FinetuneConfig c;
    c.preset = "FT2";
    c.iterations = 6;
    c.batch_size = 4;
    c.hard_sample_size = 3;
    c.validation_interval = 3;
    c.validation = {20, 4};
    c.retention_threshold = 0.0;  // keep everything
    const auto run = finetune_supervised(c, {m, &pool, &pool, "CP1", dir});
    ASSERT_EQ(run.validations.size(), 2u);
    EXPECT_EQ(run.retained().size(), 2u);
    EXPECT_EQ(run.validations[1].checkpoint_id, "FT2-step6");
    const auto loaded = model::load_checkpoint(run.validations[1].checkpoint_path);
    EXPECT_EQ(loaded.manifest.lineage.base, "CP1");
    EXPECT_EQ(loaded.manifest.lineage.step, 6);
    EXPECT_EQ(loaded.manifest.lineage.precision, run.validations[1].precision);
    const auto log = split(trim(read_text_file(dir / "log.jsonl")), '\n');
    ASSERT_EQ(log.size(), 6u);
    EXPECT_EQ(log[0].rfind("{\"step\":1,", 0), 0u);
    EXPECT_NE(log[0].find("\"precision\":null"), std::string::npos);
    EXPECT_EQ(log[2].find("\"precision\":null"), std::string::npos);
}

TEST(Supervised, SameSeedSameRun) {
    pairs::PairPool pool(rendered_corpus());
    FinetuneConfig c;
    c.iterations = 4;
    c.batch_size = 4;
    c.seed = 12;
    auto a = tiny_model(7);
    auto b = tiny_model(7);
    const auto ra = finetune_supervised(c, {a, &pool, nullptr, "", std::nullopt});
    const auto rb = finetune_supervised(c, {b, &pool, nullptr, "", std::nullopt});
    EXPECT_EQ(ra.loss_trace, rb.loss_trace);
}

TEST(Supervised, InvalidConfigurationsAreRejected) {
    pairs::PairPool pool(rendered_corpus());
    auto m = tiny_model(8);
    FinetuneConfig c;
    c.batch_size = 0;
    EXPECT_THROW(finetune_supervised(c, {m, &pool, nullptr, "", std::nullopt}), ConfigError);
    c = {};
    c.hard_sample_size = 0;
    EXPECT_THROW(finetune_supervised(c, {m, &pool, nullptr, "", std::nullopt}), ConfigError);
    EXPECT_THROW(finetune_supervised({}, {nullptr, &pool, nullptr, "", std::nullopt}), ConfigError);
}

TEST(Presets, MatchPublishedSettings) {
    struct Row {
        const char* name;
        const char* base;
        std::size_t iterations, batch;
        double lr, frozen;
        std::optional<std::size_t> hard;
        pairs::DrawMode mode;
    };
    const Row rows[] = {
        {"CP1", "", 695000, 128, 1.0, 0.5, std::nullopt, pairs::DrawMode::uniform},
        {"CP2", "", 885000, 128, 1.0, 0.5, std::nullopt, pairs::DrawMode::uniform},
        {"FT1", "CP1", 11001, 32, 0.001, 0.9, 16, pairs::DrawMode::stratified},
        {"FT2", "CP1", 11251, 32, 0.01, 0.8, 32, pairs::DrawMode::stratified},
        {"FT3", "CP2", 14501, 32, 0.01, 0.5, 10, pairs::DrawMode::stratified},
    };
    for (const auto& r : rows) {
        const auto c = preset_config(r.name);
        EXPECT_EQ(c.base_checkpoint, r.base) << r.name;
        EXPECT_EQ(c.iterations, r.iterations) << r.name;
        EXPECT_EQ(c.batch_size, r.batch) << r.name;
        EXPECT_EQ(c.learning_rate, r.lr) << r.name;
        EXPECT_EQ(c.frozen_fraction, r.frozen) << r.name;
        EXPECT_EQ(c.hard_sample_size, r.hard) << r.name;
        EXPECT_EQ(c.draw_mode, r.mode) << r.name;
        EXPECT_EQ(c.validation.steps, 400u);
        EXPECT_EQ(c.validation.imposters_per_step, 19u);
        EXPECT_EQ(c.retention_threshold, 0.90);
        EXPECT_EQ(parse_finetune_config(serialize_finetune_config(c)), c) << r.name;
    }
    EXPECT_THROW(preset_config("FT4"), ConfigError);
    const auto c = parse_finetune_config(R"({"preset":"FT1","iterations":50})");
    EXPECT_EQ(c.iterations, 50u);
    EXPECT_EQ(c.hard_sample_size, std::optional<std::size_t>(16));
    EXPECT_THROW(parse_finetune_config(R"({"iteratons":50})"), ConfigError);
}

TEST(Contrastive, UniformLogitsGiveLogOfQueuePlusOne) {
    const std::int64_t dim = 16, batch = 8, queue_size = 4096;
    // q is orthogonal to every key, so all logits are zero.
    auto q = torch::zeros({batch, dim});
    q.index_put_({torch::indexing::Slice(), 0}, 1.0);
    auto k = torch::randn({batch, dim});
    k.index_put_({torch::indexing::Slice(), 0}, 0.0);
    auto queue = torch::randn({queue_size, dim});
    queue.index_put_({torch::indexing::Slice(), 0}, 0.0);
    const double loss = contrastive_loss(q, k, queue, 0.2).item<double>();
    EXPECT_NEAR(loss, std::log(double(queue_size) + 1.0), 1e-6);
}

TEST(Contrastive, MatchesExplicitSoftmaxCrossEntropy) {
    torch::manual_seed(9);
    const auto q = torch::nn::functional::normalize(torch::randn({4, 8}), torch::nn::functional::NormalizeFuncOptions().dim(1));
    const auto k = torch::nn::functional::normalize(torch::randn({4, 8}), torch::nn::functional::NormalizeFuncOptions().dim(1));
    const auto queue = torch::nn::functional::normalize(torch::randn({10, 8}), torch::nn::functional::NormalizeFuncOptions().dim(1));
    const double t = 0.07;
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double pos = (q[i] * k[i]).sum().item<double>() / t;
        double denom = std::exp(pos);
        for (int j = 0; j < 10; ++j) denom += std::exp((q[i] * queue[j]).sum().item<double>() / t);
        expected += -(pos - std::log(denom));
    }
    EXPECT_NEAR(contrastive_loss(q, k, queue, t).item<double>(), expected / 4.0, 1e-4);
}

TEST(Contrastive, MomentumUpdateClosedForm) {
    torch::manual_seed(10);
    std::vector<torch::Tensor> key{torch::randn({5, 3}), torch::randn({7})};
    const std::vector<torch::Tensor> query{torch::randn({5, 3}), torch::randn({7})};
    std::vector<torch::Tensor> expected;
    for (std::size_t i = 0; i < key.size(); ++i) {
        expected.push_back(0.999 * key[i].to(torch::kFloat64) + 0.001 * query[i].to(torch::kFloat64));
    }
    momentum_update(key, query, 0.999);
    for (std::size_t i = 0; i < key.size(); ++i) {
        EXPECT_LT((key[i].to(torch::kFloat64) - expected[i]).abs().max().item<double>(), 1e-6);
    }
}

TEST(Contrastive, QueueIsFifo) {
    KeyQueue queue(5, 2, 0);
    EXPECT_EQ(queue.capacity(), 5u);
    const auto initial = queue.keys().clone();
    const auto norms = initial.norm(2, 1);
    EXPECT_LT((norms - 1.0).abs().max().item<double>(), 1e-5);
    queue.enqueue(torch::tensor({{1.0f, 0.0f}, {2.0f, 0.0f}}));
    queue.enqueue(torch::tensor({{3.0f, 0.0f}, {4.0f, 0.0f}, {5.0f, 0.0f}}));
    queue.enqueue(torch::tensor({{6.0f, 0.0f}}));
    const auto keys = queue.keys();
    for (int i = 0; i < 5; ++i) EXPECT_EQ(keys[i][0].item<float>(), float(i + 2));
}

TEST(Contrastive, ConfigValidation) {
    PretrainConfig c;
    EXPECT_NO_THROW(c.validate());
    c.queue_size = 64;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.temperature = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.momentum_coefficient = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.steps = 17;
    c.projection_head = false;
    const auto back = parse_pretrain_config(serialize_pretrain_config(c));
    EXPECT_EQ(back.steps, 17u);
    EXPECT_FALSE(back.projection_head);
    EXPECT_THROW(parse_pretrain_config(R"({"tempreature":0.1})"), ConfigError);
}

TEST(Contrastive, TwoImageToyRunProducesFiniteLoss) {
    const auto dir = testkit::fresh_dir("pretrain_toy");
    geometry::SyntheticCorpusOptions o;
    o.identities = 2;
    o.images_per_identity = 1;
    const auto images = geometry::write_synthetic_corpus(dir, o);
    PretrainConfig c;
    c.batch_size = 2;
    c.queue_size = 8;
    c.steps = 50;
    c.learning_rate = 0.05;
    model::VerifierConfig mc;
    mc.backbone = model::preset_spec("resnet_tiny");
    std::size_t callbacks = 0;
    const auto result = pretrain_contrastive(c, images, mc, [&](std::size_t, double) { ++callbacks; });
    EXPECT_EQ(result.steps, 50u);
    EXPECT_EQ(callbacks, 50u);
    ASSERT_EQ(result.loss_trace.size(), 50u);
    for (double l : result.loss_trace) EXPECT_TRUE(std::isfinite(l));
    EXPECT_EQ(result.model->embedding_dim(), 128);
    EXPECT_EQ(result.model->config().backbone.architecture, "resnet_tiny");
}

TEST(Augment, ViewsHaveTheRequestedSizeAndVary) {
    Rng rng(1);
    const auto face = geometry::render_face(geometry::sample_identity(rng), geometry::sample_conditions(rng));
    const auto cfg = augment_preset("mocov2");
    const auto v1 = augment_view(face.image, cfg, 48, rng);
    const auto v2 = augment_view(face.image, cfg, 48, rng);
    EXPECT_EQ(v1.size(), cv::Size(48, 48));
    EXPECT_EQ(v1.type(), CV_8UC3);
    EXPECT_GT(cv::norm(v1, v2, cv::NORM_L1), 0.0);
    EXPECT_THROW(augment_preset("simclr"), ConfigError);
}
