#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "maskmatch/cli/app.hpp"
#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/eval/report.hpp"
#include "maskmatch/model/verifier.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
namespace fs = std::filesystem;

namespace {

int run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "maskmatch");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

// Rendered faces with the unmasked files reused as the masked variant.
fs::path paired_manifest(const fs::path& dir, std::size_t identities) {
    geometry::SyntheticCorpusOptions o;
    o.dataset_id = "toy";
    o.identities = identities;
    o.images_per_identity = 2;
    const auto index = testkit::rendered_pair_index(dir / "images", o);
    data::save_manifest(index, dir / "manifest.csv");
    return dir / "manifest.csv";
}

}  // namespace

TEST(Cli, UsageErrorsExitWithOne) {
    EXPECT_EQ(run_cli({}), cli::kUsage);
    EXPECT_EQ(run_cli({"teleport"}), cli::kUsage);
    EXPECT_EQ(run_cli({"--tap", "fc1024", "pairs", "--manifest", "x.csv"}), cli::kUsage);
    EXPECT_EQ(run_cli({"finetune"}), cli::kUsage);  // no --config
}

TEST(Cli, MissingManifestIsADataError) {
    EXPECT_EQ(run_cli({"--out", "/tmp/never", "pairs", "--manifest", "/nonexistent/manifest.csv"}),
              cli::kDataFailure);
}

TEST(Cli, PairsAreSeedDeterministic) {
    const auto dir = testkit::fresh_dir("cli_pairs");
    const auto manifest = paired_manifest(dir, 6);
    ASSERT_EQ(run_cli({"--seed", "5", "--out", (dir / "a").string(), "pairs", "--manifest", manifest.string(),
                       "--count", "20"}),
              cli::kSuccess);
    ASSERT_EQ(run_cli({"--seed", "5", "--out", (dir / "b").string(), "pairs", "--manifest", manifest.string(),
                       "--count", "20"}),
              cli::kSuccess);
    EXPECT_EQ(read_text_file(dir / "a" / "toy.pairs.csv"), read_text_file(dir / "b" / "toy.pairs.csv"));
    EXPECT_EQ(run_cli({"--out", (dir / "c").string(), "pairs", "--manifest", manifest.string(), "--count", "7"}),
              cli::kUsage);
}

TEST(Cli, MaskOfAnEmptyManifestSucceedsWithEmptyOutputs) {
    const auto dir = testkit::fresh_dir("cli_mask_empty");
    write_text_file(dir / "empty.csv", "image_id,identity_id,dataset_id,variant,path\n");
    write_text_file(dir / "mask.json", "{\"detector_weights\":\"" + (testkit::asset_dir() / "hog.yml").string() +
                                           "\",\"landmark_weights\":\"" +
                                           (testkit::asset_dir() / "lbf.yaml").string() + "\"}");
    ASSERT_EQ(run_cli({"--config", (dir / "mask.json").string(), "--out", (dir / "out").string(), "mask",
                       "--manifest", (dir / "empty.csv").string()}),
              cli::kSuccess);
    EXPECT_TRUE(data::load_manifest(dir / "out" / "manifest.csv").empty());
    EXPECT_NE(read_text_file(dir / "out" / "report.csv").find("input=0 masked=0 discarded=0"), std::string::npos);
}

TEST(Cli, MaskWithAnUnreadableImageExitsNonZeroAndExplains) {
    const auto dir = testkit::fresh_dir("cli_mask_io");
    write_text_file(dir / "m.csv",
                    "image_id,identity_id,dataset_id,variant,path\nx,p,d,unmasked," + (dir / "nope.png").string() +
                        "\n");
    write_text_file(dir / "mask.json", "{\"detector_weights\":\"" + (testkit::asset_dir() / "hog.yml").string() +
                                           "\",\"landmark_weights\":\"" +
                                           (testkit::asset_dir() / "lbf.yaml").string() + "\"}");
    EXPECT_EQ(run_cli({"--config", (dir / "mask.json").string(), "--out", (dir / "out").string(), "mask",
                       "--manifest", (dir / "m.csv").string()}),
              cli::kDataFailure);
    const auto report = read_text_file(dir / "out" / "report.csv");
    EXPECT_NE(report.find("discarded_io"), std::string::npos);
}

TEST(Cli, FinetuneThenEvaluateWritesMetricsAndPlots) {
    const auto dir = testkit::fresh_dir("cli_finetune");
    const auto manifest = paired_manifest(dir, 6);
    write_text_file(dir / "ft.json", R"({
        "seed": 3,
        "manifests": ["manifest.csv"],
        "split": {"train": 0.5, "validation": 0.5},
        "model": {"backbone": {"architecture": "resnet_tiny"}},
        "finetune": {"iterations": 4, "batch_size": 4, "validation_interval": 2, "validation_steps": 10,
                     "retention_threshold": 0.0, "frozen_fraction": 0.0}
    })");
    const auto run_dir = dir / "run";
    ASSERT_EQ(run_cli({"--config", (dir / "ft.json").string(), "--out", run_dir.string(), "finetune"}),
              cli::kSuccess);
    for (const char* f : {"config.json", "split.csv", "log.jsonl", "final.pt", "validations.csv",
                          "checkpoints/step_2.pt", "checkpoints/step_4.pt"}) {
        EXPECT_TRUE(fs::exists(run_dir / f)) << f;
    }
    EXPECT_FALSE(fs::exists(run_dir / ".lock"));
    const auto frozen_config = read_text_file(run_dir / "config.json");

    // Same config, different seed: the frozen copy is protected.
    EXPECT_EQ(run_cli({"--seed", "4", "--config", (dir / "ft.json").string(), "--out", run_dir.string(), "finetune"}),
              cli::kUsage);
    EXPECT_EQ(read_text_file(run_dir / "config.json"), frozen_config);

    ASSERT_EQ(run_cli({"--seed", "1", "--out", (dir / "pairs").string(), "pairs", "--manifest", manifest.string(),
                       "--count", "12"}),
              cli::kSuccess);
    const auto eval_dir = dir / "eval";
    ASSERT_EQ(run_cli({"--tap", "fc512", "--out", eval_dir.string(), "evaluate", "--checkpoint",
                       (run_dir / "final.pt").string(), "--pairs", (dir / "pairs" / "toy.pairs.csv").string(),
                       "--manifest", manifest.string()}),
              cli::kSuccess);
    std::size_t metrics = 0, plots = 0;
    for (const auto& e : fs::directory_iterator(eval_dir)) {
        metrics += e.path().extension() == ".metrics";
        plots += e.path().extension() == ".png";
    }
    EXPECT_EQ(metrics, 1u);
    EXPECT_EQ(plots, 2u);

    // Three members averaged at the bottleneck tap.
    const auto ens_dir = dir / "ensemble";
    ASSERT_EQ(run_cli({"--ensemble", "--out", ens_dir.string(), "evaluate", "--checkpoint",
                       (run_dir / "checkpoints/step_2.pt").string(), "--checkpoint",
                       (run_dir / "checkpoints/step_4.pt").string(), "--checkpoint", (run_dir / "final.pt").string(),
                       "--pairs", (dir / "pairs" / "toy.pairs.csv").string(), "--manifest", manifest.string()}),
              cli::kSuccess);
    bool found = false;
    for (const auto& e : fs::directory_iterator(ens_dir)) {
        if (e.path().extension() == ".metrics") {
            const auto r = eval::parse_metrics(read_text_file(e.path()));
            EXPECT_EQ(r.provenance.model_id, "ensemble");
            EXPECT_EQ(r.provenance.tap, "bottleneck");
            found = true;
        }
    }
    EXPECT_TRUE(found);
}

TEST(Cli, CorruptPairListFailsWithItsLineNumber) {
    const auto dir = testkit::fresh_dir("cli_corrupt_pairs");
    const auto manifest = paired_manifest(dir, 3);
    write_text_file(dir / "bad.pairs.csv", "# seed=1 generator=x dataset_id=toy\n"
                                           "reference_image_id,probe_image_id,label,dataset_id\n"
                                           "toy_0_0,toy_0_0_m,1,toy\n"
                                           "toy_0_1,toy_1_0_m,maybe,toy\n");
    auto model_dir = dir / "m";
    fs::create_directories(model_dir);
    torch::manual_seed(0);
    model::VerifierConfig c;
    c.backbone = model::preset_spec("resnet_tiny");
    model::VerifierModel m(c);
    model::save_checkpoint(m, {}, model_dir / "m.pt");
    ::testing::internal::CaptureStderr();
    const int code = run_cli({"--out", (dir / "eval").string(), "evaluate", "--checkpoint",
                              (model_dir / "m.pt").string(), "--pairs", (dir / "bad.pairs.csv").string(),
                              "--manifest", manifest.string()});
    const std::string err = ::testing::internal::GetCapturedStderr();
    EXPECT_EQ(code, cli::kDataFailure);
    EXPECT_NE(err.find("line 4"), std::string::npos) << err;
}

TEST(RunDirectory, LockIsExclusiveAndConfigFrozen) {
    const auto dir = testkit::fresh_dir("run_dir");
    {
        cli::RunDirectory first(dir / "r", "{\"a\":1}\n");
        EXPECT_TRUE(fs::exists(dir / "r" / ".lock"));
        EXPECT_THROW(cli::RunDirectory(dir / "r", "{\"a\":1}\n"), DataError);
    }
    EXPECT_FALSE(fs::exists(dir / "r" / ".lock"));
    EXPECT_NO_THROW(cli::RunDirectory(dir / "r", "{\"a\":1}\n"));
    EXPECT_THROW(cli::RunDirectory(dir / "r", "{\"a\":2}\n"), ConfigError);
    EXPECT_EQ(read_text_file(dir / "r" / "config.json"), "{\"a\":1}\n");
}
