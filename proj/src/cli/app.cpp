#include <iostream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "commands.hpp"
#include "maskmatch/cli/app.hpp"
#include "maskmatch/common/error.hpp"

namespace maskmatch::cli {

int run(int argc, const char* const* argv) {
    CLI::App app{"Masked-probe face verification toolkit", "maskmatch"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    std::uint64_t seed = 0;
    auto* seed_opt = app.add_option("--seed", seed, "Global seed, expanded per subsystem");
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--out", g.out, "Output file or run directory");
    app.add_option("--tap", g.tap, "Similarity tap")->check(CLI::IsMember({"final", "fc512", "bottleneck"}));
    app.add_flag("--ensemble", g.ensemble, "Average member similarities at the bottleneck tap");
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic unmasked face corpus");
    synth_cmd->add_option("--dataset", synth.dataset, "Dataset id");
    synth_cmd->add_option("--identities", synth.identities, "Number of identities");
    synth_cmd->add_option("--images", synth.images, "Images per identity");
    synth_cmd->add_option("--canvas", synth.canvas, "Image side in pixels")->check(CLI::Range(64, 1024));

    FitOptions fit_detector, fit_landmarks;
    auto* detector_cmd = app.add_subcommand("fit-detector", "Train the HOG face detector on rendered faces");
    detector_cmd->add_option("--samples", fit_detector.samples, "Positive face samples");
    auto* landmarks_cmd = app.add_subcommand("fit-landmarks", "Train the LBF landmark model on rendered faces");
    landmarks_cmd->add_option("--samples", fit_landmarks.samples, "Training faces");

    ScanOptions scan;
    auto* scan_cmd = app.add_subcommand("scan", "Index an <identity>/<image> directory tree");
    scan_cmd->add_option("--root", scan.root, "Image tree root")->required();
    scan_cmd->add_option("--dataset", scan.dataset, "Dataset id")->required();
    scan_cmd->add_option("--variant", scan.variant, "unmasked or masked");

    ManifestOptions mask;
    auto* mask_cmd = app.add_subcommand("mask", "Synthesize masked images from a manifest");
    mask_cmd->add_option("--manifest", mask.manifests, "Input manifest(s)")->required();

    SplitOptions split;
    auto* split_cmd = app.add_subcommand("split", "Assign identities to train/validation/holdout");
    split_cmd->add_option("--manifest", split.manifest, "Input manifest")->required();
    split_cmd->add_option("--train", split.train, "Train fraction");
    split_cmd->add_option("--validation", split.validation, "Validation fraction");

    PairsOptions pairs;
    auto* pairs_cmd = app.add_subcommand("pairs", "Generate balanced benchmark pair lists per dataset");
    pairs_cmd->add_option("--manifest", pairs.manifests, "Input manifest(s)")->required();
    pairs_cmd->add_option("--count", pairs.count, "Pairs per dataset (even)");

    auto* pretrain_cmd = app.add_subcommand("pretrain", "Contrastive representation pretraining");
    auto* finetune_cmd = app.add_subcommand("finetune", "Supervised Siamese finetuning");
    auto* benchmark1_cmd = app.add_subcommand("benchmark1", "Single-dataset training, multi-holdout evaluation");
    auto* benchmark2_cmd = app.add_subcommand("benchmark2", "Multi-dataset CP/FT workflow with ensemble");

    EvaluateOptions evaluate;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a pair list and write metrics and plots");
    evaluate_cmd->add_option("--checkpoint", evaluate.checkpoints, "Checkpoint file(s)")->required();
    evaluate_cmd->add_option("--pairs", evaluate.pairs, "Benchmark pair list")->required();
    evaluate_cmd->add_option("--manifest", evaluate.manifests, "Manifest(s) covering the pair list")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    if (seed_opt->count() > 0) {
        g.seed = seed;
    }
    torch::set_num_threads(1);

    try {
        if (*synth_cmd) return cmd_synth(g, synth);
        if (*detector_cmd) return cmd_fit_detector(g, fit_detector);
        if (*landmarks_cmd) return cmd_fit_landmarks(g, fit_landmarks);
        if (*scan_cmd) return cmd_scan(g, scan);
        if (*mask_cmd) return cmd_mask(g, mask);
        if (*split_cmd) return cmd_split(g, split);
        if (*pairs_cmd) return cmd_pairs(g, pairs);
        if (*pretrain_cmd) return cmd_pretrain(g);
        if (*finetune_cmd) return cmd_finetune(g);
        if (*evaluate_cmd) return cmd_evaluate(g, evaluate);
        if (*benchmark1_cmd) return cmd_benchmark1(g);
        if (*benchmark2_cmd) return cmd_benchmark2(g);
    } catch (const ConfigError& e) {
        std::cerr << "maskmatch: configuration error: " << e.what() << '\n';
        return kUsage;
    } catch (const DomainError& e) {
        std::cerr << "maskmatch: invalid argument: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "maskmatch: data error: " << e.what() << '\n';
        return kDataFailure;
    } catch (const std::exception& e) {
        std::cerr << "maskmatch: failure: " << e.what() << '\n';
        return kRunFailure;
    }
    return kUsage;
}

}  // namespace maskmatch::cli
