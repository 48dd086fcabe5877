#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace maskmatch::cli {

struct GlobalOptions {
    std::filesystem::path config;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out;
    std::string tap = "bottleneck";
    bool ensemble = false;
    unsigned workers = 1;
};

struct SynthOptions {
    std::string dataset = "synthetic";
    std::size_t identities = 20;
    std::size_t images = 6;
    int canvas = 128;
};

struct FitOptions {
    int samples = 0;  // 0 keeps the trainer default
};

struct ScanOptions {
    std::filesystem::path root;
    std::string dataset;
    std::string variant = "unmasked";
};

struct ManifestOptions {
    std::vector<std::filesystem::path> manifests;
};

struct SplitOptions {
    std::filesystem::path manifest;
    double train = 0.8;
    double validation = 0.1;
};

struct PairsOptions {
    std::vector<std::filesystem::path> manifests;
    std::size_t count = 200;
};

struct EvaluateOptions {
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path pairs;
    std::vector<std::filesystem::path> manifests;
};

int cmd_synth(const GlobalOptions& g, const SynthOptions& o);
int cmd_fit_detector(const GlobalOptions& g, const FitOptions& o);
int cmd_fit_landmarks(const GlobalOptions& g, const FitOptions& o);
int cmd_scan(const GlobalOptions& g, const ScanOptions& o);
int cmd_mask(const GlobalOptions& g, const ManifestOptions& o);
int cmd_split(const GlobalOptions& g, const SplitOptions& o);
int cmd_pairs(const GlobalOptions& g, const PairsOptions& o);
int cmd_pretrain(const GlobalOptions& g);
int cmd_finetune(const GlobalOptions& g);
int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o);
int cmd_benchmark1(const GlobalOptions& g);
int cmd_benchmark2(const GlobalOptions& g);

}  // namespace maskmatch::cli
