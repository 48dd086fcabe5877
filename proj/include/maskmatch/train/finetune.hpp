#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/eval/protocol.hpp"
#include "maskmatch/model/verifier.hpp"
#include "maskmatch/pairs/pair_protocol.hpp"

namespace maskmatch::train {

// Freezes the first floor(p * L) of the L parameterized backbone layers and
// returns that count. The head stays trainable. Throws DomainError outside [0, 1].
std::size_t freeze_fraction(model::VerifierModel& model, double p);

struct FinetuneConfig {
    std::string preset;
    std::string base_checkpoint;
    std::size_t iterations = 1000;  // optimizer steps, one batch each
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    double frozen_fraction = 0.5;
    std::optional<std::size_t> hard_sample_size;  // mining enabled iff set
    pairs::DrawMode draw_mode = pairs::DrawMode::uniform;
    double authentic_probability = 0.5;
    std::size_t validation_interval = 2500;
    eval::PrecisionOptions validation;
    double retention_threshold = 0.90;
    std::size_t mining_refresh_interval = 1;
    std::uint64_t seed = 0;

    bool operator==(const FinetuneConfig&) const = default;
};

// Published training presets. CP rows finetune the contrastive representation; FT rows
// continue from a CP checkpoint.
const std::vector<std::string>& preset_names();
// Throws ConfigError for unknown names.
FinetuneConfig preset_config(const std::string& name);

std::string serialize_finetune_config(const FinetuneConfig& config);
// Unset keys keep their defaults, or the preset's when "preset" is given.
FinetuneConfig parse_finetune_config(std::string_view json);

struct ValidationRecord {
    std::size_t step = 0;
    double precision = 0.0;
    bool retained = false;
    std::string checkpoint_id;  // empty unless retained
    std::filesystem::path checkpoint_path;
};

struct TrainingRun {
    FinetuneConfig config;
    std::vector<double> loss_trace;  // one entry per step
    std::vector<ValidationRecord> validations;
    std::map<std::string, std::size_t> dataset_counts;  // training pairs drawn per dataset
    std::shared_ptr<model::VerifierModel> model;         // state after the last step

    // Validations whose precision met the threshold, in step order.
    std::vector<ValidationRecord> retained() const;
    const ValidationRecord* best() const;
};

struct FinetuneInputs {
    std::shared_ptr<model::VerifierModel> model;
    const pairs::PairPool* train = nullptr;
    const pairs::PairPool* validation = nullptr;  // optional
    std::string base_id;                           // lineage of the starting weights
    std::optional<std::filesystem::path> run_dir;  // log and retained checkpoints
};

using ValidationCallback = std::function<void(const ValidationRecord&)>;

// Plain SGD on binary cross-entropy of the final logit. Validation runs every
// validation_interval steps and after the last step; checkpoints at or above
// the retention threshold are written to run_dir/checkpoints/step_<N>.pt.
// The model is trained in place.
TrainingRun finetune_supervised(const FinetuneConfig& config, const FinetuneInputs& inputs,
                                const ValidationCallback& on_validation = {});

// Identical to finetune_supervised; the training pool's datasets are drawn
// per config.draw_mode.
TrainingRun multi_dataset_finetune(const FinetuneConfig& config, const FinetuneInputs& inputs,
                                   const ValidationCallback& on_validation = {});

// Union of several indices with absolute image paths.
data::DatasetIndex merge_indices(const std::vector<data::DatasetIndex>& indices);

}  // namespace maskmatch::train
