#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/model/verifier.hpp"
#include "maskmatch/train/augment.hpp"

namespace maskmatch::train {

struct PretrainConfig {
    double learning_rate = 0.015;
    std::size_t batch_size = 128;
    double temperature = 0.2;
    std::size_t queue_size = 4096;
    double momentum_coefficient = 0.999;
    std::size_t epochs = 1;
    std::size_t steps = 0;  // when non-zero, overrides epochs
    std::string augmentation_recipe = "mocov2";
    bool projection_head = true;
    std::int64_t projection_dim = 128;
    double sgd_momentum = 0.9;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    // Throws ConfigError when queue_size < batch_size, temperature <= 0,
    // momentum_coefficient outside (0, 1) or batch_size == 0.
    void validate() const;
};

std::string serialize_pretrain_config(const PretrainConfig& config);
// Unset keys keep their defaults; unknown keys raise ConfigError.
PretrainConfig parse_pretrain_config(std::string_view json);

// FIFO of key embeddings. Starts full of random unit vectors; each enqueue
// overwrites the oldest entries.
class KeyQueue {
public:
    KeyQueue(std::size_t capacity, std::int64_t dim, std::uint64_t seed);

    void enqueue(const torch::Tensor& keys);  // [B, dim], B <= capacity
    // Keys oldest first, [capacity, dim].
    torch::Tensor keys() const;
    // Ring storage, for the loss; row order is irrelevant there.
    const torch::Tensor& storage() const { return storage_; }
    std::size_t capacity() const { return static_cast<std::size_t>(storage_.size(0)); }

private:
    torch::Tensor storage_;
    std::size_t head_ = 0;  // next slot to overwrite, i.e. the oldest entry
};

// Cross-entropy of the positive key against queue negatives with logits
// scaled by 1/temperature. q, k: [B, D]; queue: [K, D].
torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& queue,
                               double temperature);

// key <- m * key + (1 - m) * query, element-wise over aligned lists.
void momentum_update(const std::vector<torch::Tensor>& key, const std::vector<torch::Tensor>& query, double m);

struct PretrainResult {
    std::shared_ptr<model::VerifierModel> model;  // backbone trained, projection stripped
    std::vector<double> loss_trace;
    std::size_t steps = 0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

// Momentum-contrast instance discrimination over all images of the index
// (both variants). Two augmented views per image; the query encoder is the
// model backbone plus an optional projection MLP.
PretrainResult pretrain_contrastive(const PretrainConfig& config, const data::DatasetIndex& images,
                                    const model::VerifierConfig& model_config, const StepCallback& on_step = {});

}  // namespace maskmatch::train
