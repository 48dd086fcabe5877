#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/model/backbone.hpp"
#include "maskmatch/pairs/pair_protocol.hpp"

namespace maskmatch::model {

enum class Tap { final_output, fc512, bottleneck };

std::string_view to_string(Tap t);
// Accepts final/final_output, fc512 and bottleneck/bottleneck2048.
Tap parse_tap(std::string_view s);

// 1 / (1 + d). Throws DomainError for negative or NaN d.
double distance_to_similarity(double d);

struct Normalization {
    std::array<double, 3> mean{0.485, 0.456, 0.406};  // RGB
    std::array<double, 3> stddev{0.229, 0.224, 0.225};

    bool operator==(const Normalization&) const = default;
};

struct VerifierConfig {
    BackboneSpec backbone;
    std::int64_t head_width = 512;
    Normalization normalization;
    bool fc_tap_pre_sigmoid = false;

    bool operator==(const VerifierConfig&) const = default;
};

// Shared-weight Siamese verifier. Both branches run through the one backbone;
// the head maps |e_a - e_b| through a sigmoid layer of head_width units to a
// single linear logit.
class VerifierModel : public torch::nn::Module {
public:
    explicit VerifierModel(const VerifierConfig& config);
    // Custom backbone, used by toy networks in tests.
    VerifierModel(const VerifierConfig& config, std::shared_ptr<Backbone> backbone);

    const VerifierConfig& config() const { return config_; }
    std::int64_t input_resolution() const { return config_.backbone.input_resolution; }
    std::int64_t embedding_dim() const { return backbone_->embedding_dim(); }

    Backbone& backbone() { return *backbone_; }
    std::shared_ptr<Backbone> backbone_ptr() const { return backbone_; }
    torch::nn::Linear& fc() { return fc_; }
    torch::nn::Linear& out() { return out_; }

    // BGR 8-bit image of any size -> [3, R, R] float tensor.
    torch::Tensor preprocess(const cv::Mat& bgr) const;

    // [N, 3, R, R] -> [N, embedding_dim]. Throws ShapeMismatch.
    torch::Tensor embed(const torch::Tensor& batch);
    // Per-branch fc activations [N, head_width]; post-sigmoid unless configured otherwise.
    torch::Tensor branch_activation(const torch::Tensor& embeddings);
    // Training logit [N] for two aligned image batches.
    torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b);
    torch::Tensor logit_from_embeddings(const torch::Tensor& e_a, const torch::Tensor& e_b);

    // Similarity of two embedding vectors ([D] or [1, D]) at the given tap.
    double similarity_from_embeddings(const torch::Tensor& e_a, const torch::Tensor& e_b, Tap tap);
    // Inference on two preprocessed images ([3, R, R]); each is embedded alone,
    // so the result does not depend on argument order.
    double similarity(const torch::Tensor& a, const torch::Tensor& b, Tap tap);

    // Eval mode plus frozen batch-norm layers kept in eval mode while training.
    void train(bool on = true) override;
    // Parameterized backbone layers frozen by freeze_fraction; frozen norms stay in eval mode.
    void set_frozen_layers(std::size_t count);
    std::size_t frozen_layers() const { return frozen_layers_; }

private:
    VerifierConfig config_;
    std::shared_ptr<Backbone> backbone_;
    torch::nn::Linear fc_{nullptr};
    torch::nn::Linear out_{nullptr};
    std::size_t frozen_layers_ = 0;
};

// Deep copy through the parameter and buffer state.
std::shared_ptr<VerifierModel> clone_model(VerifierModel& model);
void copy_state(VerifierModel& from, VerifierModel& to);

// Thread-safe cache of preprocessed images keyed by image id.
class ImageTensorCache {
public:
    ImageTensorCache(const data::DatasetIndex& index, std::int64_t resolution, Normalization normalization,
                     std::size_t capacity = 20000);

    // Throws DataError when the image cannot be read.
    torch::Tensor get(const data::ImageRecord& record) const;
    const data::DatasetIndex& index() const { return *index_; }
    std::int64_t resolution() const { return resolution_; }

private:
    const data::DatasetIndex* index_;
    std::int64_t resolution_;
    Normalization normalization_;
    std::size_t capacity_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, torch::Tensor> entries_;
};

torch::Tensor preprocess_image(const cv::Mat& bgr, std::int64_t resolution, const Normalization& n);

// PairScorer over one model at one tap. The model is switched to eval mode
// and must not be trained while the scorer is in use. Embeddings are cached per
// image id.
class ModelScorer final : public pairs::PairScorer {
public:
    ModelScorer(std::shared_ptr<VerifierModel> model, const data::DatasetIndex& index, Tap tap,
                std::shared_ptr<ImageTensorCache> images = nullptr);

    double similarity(const data::ImageRecord& reference, const data::ImageRecord& probe) const override;
    torch::Tensor embedding(const data::ImageRecord& record) const;
    void clear_cache();
    Tap tap() const { return tap_; }

private:
    std::shared_ptr<VerifierModel> model_;
    std::shared_ptr<ImageTensorCache> images_;
    Tap tap_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, torch::Tensor> embeddings_;
};

// Mean of member similarities. Throws ConfigError when empty.
class EnsembleScorer final : public pairs::PairScorer {
public:
    explicit EnsembleScorer(std::vector<std::shared_ptr<const pairs::PairScorer>> members);
    double similarity(const data::ImageRecord& reference, const data::ImageRecord& probe) const override;
    std::size_t size() const { return members_.size(); }

private:
    std::vector<std::shared_ptr<const pairs::PairScorer>> members_;
};

// Members at the bottleneck tap.
EnsembleScorer make_ensemble(const std::vector<std::shared_ptr<VerifierModel>>& models,
                             const data::DatasetIndex& index);

struct Lineage {
    std::string checkpoint_id;
    std::string base;          // checkpoint id this run started from
    std::string preset;        // e.g. CP1, FT2
    std::string kind = "verifier";  // or "representation"
    std::int64_t step = 0;
    double precision = -1.0;   // validation precision, negative when unknown

    bool operator==(const Lineage&) const = default;
};

struct CheckpointManifest {
    VerifierConfig config;
    Lineage lineage;
    std::string checksum;  // FNV-1a over tensor names and bytes
};

struct LoadedCheckpoint {
    std::shared_ptr<VerifierModel> model;
    CheckpointManifest manifest;
};

void save_checkpoint(VerifierModel& model, const Lineage& lineage, const std::filesystem::path& path);
// Throws DataError for a missing file and ChecksumError for unreadable or
// tampered archives.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path);
// Copies backbone tensors from a checkpoint. Throws ShapeMismatch when the
// architectures differ.
void load_backbone_weights(VerifierModel& model, const std::filesystem::path& path);

// Builds the model and, when backbone.initial_weights is set, loads them.
std::shared_ptr<VerifierModel> make_verifier(const VerifierConfig& config);

std::string serialize_config(const VerifierConfig& config);
VerifierConfig parse_config(std::string_view json);

}  // namespace maskmatch::model
