#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace maskmatch::model {

struct BackboneSpec {
    std::string architecture = "resnet50";
    std::int64_t embedding_dim = 2048;
    std::int64_t input_resolution = 224;
    std::string initial_weights;  // representation checkpoint, empty for random init

    bool operator==(const BackboneSpec&) const = default;
};

// Registered presets: resnet50, resnet18, vgg16, vgg19, mobilenet_v2 and
// resnet_tiny (a desk-scale residual net).
const std::vector<std::string>& backbone_presets();
// Throws ConfigError for unknown names.
BackboneSpec preset_spec(const std::string& architecture);

// Image-to-embedding network. Submodules are registered in forward order so
// that parameterized_layers() lists layers topologically.
class Backbone : public torch::nn::Module {
public:
    explicit Backbone(std::int64_t embedding_dim) : embedding_dim_(embedding_dim) {}
    // [N, 3, H, W] -> [N, embedding_dim]
    virtual torch::Tensor forward(torch::Tensor x) = 0;
    std::int64_t embedding_dim() const { return embedding_dim_; }

private:
    std::int64_t embedding_dim_;
};

std::shared_ptr<Backbone> make_backbone(const BackboneSpec& spec);

// Leaf modules owning parameters (convolutions, norms, linears), in
// registration order, with their dotted names relative to `root`.
std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> parameterized_layers(
    torch::nn::Module& root);

}  // namespace maskmatch::model
