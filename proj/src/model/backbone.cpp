#include "maskmatch/model/backbone.hpp"

#include <array>

#include "maskmatch/common/error.hpp"

namespace maskmatch::model {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv(std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride = 1, std::int64_t groups = 1,
                bool bias = false) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).groups(groups).bias(bias));
}

void init_weights(nn::Module& root) {
    torch::NoGradGuard guard;
    for (auto& m : root.modules(false)) {
        if (auto* c = m->as<nn::Conv2d>()) {
            nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
            if (c->bias.defined()) {
                nn::init::zeros_(c->bias);
            }
        } else if (auto* b = m->as<nn::BatchNorm2d>()) {
            nn::init::ones_(b->weight);
            nn::init::zeros_(b->bias);
        }
    }
}

class Block : public nn::Module {
public:
    virtual torch::Tensor forward(torch::Tensor x) = 0;
};

class BasicBlock final : public Block {
public:
    BasicBlock(std::int64_t in, std::int64_t out, std::int64_t stride) {
        conv1_ = register_module("conv1", conv(in, out, 3, stride));
        bn1_ = register_module("bn1", nn::BatchNorm2d(out));
        conv2_ = register_module("conv2", conv(out, out, 3));
        bn2_ = register_module("bn2", nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            down_conv_ = register_module("down_conv", conv(in, out, 1, stride));
            down_bn_ = register_module("down_bn", nn::BatchNorm2d(out));
        }
    }

    torch::Tensor forward(torch::Tensor x) override {
        auto y = torch::relu(bn1_(conv1_(x)));
        y = bn2_(conv2_(y));
        auto shortcut = down_conv_ ? down_bn_(down_conv_(x)) : x;
        return torch::relu(y + shortcut);
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, down_conv_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, down_bn_{nullptr};
};

class BottleneckBlock final : public Block {
public:
    static constexpr std::int64_t kExpansion = 4;

    BottleneckBlock(std::int64_t in, std::int64_t width, std::int64_t stride) {
        const std::int64_t out = width * kExpansion;
        conv1_ = register_module("conv1", conv(in, width, 1));
        bn1_ = register_module("bn1", nn::BatchNorm2d(width));
        conv2_ = register_module("conv2", conv(width, width, 3, stride));
        bn2_ = register_module("bn2", nn::BatchNorm2d(width));
        conv3_ = register_module("conv3", conv(width, out, 1));
        bn3_ = register_module("bn3", nn::BatchNorm2d(out));
        if (stride != 1 || in != out) {
            down_conv_ = register_module("down_conv", conv(in, out, 1, stride));
            down_bn_ = register_module("down_bn", nn::BatchNorm2d(out));
        }
    }

    torch::Tensor forward(torch::Tensor x) override {
        auto y = torch::relu(bn1_(conv1_(x)));
        y = torch::relu(bn2_(conv2_(y)));
        y = bn3_(conv3_(y));
        auto shortcut = down_conv_ ? down_bn_(down_conv_(x)) : x;
        return torch::relu(y + shortcut);
    }

private:
    nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr}, down_conv_{nullptr};
    nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr}, down_bn_{nullptr};
};

struct ResNetLayout {
    bool bottleneck;
    std::array<std::int64_t, 4> blocks;
    std::array<std::int64_t, 4> widths;
    bool imagenet_stem;  // 7x7/2 conv + max pool, otherwise 3x3/2 conv
};

class ResNet final : public Backbone {
public:
    explicit ResNet(const ResNetLayout& layout)
        : Backbone(layout.widths[3] * (layout.bottleneck ? BottleneckBlock::kExpansion : 1)),
          imagenet_stem_(layout.imagenet_stem) {
        const std::int64_t stem_width = layout.widths[0];
        stem_conv_ = register_module("stem_conv", conv(3, stem_width, layout.imagenet_stem ? 7 : 3, 2));
        stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(stem_width));
        std::int64_t in = stem_width;
        for (int stage = 0; stage < 4; ++stage) {
            for (std::int64_t b = 0; b < layout.blocks[stage]; ++b) {
                const std::int64_t stride = (b == 0 && stage > 0) ? 2 : 1;
                const std::string name = "layer" + std::to_string(stage + 1) + "_" + std::to_string(b);
                std::shared_ptr<Block> block;
                if (layout.bottleneck) {
                    block = std::make_shared<BottleneckBlock>(in, layout.widths[stage], stride);
                    in = layout.widths[stage] * BottleneckBlock::kExpansion;
                } else {
                    block = std::make_shared<BasicBlock>(in, layout.widths[stage], stride);
                    in = layout.widths[stage];
                }
                blocks_.push_back(register_module(name, block));
            }
        }
        init_weights(*this);
    }

    torch::Tensor forward(torch::Tensor x) override {
        x = torch::relu(stem_bn_(stem_conv_(x)));
        if (imagenet_stem_) {
            x = torch::max_pool2d(x, 3, 2, 1);
        }
        for (auto& b : blocks_) {
            x = b->forward(x);
        }
        return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    }

private:
    bool imagenet_stem_;
    nn::Conv2d stem_conv_{nullptr};
    nn::BatchNorm2d stem_bn_{nullptr};
    std::vector<std::shared_ptr<Block>> blocks_;
};

class Vgg final : public Backbone {
public:
    // Channel counts; 0 marks a 2x2 max pool.
    explicit Vgg(const std::vector<std::int64_t>& config) : Backbone(512) {
        std::int64_t in = 3;
        int index = 0;
        for (std::int64_t c : config) {
            if (c == 0) {
                ops_.push_back(nullptr);
                continue;
            }
            auto layer = register_module("conv" + std::to_string(index++), conv(in, c, 3, 1, 1, true));
            ops_.push_back(layer);
            in = c;
        }
        init_weights(*this);
    }

    torch::Tensor forward(torch::Tensor x) override {
        for (auto& op : ops_) {
            x = op ? torch::relu(op->forward(x)) : torch::max_pool2d(x, 2, 2);
        }
        return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    }

private:
    std::vector<std::shared_ptr<nn::Conv2dImpl>> ops_;
};

class InvertedResidual final : public Block {
public:
    InvertedResidual(std::int64_t in, std::int64_t out, std::int64_t stride, std::int64_t expand)
        : residual_(stride == 1 && in == out) {
        const std::int64_t hidden = in * expand;
        if (expand != 1) {
            expand_conv_ = register_module("expand_conv", conv(in, hidden, 1));
            expand_bn_ = register_module("expand_bn", nn::BatchNorm2d(hidden));
        }
        dw_conv_ = register_module("dw_conv", conv(hidden, hidden, 3, stride, hidden));
        dw_bn_ = register_module("dw_bn", nn::BatchNorm2d(hidden));
        project_conv_ = register_module("project_conv", conv(hidden, out, 1));
        project_bn_ = register_module("project_bn", nn::BatchNorm2d(out));
    }

    torch::Tensor forward(torch::Tensor x) override {
        auto y = x;
        if (expand_conv_) {
            y = torch::clamp(expand_bn_(expand_conv_(y)), 0.0, 6.0);
        }
        y = torch::clamp(dw_bn_(dw_conv_(y)), 0.0, 6.0);
        y = project_bn_(project_conv_(y));
        return residual_ ? x + y : y;
    }

private:
    bool residual_;
    nn::Conv2d expand_conv_{nullptr}, dw_conv_{nullptr}, project_conv_{nullptr};
    nn::BatchNorm2d expand_bn_{nullptr}, dw_bn_{nullptr}, project_bn_{nullptr};
};

class MobileNetV2 final : public Backbone {
public:
    MobileNetV2() : Backbone(1280) {
        stem_conv_ = register_module("stem_conv", conv(3, 32, 3, 2));
        stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(32));
        // expansion, channels, repeats, stride
        const std::int64_t settings[7][4] = {{1, 16, 1, 1}, {6, 24, 2, 2}, {6, 32, 3, 2}, {6, 64, 4, 2},
                                             {6, 96, 3, 1}, {6, 160, 3, 2}, {6, 320, 1, 1}};
        std::int64_t in = 32;
        int index = 0;
        for (const auto& s : settings) {
            for (std::int64_t r = 0; r < s[2]; ++r) {
                blocks_.push_back(register_module("block" + std::to_string(index++),
                                                  std::make_shared<InvertedResidual>(in, s[1], r == 0 ? s[3] : 1, s[0])));
                in = s[1];
            }
        }
        head_conv_ = register_module("head_conv", conv(in, 1280, 1));
        head_bn_ = register_module("head_bn", nn::BatchNorm2d(1280));
        init_weights(*this);
    }

    torch::Tensor forward(torch::Tensor x) override {
        x = torch::clamp(stem_bn_(stem_conv_(x)), 0.0, 6.0);
        for (auto& b : blocks_) {
            x = b->forward(x);
        }
        x = torch::clamp(head_bn_(head_conv_(x)), 0.0, 6.0);
        return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
    }

private:
    nn::Conv2d stem_conv_{nullptr}, head_conv_{nullptr};
    nn::BatchNorm2d stem_bn_{nullptr}, head_bn_{nullptr};
    std::vector<std::shared_ptr<Block>> blocks_;
};

}  // namespace

const std::vector<std::string>& backbone_presets() {
    static const std::vector<std::string> names{"resnet50", "resnet18", "vgg16", "vgg19", "mobilenet_v2",
                                                "resnet_tiny"};
    return names;
}

BackboneSpec preset_spec(const std::string& architecture) {
    if (architecture == "resnet50") {
        return {"resnet50", 2048, 224, {}};
    }
    if (architecture == "resnet18") {
        return {"resnet18", 512, 224, {}};
    }
    if (architecture == "vgg16" || architecture == "vgg19") {
        return {architecture, 512, 224, {}};
    }
    if (architecture == "mobilenet_v2") {
        return {"mobilenet_v2", 1280, 224, {}};
    }
    if (architecture == "resnet_tiny") {
        return {"resnet_tiny", 128, 64, {}};
    }
    throw ConfigError("unknown backbone preset '" + architecture + "'");
}

std::shared_ptr<Backbone> make_backbone(const BackboneSpec& spec) {
    const BackboneSpec reference = preset_spec(spec.architecture);
    if (spec.embedding_dim != reference.embedding_dim) {
        throw ConfigError(spec.architecture + " produces " + std::to_string(reference.embedding_dim) +
                          "-dimensional embeddings, not " + std::to_string(spec.embedding_dim));
    }
    if (spec.input_resolution < 32) {
        throw ConfigError("input resolution must be at least 32 pixels");
    }
    const std::string& a = spec.architecture;
    if (a == "resnet50") {
        return std::make_shared<ResNet>(ResNetLayout{true, {3, 4, 6, 3}, {64, 128, 256, 512}, true});
    }
    if (a == "resnet18") {
        return std::make_shared<ResNet>(ResNetLayout{false, {2, 2, 2, 2}, {64, 128, 256, 512}, true});
    }
    if (a == "resnet_tiny") {
        return std::make_shared<ResNet>(ResNetLayout{false, {1, 1, 1, 1}, {16, 32, 64, 128}, false});
    }
    if (a == "vgg16") {
        return std::make_shared<Vgg>(std::vector<std::int64_t>{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512,
                                                               512, 0, 512, 512, 512, 0});
    }
    if (a == "vgg19") {
        return std::make_shared<Vgg>(std::vector<std::int64_t>{64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512,
                                                               512, 512, 512, 0, 512, 512, 512, 512, 0});
    }
    return std::make_shared<MobileNetV2>();
}

std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> parameterized_layers(nn::Module& root) {
    std::vector<std::pair<std::string, std::shared_ptr<nn::Module>>> out;
    for (const auto& item : root.named_modules("", false)) {
        if (!item.value()->named_parameters(false).is_empty()) {
            out.emplace_back(item.key(), item.value());
        }
    }
    return out;
}

}  // namespace maskmatch::model
