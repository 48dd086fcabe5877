#include "maskmatch/model/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "maskmatch/common/error.hpp"

namespace maskmatch::model {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Tap t) {
    switch (t) {
        case Tap::final_output:
            return "final";
        case Tap::fc512:
            return "fc512";
        case Tap::bottleneck:
            return "bottleneck";
    }
    return "final";
}

Tap parse_tap(std::string_view s) {
    if (s == "final" || s == "final_output") {
        return Tap::final_output;
    }
    if (s == "fc512") {
        return Tap::fc512;
    }
    if (s == "bottleneck" || s == "bottleneck2048") {
        return Tap::bottleneck;
    }
    throw ConfigError("unknown similarity tap '" + std::string(s) + "' (expected final, fc512 or bottleneck)");
}

double distance_to_similarity(double d) {
    if (!(d >= 0.0)) {
        throw DomainError("distance must be non-negative");
    }
    return 1.0 / (1.0 + d);
}

VerifierModel::VerifierModel(const VerifierConfig& config) : VerifierModel(config, make_backbone(config.backbone)) {}

VerifierModel::VerifierModel(const VerifierConfig& config, std::shared_ptr<Backbone> backbone)
    : config_(config), backbone_(std::move(backbone)) {
    if (!backbone_) {
        throw ConfigError("verifier needs a backbone");
    }
    if (config_.head_width <= 0) {
        throw ConfigError("head width must be positive");
    }
    config_.backbone.embedding_dim = backbone_->embedding_dim();
    register_module("backbone", backbone_);
    fc_ = register_module("fc", torch::nn::Linear(backbone_->embedding_dim(), config_.head_width));
    out_ = register_module("out", torch::nn::Linear(config_.head_width, 1));
}

torch::Tensor preprocess_image(const cv::Mat& image, std::int64_t resolution, const Normalization& n) {
    if (image.empty()) {
        throw DataError("cannot preprocess an empty image");
    }
    cv::Mat rgb;
    if (image.channels() == 1) {
        cv::cvtColor(image, rgb, cv::COLOR_GRAY2RGB);
    } else if (image.channels() == 4) {
        cv::cvtColor(image, rgb, cv::COLOR_BGRA2RGB);
    } else {
        cv::cvtColor(image, rgb, cv::COLOR_BGR2RGB);
    }
    const int r = static_cast<int>(resolution);
    if (rgb.cols != r || rgb.rows != r) {
        const bool shrink = rgb.cols > r || rgb.rows > r;
        cv::resize(rgb, rgb, cv::Size(r, r), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    }
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    auto t = torch::from_blob(f.data, {r, r, 3}, torch::kFloat32).permute({2, 0, 1}).clone();
    const auto mean = torch::tensor({n.mean[0], n.mean[1], n.mean[2]}, torch::kFloat32).view({3, 1, 1});
    const auto stddev = torch::tensor({n.stddev[0], n.stddev[1], n.stddev[2]}, torch::kFloat32).view({3, 1, 1});
    return (t - mean) / stddev;
}

torch::Tensor VerifierModel::preprocess(const cv::Mat& bgr) const {
    return preprocess_image(bgr, config_.backbone.input_resolution, config_.normalization);
}

torch::Tensor VerifierModel::embed(const torch::Tensor& batch) {
    const auto r = config_.backbone.input_resolution;
    if (batch.dim() != 4 || batch.size(1) != 3 || batch.size(2) != r || batch.size(3) != r) {
        std::ostringstream msg;
        msg << "expected input [N, 3, " << r << ", " << r << "], got " << batch.sizes();
        throw ShapeMismatch(msg.str());
    }
    return backbone_->forward(batch);
}

torch::Tensor VerifierModel::branch_activation(const torch::Tensor& embeddings) {
    auto z = fc_(embeddings);
    return config_.fc_tap_pre_sigmoid ? z : torch::sigmoid(z);
}

torch::Tensor VerifierModel::logit_from_embeddings(const torch::Tensor& e_a, const torch::Tensor& e_b) {
    const auto h = torch::sigmoid(fc_(torch::abs(e_a - e_b)));
    return out_(h).squeeze(-1);
}

torch::Tensor VerifierModel::forward(const torch::Tensor& a, const torch::Tensor& b) {
    return logit_from_embeddings(embed(a), embed(b));
}

double VerifierModel::similarity_from_embeddings(const torch::Tensor& e_a, const torch::Tensor& e_b, Tap tap) {
    torch::NoGradGuard no_grad;
    const auto a = e_a.reshape({1, -1});
    const auto b = e_b.reshape({1, -1});
    if (a.size(1) != embedding_dim() || b.size(1) != embedding_dim()) {
        throw ShapeMismatch("embedding length differs from the model's embedding dimension");
    }
    switch (tap) {
        case Tap::final_output:
            return torch::sigmoid(logit_from_embeddings(a, b)).item<double>();
        case Tap::fc512: {
            const auto d = (branch_activation(a).to(torch::kFloat64) - branch_activation(b).to(torch::kFloat64)).norm();
            return distance_to_similarity(d.item<double>());
        }
        case Tap::bottleneck: {
            const auto d = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).norm();
            return distance_to_similarity(d.item<double>());
        }
    }
    return 0.0;
}

double VerifierModel::similarity(const torch::Tensor& a, const torch::Tensor& b, Tap tap) {
    torch::NoGradGuard no_grad;
    const auto e_a = embed(a.dim() == 3 ? a.unsqueeze(0) : a);
    const auto e_b = embed(b.dim() == 3 ? b.unsqueeze(0) : b);
    return similarity_from_embeddings(e_a, e_b, tap);
}

void VerifierModel::train(bool on) {
    torch::nn::Module::train(on);
    if (!on) {
        return;
    }
    const auto layers = parameterized_layers(*backbone_);
    for (std::size_t i = 0; i < std::min(frozen_layers_, layers.size()); ++i) {
        if (layers[i].second->as<torch::nn::BatchNorm2d>() != nullptr) {
            layers[i].second->eval();
        }
    }
}

void VerifierModel::set_frozen_layers(std::size_t count) {
    const auto layers = parameterized_layers(*backbone_);
    frozen_layers_ = std::min(count, layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        for (auto& p : layers[i].second->parameters(false)) {
            p.set_requires_grad(i >= frozen_layers_);
        }
    }
    for (auto& p : fc_->parameters()) {
        p.set_requires_grad(true);
    }
    for (auto& p : out_->parameters()) {
        p.set_requires_grad(true);
    }
    train(is_training());
}

void copy_state(VerifierModel& from, VerifierModel& to) {
    torch::NoGradGuard no_grad;
    auto dst_params = to.named_parameters(true);
    for (const auto& item : from.named_parameters(true)) {
        auto* dst = dst_params.find(item.key());
        if (dst == nullptr || dst->sizes() != item.value().sizes()) {
            throw ShapeMismatch("parameter '" + item.key() + "' differs between models");
        }
        dst->copy_(item.value());
    }
    auto dst_buffers = to.named_buffers(true);
    for (const auto& item : from.named_buffers(true)) {
        auto* dst = dst_buffers.find(item.key());
        if (dst == nullptr || dst->sizes() != item.value().sizes()) {
            throw ShapeMismatch("buffer '" + item.key() + "' differs between models");
        }
        dst->copy_(item.value());
    }
}

std::shared_ptr<VerifierModel> clone_model(VerifierModel& model) {
    VerifierConfig config = model.config();
    config.backbone.initial_weights.clear();
    auto copy = std::make_shared<VerifierModel>(config);
    copy_state(model, *copy);
    copy->set_frozen_layers(model.frozen_layers());
    copy->train(model.is_training());
    return copy;
}

ImageTensorCache::ImageTensorCache(const data::DatasetIndex& index, std::int64_t resolution,
                                   Normalization normalization, std::size_t capacity)
    : index_(&index), resolution_(resolution), normalization_(normalization), capacity_(capacity) {}

torch::Tensor ImageTensorCache::get(const data::ImageRecord& record) const {
    {
        const std::lock_guard lock(mutex_);
        const auto it = entries_.find(record.image_id);
        if (it != entries_.end()) {
            return it->second;
        }
    }
    const fs::path path = index_->resolve(record);
    const cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (image.empty()) {
        throw DataError("cannot read image '" + record.image_id + "' at " + path.string());
    }
    auto tensor = preprocess_image(image, resolution_, normalization_);
    const std::lock_guard lock(mutex_);
    if (entries_.size() < capacity_) {
        entries_.emplace(record.image_id, tensor);
    }
    return tensor;
}

ModelScorer::ModelScorer(std::shared_ptr<VerifierModel> model, const data::DatasetIndex& index, Tap tap,
                         std::shared_ptr<ImageTensorCache> images)
    : model_(std::move(model)), images_(std::move(images)), tap_(tap) {
    if (!model_) {
        throw ConfigError("scorer needs a model");
    }
    if (!images_) {
        images_ = std::make_shared<ImageTensorCache>(index, model_->input_resolution(),
                                                     model_->config().normalization);
    }
    model_->eval();
}

torch::Tensor ModelScorer::embedding(const data::ImageRecord& record) const {
    {
        const std::lock_guard lock(mutex_);
        const auto it = embeddings_.find(record.image_id);
        if (it != embeddings_.end()) {
            return it->second;
        }
    }
    torch::Tensor e;
    {
        torch::NoGradGuard no_grad;
        e = model_->embed(images_->get(record).unsqueeze(0)).squeeze(0);
    }
    const std::lock_guard lock(mutex_);
    embeddings_.emplace(record.image_id, e);
    return e;
}

double ModelScorer::similarity(const data::ImageRecord& reference, const data::ImageRecord& probe) const {
    return model_->similarity_from_embeddings(embedding(reference), embedding(probe), tap_);
}

void ModelScorer::clear_cache() {
    const std::lock_guard lock(mutex_);
    embeddings_.clear();
}

EnsembleScorer::EnsembleScorer(std::vector<std::shared_ptr<const pairs::PairScorer>> members)
    : members_(std::move(members)) {
    if (members_.empty()) {
        throw ConfigError("an ensemble needs at least one member");
    }
}

double EnsembleScorer::similarity(const data::ImageRecord& reference, const data::ImageRecord& probe) const {
    double sum = 0.0;
    for (const auto& m : members_) {
        sum += m->similarity(reference, probe);
    }
    return sum / static_cast<double>(members_.size());
}

EnsembleScorer make_ensemble(const std::vector<std::shared_ptr<VerifierModel>>& models,
                             const data::DatasetIndex& index) {
    std::vector<std::shared_ptr<const pairs::PairScorer>> members;
    for (const auto& m : models) {
        members.push_back(std::make_shared<ModelScorer>(m, index, Tap::bottleneck));
    }
    return EnsembleScorer(std::move(members));
}

namespace {

json config_json(const VerifierConfig& c) {
    return {{"backbone",
             {{"architecture", c.backbone.architecture},
              {"embedding_dim", c.backbone.embedding_dim},
              {"input_resolution", c.backbone.input_resolution},
              {"initial_weights", c.backbone.initial_weights}}},
            {"head_width", c.head_width},
            {"normalization", {{"mean", c.normalization.mean}, {"std", c.normalization.stddev}}},
            {"fc_tap_pre_sigmoid", c.fc_tap_pre_sigmoid}};
}

VerifierConfig config_from_json(const json& j) {
    VerifierConfig c;
    const json backbone = j.value("backbone", json::object());
    c.backbone = preset_spec(backbone.value("architecture", std::string("resnet50")));
    c.backbone.embedding_dim = backbone.value("embedding_dim", c.backbone.embedding_dim);
    c.backbone.input_resolution = backbone.value("input_resolution", c.backbone.input_resolution);
    c.backbone.initial_weights = backbone.value("initial_weights", std::string());
    c.head_width = j.value("head_width", c.head_width);
    if (j.contains("normalization")) {
        const auto& n = j.at("normalization");
        c.normalization.mean = n.value("mean", c.normalization.mean);
        c.normalization.stddev = n.value("std", c.normalization.stddev);
    }
    c.fc_tap_pre_sigmoid = j.value("fc_tap_pre_sigmoid", false);
    return c;
}

json lineage_json(const Lineage& l) {
    return {{"checkpoint_id", l.checkpoint_id}, {"base", l.base}, {"preset", l.preset},
            {"kind", l.kind},                   {"step", l.step}, {"precision", l.precision}};
}

Lineage lineage_from_json(const json& j) {
    Lineage l;
    l.checkpoint_id = j.value("checkpoint_id", std::string());
    l.base = j.value("base", std::string());
    l.preset = j.value("preset", std::string());
    l.kind = j.value("kind", std::string("verifier"));
    l.step = j.value("step", std::int64_t{0});
    l.precision = j.value("precision", -1.0);
    return l;
}

std::string archive_key(const std::string& name) {
    std::string key = "t__";
    for (char c : name) {
        key += c == '.' ? std::string("__") : std::string(1, c);
    }
    return key;
}

// Parameters and buffers by name, sorted.
std::map<std::string, torch::Tensor> state_of(VerifierModel& model) {
    std::map<std::string, torch::Tensor> state;
    for (const auto& item : model.named_parameters(true)) {
        state.emplace(item.key(), item.value());
    }
    for (const auto& item : model.named_buffers(true)) {
        state.emplace(item.key(), item.value());
    }
    return state;
}

std::string state_checksum(const std::map<std::string, torch::Tensor>& state) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto feed = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& [name, tensor] : state) {
        feed(reinterpret_cast<const unsigned char*>(name.data()), name.size());
        const auto t = tensor.detach().contiguous().cpu();
        feed(static_cast<const unsigned char*>(t.data_ptr()), t.numel() * t.element_size());
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

CheckpointManifest manifest_from_archive(torch::serialize::InputArchive& archive, const fs::path& path) {
    c10::IValue value;
    if (!archive.try_read("manifest", value) || !value.isString()) {
        throw ChecksumError("checkpoint " + path.string() + " has no manifest");
    }
    try {
        const json j = json::parse(value.toStringRef());
        CheckpointManifest m;
        m.config = config_from_json(j.at("config"));
        m.lineage = lineage_from_json(j.at("lineage"));
        m.checksum = j.at("checksum").get<std::string>();
        return m;
    } catch (const json::exception& e) {
        throw ChecksumError("checkpoint " + path.string() + " has a malformed manifest: " + e.what());
    }
}

void open_archive(torch::serialize::InputArchive& archive, const fs::path& path) {
    if (!fs::exists(path)) {
        throw DataError("checkpoint not found: " + path.string());
    }
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw ChecksumError("checkpoint " + path.string() + " is unreadable");
    }
}

}  // namespace

std::string serialize_config(const VerifierConfig& config) { return config_json(config).dump(2); }

VerifierConfig parse_config(std::string_view text) {
    try {
        return config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
}

void save_checkpoint(VerifierModel& model, const Lineage& lineage, const fs::path& path) {
    const auto state = state_of(model);
    VerifierConfig config = model.config();
    config.backbone.initial_weights.clear();
    const json manifest = {
        {"config", config_json(config)}, {"lineage", lineage_json(lineage)}, {"checksum", state_checksum(state)}};
    torch::serialize::OutputArchive archive;
    archive.write("manifest", c10::IValue(manifest.dump()));
    for (const auto& [name, tensor] : state) {
        archive.write(archive_key(name), tensor.detach(), /*is_buffer=*/true);
    }
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = fs::path(path.string() + ".tmp");
    archive.save_to(tmp.string());
    fs::rename(tmp, path);
}

CheckpointManifest read_checkpoint_manifest(const fs::path& path) {
    torch::serialize::InputArchive archive;
    open_archive(archive, path);
    return manifest_from_archive(archive, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
    torch::serialize::InputArchive archive;
    open_archive(archive, path);
    LoadedCheckpoint loaded;
    loaded.manifest = manifest_from_archive(archive, path);
    loaded.model = std::make_shared<VerifierModel>(loaded.manifest.config);
    auto state = state_of(*loaded.model);
    {
        torch::NoGradGuard no_grad;
        for (auto& [name, tensor] : state) {
            torch::Tensor stored;
            if (!archive.try_read(archive_key(name), stored, /*is_buffer=*/true)) {
                throw ChecksumError("checkpoint " + path.string() + " lacks tensor '" + name + "'");
            }
            if (stored.sizes() != tensor.sizes()) {
                throw ShapeMismatch("checkpoint tensor '" + name + "' has an unexpected shape");
            }
            tensor.copy_(stored);
        }
    }
    if (state_checksum(state) != loaded.manifest.checksum) {
        throw ChecksumError("checkpoint " + path.string() + " fails its checksum");
    }
    loaded.model->eval();
    return loaded;
}

void load_backbone_weights(VerifierModel& model, const fs::path& path) {
    const LoadedCheckpoint source = load_checkpoint(path);
    const auto& theirs = source.manifest.config.backbone;
    const auto& ours = model.config().backbone;
    if (theirs.architecture != ours.architecture || theirs.embedding_dim != ours.embedding_dim) {
        throw ShapeMismatch("checkpoint backbone " + theirs.architecture + " does not match " + ours.architecture);
    }
    torch::NoGradGuard no_grad;
    auto dst_params = model.backbone().named_parameters(true);
    for (const auto& item : source.model->backbone().named_parameters(true)) {
        dst_params[item.key()].copy_(item.value());
    }
    auto dst_buffers = model.backbone().named_buffers(true);
    for (const auto& item : source.model->backbone().named_buffers(true)) {
        dst_buffers[item.key()].copy_(item.value());
    }
}

std::shared_ptr<VerifierModel> make_verifier(const VerifierConfig& config) {
    auto model = std::make_shared<VerifierModel>(config);
    if (!config.backbone.initial_weights.empty()) {
        load_backbone_weights(*model, config.backbone.initial_weights);
    }
    return model;
}

}  // namespace maskmatch::model
