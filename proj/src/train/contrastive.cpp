#include "maskmatch/train/contrastive.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <json.hpp>

#include <opencv2/imgcodecs.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"

namespace maskmatch::train {

void PretrainConfig::validate() const {
    if (batch_size == 0) {
        throw ConfigError("pretraining batch size must be positive");
    }
    if (queue_size < batch_size) {
        throw ConfigError("queue size " + std::to_string(queue_size) + " is smaller than batch size " +
                          std::to_string(batch_size));
    }
    if (!(temperature > 0.0)) {
        throw ConfigError("temperature must be positive");
    }
    if (!(momentum_coefficient > 0.0 && momentum_coefficient < 1.0)) {
        throw ConfigError("momentum coefficient must lie in (0, 1)");
    }
    if (!(learning_rate >= 0.0)) {
        throw ConfigError("learning rate must be non-negative");
    }
    if (projection_head && projection_dim <= 0) {
        throw ConfigError("projection dimension must be positive");
    }
}

std::string serialize_pretrain_config(const PretrainConfig& c) {
    const nlohmann::json j = {{"learning_rate", c.learning_rate},
                              {"batch_size", c.batch_size},
                              {"temperature", c.temperature},
                              {"queue_size", c.queue_size},
                              {"momentum_coefficient", c.momentum_coefficient},
                              {"epochs", c.epochs},
                              {"steps", c.steps},
                              {"augmentation_recipe", c.augmentation_recipe},
                              {"projection_head", c.projection_head},
                              {"projection_dim", c.projection_dim},
                              {"sgd_momentum", c.sgd_momentum},
                              {"weight_decay", c.weight_decay},
                              {"seed", c.seed}};
    return j.dump(2);
}

PretrainConfig parse_pretrain_config(std::string_view text) {
    static const std::set<std::string> known{"learning_rate", "batch_size",          "temperature",
                                             "queue_size",    "momentum_coefficient", "epochs",
                                             "steps",         "augmentation_recipe", "projection_head",
                                             "projection_dim", "sgd_momentum",        "weight_decay",
                                             "seed"};
    try {
        const auto j = nlohmann::json::parse(text);
        if (!j.is_object()) {
            throw ConfigError("pretrain config must be a JSON object");
        }
        for (const auto& [key, value] : j.items()) {
            if (!known.count(key)) {
                throw ConfigError("unknown pretrain config key '" + key + "'");
            }
        }
        PretrainConfig c;
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.temperature = j.value("temperature", c.temperature);
        c.queue_size = j.value("queue_size", c.queue_size);
        c.momentum_coefficient = j.value("momentum_coefficient", c.momentum_coefficient);
        c.epochs = j.value("epochs", c.epochs);
        c.steps = j.value("steps", c.steps);
        c.augmentation_recipe = j.value("augmentation_recipe", c.augmentation_recipe);
        c.projection_head = j.value("projection_head", c.projection_head);
        c.projection_dim = j.value("projection_dim", c.projection_dim);
        c.sgd_momentum = j.value("sgd_momentum", c.sgd_momentum);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.seed = j.value("seed", c.seed);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("pretrain config: ") + e.what());
    }
}

KeyQueue::KeyQueue(std::size_t capacity, std::int64_t dim, std::uint64_t seed) {
    if (capacity == 0 || dim <= 0) {
        throw ConfigError("key queue needs a positive capacity and dimension");
    }
    Rng rng(seed);
    std::vector<float> values(capacity * static_cast<std::size_t>(dim));
    for (auto& v : values) {
        v = static_cast<float>(rng.normal(0.0, 1.0));
    }
    storage_ = torch::from_blob(values.data(), {static_cast<std::int64_t>(capacity), dim}, torch::kFloat32).clone();
    storage_ = torch::nn::functional::normalize(storage_, torch::nn::functional::NormalizeFuncOptions().dim(1));
}

void KeyQueue::enqueue(const torch::Tensor& keys) {
    const auto batch = static_cast<std::size_t>(keys.size(0));
    if (keys.dim() != 2 || keys.size(1) != storage_.size(1) || batch > capacity()) {
        throw ShapeMismatch("keys do not fit the queue");
    }
    torch::NoGradGuard no_grad;
    const auto k = keys.detach().to(storage_.dtype());
    for (std::size_t i = 0; i < batch; ++i) {
        storage_[static_cast<std::int64_t>((head_ + i) % capacity())].copy_(k[static_cast<std::int64_t>(i)]);
    }
    head_ = (head_ + batch) % capacity();
}

torch::Tensor KeyQueue::keys() const {
    const auto h = static_cast<std::int64_t>(head_);
    return torch::cat({storage_.slice(0, h), storage_.slice(0, 0, h)});
}

torch::Tensor contrastive_loss(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& queue,
                               double temperature) {
    const auto positive = (q * k).sum(1, true);
    const auto negative = q.mm(queue.t());
    const auto logits = torch::cat({positive, negative}, 1) / temperature;
    const auto labels = torch::zeros({q.size(0)}, torch::TensorOptions().dtype(torch::kLong));
    return torch::nn::functional::cross_entropy(logits, labels);
}

void momentum_update(const std::vector<torch::Tensor>& key, const std::vector<torch::Tensor>& query, double m) {
    if (key.size() != query.size()) {
        throw ShapeMismatch("momentum update over mismatched parameter lists");
    }
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < key.size(); ++i) {
        key[i].mul_(m).add_(query[i].detach(), 1.0 - m);
    }
}

namespace {

torch::nn::Sequential make_projection(std::int64_t in, std::int64_t out) {
    return torch::nn::Sequential(torch::nn::Linear(in, in), torch::nn::ReLU(), torch::nn::Linear(in, out));
}

std::vector<torch::Tensor> encoder_parameters(model::VerifierModel& m, torch::nn::Sequential& projection) {
    auto params = m.backbone().parameters();
    if (!projection.is_empty()) {
        for (auto& p : projection->parameters()) {
            params.push_back(p);
        }
    }
    return params;
}

torch::Tensor encode(model::VerifierModel& m, torch::nn::Sequential& projection, const torch::Tensor& x) {
    auto z = m.embed(x);
    if (!projection.is_empty()) {
        z = projection->forward(z);
    }
    return torch::nn::functional::normalize(z, torch::nn::functional::NormalizeFuncOptions().dim(1));
}

}  // namespace

PretrainResult pretrain_contrastive(const PretrainConfig& config, const data::DatasetIndex& images,
                                    const model::VerifierConfig& model_config, const StepCallback& on_step) {
    config.validate();
    if (images.empty()) {
        throw DataError("pretraining needs at least one image");
    }
    const AugmentConfig recipe = augment_preset(config.augmentation_recipe);

    torch::manual_seed(derive_seed(config.seed, "pretrain_init"));
    PretrainResult result;
    result.model = model::make_verifier(model_config);
    auto& query_model = *result.model;
    const auto dim = query_model.embedding_dim();
    const auto out_dim = config.projection_head ? config.projection_dim : dim;

    torch::nn::Sequential query_proj{nullptr};
    torch::nn::Sequential key_proj{nullptr};
    if (config.projection_head) {
        query_proj = make_projection(dim, out_dim);
        key_proj = make_projection(dim, out_dim);
        torch::NoGradGuard no_grad;
        const auto src = query_proj->parameters();
        const auto dst = key_proj->parameters();
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i].copy_(src[i]);
        }
    }
    auto key_model = model::clone_model(query_model);
    query_model.train();
    key_model->train();

    const auto query_params = encoder_parameters(query_model, query_proj);
    const auto key_params = encoder_parameters(*key_model, key_proj);
    for (const auto& p : key_params) {
        p.set_requires_grad(false);
    }
    torch::optim::SGD optimizer(query_params, torch::optim::SGDOptions(config.learning_rate)
                                                  .momentum(config.sgd_momentum)
                                                  .weight_decay(config.weight_decay));

    KeyQueue queue(config.queue_size, out_dim, derive_seed(config.seed, "key_queue"));
    Rng rng(derive_seed(config.seed, "pretrain"));
    const auto records = images.records();
    const std::size_t n = records.size();
    const std::size_t batch = std::min(config.batch_size, n);
    const std::size_t per_epoch = std::max<std::size_t>(1, n / batch);
    const std::size_t total = config.steps > 0 ? config.steps : config.epochs * per_epoch;
    const int resolution = static_cast<int>(query_model.input_resolution());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = n;
    for (std::size_t step = 0; step < total; ++step) {
        std::vector<torch::Tensor> views_q, views_k;
        if (n - cursor < batch) {
            rng.shuffle(order);
            cursor = 0;
        }
        for (std::size_t b = 0; b < batch; ++b) {
            const auto& record = records[order[cursor++]];
            const cv::Mat image = cv::imread(images.resolve(record).string(), cv::IMREAD_COLOR);
            if (image.empty()) {
                throw DataError("cannot read image '" + record.image_id + "'");
            }
            for (auto* views : {&views_q, &views_k}) {
                const cv::Mat view = augment_view(image, recipe, resolution, rng);
                views->push_back(model::preprocess_image(view, resolution, query_model.config().normalization));
            }
        }
        const auto q_in = torch::stack(views_q);
        const auto k_in = torch::stack(views_k);

        torch::Tensor k;
        {
            torch::NoGradGuard no_grad;
            momentum_update(key_params, query_params, config.momentum_coefficient);
            k = encode(*key_model, key_proj, k_in);
        }
        const auto q = encode(query_model, query_proj, q_in);
        const auto loss = contrastive_loss(q, k, queue.storage(), config.temperature);
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
        queue.enqueue(k);

        const double value = loss.item<double>();
        result.loss_trace.push_back(value);
        if (on_step) {
            on_step(step + 1, value);
        }
    }
    result.steps = total;
    query_model.eval();
    return result;
}

}  // namespace maskmatch::train
