#include "maskmatch/train/finetune.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"

namespace maskmatch::train {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::size_t freeze_fraction(model::VerifierModel& model, double p) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("frozen fraction must lie in [0, 1]");
    }
    const std::size_t layers = model::parameterized_layers(model.backbone()).size();
    const auto count = static_cast<std::size_t>(std::floor(p * static_cast<double>(layers)));
    model.set_frozen_layers(count);
    return count;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"CP1", "CP2", "FT1", "FT2", "FT3"};
    return names;
}

FinetuneConfig preset_config(const std::string& name) {
    FinetuneConfig c;
    c.preset = name;
    if (name == "CP1" || name == "CP2") {
        c.iterations = name == "CP1" ? 695000 : 885000;
        c.batch_size = 128;
        c.learning_rate = 1.0;
        c.frozen_fraction = 0.5;
        c.draw_mode = pairs::DrawMode::uniform;
        return c;
    }
    c.batch_size = 32;
    c.draw_mode = pairs::DrawMode::stratified;
    if (name == "FT1") {
        c.base_checkpoint = "CP1";
        c.iterations = 11001;
        c.learning_rate = 0.001;
        c.frozen_fraction = 0.9;
        c.hard_sample_size = 16;
    } else if (name == "FT2") {
        c.base_checkpoint = "CP1";
        c.iterations = 11251;
        c.learning_rate = 0.01;
        c.frozen_fraction = 0.8;
        c.hard_sample_size = 32;
    } else if (name == "FT3") {
        c.base_checkpoint = "CP2";
        c.iterations = 14501;
        c.learning_rate = 0.01;
        c.frozen_fraction = 0.5;
        c.hard_sample_size = 10;
    } else {
        throw ConfigError("unknown training preset '" + name + "'");
    }
    return c;
}

std::string serialize_finetune_config(const FinetuneConfig& c) {
    json j = {{"preset", c.preset},
              {"base_checkpoint", c.base_checkpoint},
              {"iterations", c.iterations},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"frozen_fraction", c.frozen_fraction},
              {"hard_sample_size", nullptr},
              {"draw_strategy", std::string(pairs::to_string(c.draw_mode))},
              {"authentic_probability", c.authentic_probability},
              {"validation_interval", c.validation_interval},
              {"validation_steps", c.validation.steps},
              {"validation_imposters", c.validation.imposters_per_step},
              {"retention_threshold", c.retention_threshold},
              {"mining_refresh_interval", c.mining_refresh_interval},
              {"seed", c.seed}};
    if (c.hard_sample_size) {
        j["hard_sample_size"] = *c.hard_sample_size;
    }
    return j.dump(2);
}

FinetuneConfig parse_finetune_config(std::string_view text) {
    static const std::set<std::string> known{"preset",
                                             "base_checkpoint",
                                             "iterations",
                                             "batch_size",
                                             "learning_rate",
                                             "frozen_fraction",
                                             "hard_sample_size",
                                             "draw_strategy",
                                             "authentic_probability",
                                             "validation_interval",
                                             "validation_steps",
                                             "validation_imposters",
                                             "retention_threshold",
                                             "mining_refresh_interval",
                                             "seed"};
    try {
        const json j = json::parse(text);
        if (!j.is_object()) {
            throw ConfigError("finetune config must be a JSON object");
        }
        for (const auto& [key, value] : j.items()) {
            if (!known.count(key)) {
                throw ConfigError("unknown finetune config key '" + key + "'");
            }
        }
        FinetuneConfig c;
        if (j.contains("preset") && !j.at("preset").get<std::string>().empty()) {
            c = preset_config(j.at("preset").get<std::string>());
        }
        c.base_checkpoint = j.value("base_checkpoint", c.base_checkpoint);
        c.iterations = j.value("iterations", c.iterations);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.frozen_fraction = j.value("frozen_fraction", c.frozen_fraction);
        if (j.contains("hard_sample_size")) {
            const auto& h = j.at("hard_sample_size");
            c.hard_sample_size = h.is_null() ? std::nullopt : std::optional<std::size_t>(h.get<std::size_t>());
        }
        if (j.contains("draw_strategy")) {
            c.draw_mode = pairs::parse_draw_mode(j.at("draw_strategy").get<std::string>());
        }
        c.authentic_probability = j.value("authentic_probability", c.authentic_probability);
        c.validation_interval = j.value("validation_interval", c.validation_interval);
        c.validation.steps = j.value("validation_steps", c.validation.steps);
        c.validation.imposters_per_step = j.value("validation_imposters", c.validation.imposters_per_step);
        c.retention_threshold = j.value("retention_threshold", c.retention_threshold);
        c.mining_refresh_interval = j.value("mining_refresh_interval", c.mining_refresh_interval);
        c.seed = j.value("seed", c.seed);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("finetune config: ") + e.what());
    }
}

std::vector<ValidationRecord> TrainingRun::retained() const {
    std::vector<ValidationRecord> out;
    for (const auto& v : validations) {
        if (v.retained) {
            out.push_back(v);
        }
    }
    return out;
}

const ValidationRecord* TrainingRun::best() const {
    const ValidationRecord* best = nullptr;
    for (const auto& v : validations) {
        if (best == nullptr || v.precision > best->precision) {
            best = &v;
        }
    }
    return best;
}

namespace {

void check(const FinetuneConfig& c, const FinetuneInputs& in) {
    if (!in.model || in.train == nullptr) {
        throw ConfigError("finetuning needs a model and a training pool");
    }
    if (c.batch_size == 0) {
        throw ConfigError("batch size must be positive");
    }
    if (!(c.learning_rate >= 0.0)) {
        throw ConfigError("learning rate must be non-negative");
    }
    if (!(c.authentic_probability >= 0.0 && c.authentic_probability <= 1.0)) {
        throw ConfigError("authentic probability must lie in [0, 1]");
    }
    if (c.validation_interval == 0 || c.mining_refresh_interval == 0) {
        throw ConfigError("validation and mining refresh intervals must be positive");
    }
    if (c.hard_sample_size && *c.hard_sample_size == 0) {
        throw ConfigError("hard sample size must be positive");
    }
}

std::string checkpoint_id(const FinetuneConfig& c, std::size_t step) {
    return (c.preset.empty() ? std::string("finetune") : c.preset) + "-step" + std::to_string(step);
}

}  // namespace

TrainingRun finetune_supervised(const FinetuneConfig& config, const FinetuneInputs& inputs,
                                const ValidationCallback& on_validation) {
    check(config, inputs);
    auto& model = *inputs.model;
    const pairs::PairPool& pool = *inputs.train;
    const data::DatasetIndex& index = pool.index();
    freeze_fraction(model, config.frozen_fraction);

    TrainingRun run;
    run.config = config;
    run.model = inputs.model;

    std::ofstream log;
    if (inputs.run_dir) {
        fs::create_directories(*inputs.run_dir / "checkpoints");
        log.open(*inputs.run_dir / "log.jsonl", std::ios::app);
        if (!log) {
            throw DataError("cannot open training log in " + inputs.run_dir->string());
        }
    }

    const auto strategy = pairs::DrawStrategy::make(config.draw_mode, pool.dataset_sizes());
    pairs::TrainingPairSampler sampler(pool, strategy, config.authentic_probability, config.seed);
    const auto images = std::make_shared<model::ImageTensorCache>(index, model.input_resolution(),
                                                                  model.config().normalization);
    std::shared_ptr<model::ImageTensorCache> validation_images;
    if (inputs.validation != nullptr) {
        validation_images = std::make_shared<model::ImageTensorCache>(
            inputs.validation->index(), model.input_resolution(), model.config().normalization);
    }

    std::vector<torch::Tensor> trainable;
    for (auto& p : model.parameters()) {
        if (p.requires_grad()) {
            trainable.push_back(p);
        }
    }
    torch::optim::SGD optimizer(trainable, torch::optim::SGDOptions(config.learning_rate));

    std::shared_ptr<model::ModelScorer> miner;
    model.train();
    for (std::size_t step = 1; step <= config.iterations; ++step) {
        if (config.hard_sample_size && (step - 1) % config.mining_refresh_interval == 0) {
            auto snapshot = config.mining_refresh_interval == 1 ? inputs.model : model::clone_model(model);
            miner = std::make_shared<model::ModelScorer>(snapshot, index, model::Tap::final_output, images);
        }
        std::vector<torch::Tensor> refs, probes;
        std::vector<float> labels;
        for (std::size_t b = 0; b < config.batch_size; ++b) {
            pairs::PairSpec spec = sampler.next();
            if (spec.label == pairs::Label::imposter && miner) {
                const std::string& identity = index.at(spec.reference).identity_id;
                spec = pairs::mine_hard_imposter(identity, *config.hard_sample_size, *miner, pool, sampler.rng()).pair;
            }
            refs.push_back(images->get(index.at(spec.reference)));
            probes.push_back(images->get(index.at(spec.probe)));
            labels.push_back(spec.label == pairs::Label::authentic ? 1.0f : 0.0f);
        }
        if (miner && config.mining_refresh_interval == 1) {
            miner.reset();
        }
        model.train();
        const auto target = torch::tensor(labels);
        const auto logits = model.forward(torch::stack(refs), torch::stack(probes));
        const auto loss = torch::binary_cross_entropy_with_logits(logits, target);
        optimizer.zero_grad();
        loss.backward();
        optimizer.step();
        const double loss_value = loss.item<double>();
        run.loss_trace.push_back(loss_value);

        std::optional<double> precision;
        if (inputs.validation != nullptr && (step % config.validation_interval == 0 || step == config.iterations)) {
            Rng rng(derive_seed(config.seed, "validation"));
            const model::ModelScorer scorer(inputs.model, inputs.validation->index(), model::Tap::final_output,
                                            validation_images);
            const auto result = eval::validation_precision(scorer, *inputs.validation, config.validation, rng);
            model.train();
            ValidationRecord record;
            record.step = step;
            record.precision = result.precision;
            record.retained = result.precision >= config.retention_threshold;
            if (record.retained) {
                record.checkpoint_id = checkpoint_id(config, step);
                if (inputs.run_dir) {
                    model::Lineage lineage;
                    lineage.checkpoint_id = record.checkpoint_id;
                    lineage.base = inputs.base_id.empty() ? config.base_checkpoint : inputs.base_id;
                    lineage.preset = config.preset;
                    lineage.step = static_cast<std::int64_t>(step);
                    lineage.precision = result.precision;
                    record.checkpoint_path =
                        *inputs.run_dir / "checkpoints" / ("step_" + std::to_string(step) + ".pt");
                    model::save_checkpoint(model, lineage, record.checkpoint_path);
                }
            }
            run.validations.push_back(record);
            precision = result.precision;
            if (on_validation) {
                on_validation(record);
            }
        }
        if (log) {
            nlohmann::ordered_json line = {{"step", step}, {"loss", loss_value}, {"precision", nullptr}};
            if (precision) {
                line["precision"] = *precision;
            }
            log << line.dump() << '\n';
        }
    }
    run.dataset_counts = sampler.dataset_counts();
    model.eval();
    return run;
}

TrainingRun multi_dataset_finetune(const FinetuneConfig& config, const FinetuneInputs& inputs,
                                   const ValidationCallback& on_validation) {
    return finetune_supervised(config, inputs, on_validation);
}

data::DatasetIndex merge_indices(const std::vector<data::DatasetIndex>& indices) {
    std::vector<data::ImageRecord> records;
    for (const auto& index : indices) {
        for (const auto& r : index.records()) {
            data::ImageRecord copy = r;
            copy.path = fs::absolute(index.resolve(r));
            records.push_back(std::move(copy));
        }
    }
    return data::DatasetIndex::from_records(std::move(records));
}

}  // namespace maskmatch::train
