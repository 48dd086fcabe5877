#include "commands.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

#include "maskmatch/cli/app.hpp"
#include "maskmatch/common/error.hpp"
#include "maskmatch/common/rng.hpp"
#include "maskmatch/common/text.hpp"
#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/data/split.hpp"
#include "maskmatch/eval/metrics.hpp"
#include "maskmatch/eval/protocol.hpp"
#include "maskmatch/eval/report.hpp"
#include "maskmatch/geometry/adapters.hpp"
#include "maskmatch/geometry/masking.hpp"
#include "maskmatch/geometry/synthetic_faces.hpp"
#include "maskmatch/model/verifier.hpp"
#include "maskmatch/pairs/pair_protocol.hpp"
#include "maskmatch/train/contrastive.hpp"
#include "maskmatch/train/finetune.hpp"

namespace maskmatch::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void note(const std::string& message) { std::cerr << "maskmatch: " << message << '\n'; }

const fs::path& require_out(const GlobalOptions& g) {
    if (g.out.empty()) {
        throw ConfigError("--out is required");
    }
    return g.out;
}

data::DatasetIndex load_index(const fs::path& manifest) {
    const char* root = std::getenv("MASKMATCH_DATA_ROOT");
    if (root != nullptr && *root != '\0') {
        return data::load_manifest(manifest, fs::path(root));
    }
    return data::load_manifest(manifest);
}

data::DatasetIndex load_indices(const std::vector<fs::path>& manifests) {
    if (manifests.empty()) {
        throw ConfigError("at least one manifest is required");
    }
    if (manifests.size() == 1) {
        return load_index(manifests.front());
    }
    std::vector<data::DatasetIndex> parts;
    for (const auto& m : manifests) {
        parts.push_back(load_index(m));
    }
    return train::merge_indices(parts);
}

std::vector<std::string> absolute_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) {
        out.push_back(fs::absolute(p).lexically_normal().string());
    }
    return out;
}

// A JSON run config plus the directory its relative paths refer to.
struct ConfigFile {
    json doc;
    fs::path dir;

    fs::path path(const std::string& value) const {
        const fs::path p(value);
        return p.is_absolute() ? p : (dir / p).lexically_normal();
    }

    std::vector<fs::path> paths(const json& list) const {
        std::vector<fs::path> out;
        if (!list.is_array()) {
            throw ConfigError("expected a list of paths");
        }
        for (const auto& item : list) {
            out.push_back(path(item.get<std::string>()));
        }
        return out;
    }
};

ConfigFile load_config(const GlobalOptions& g, const std::set<std::string>& allowed) {
    if (g.config.empty()) {
        throw ConfigError("--config is required");
    }
    if (!fs::exists(g.config)) {
        throw ConfigError("config file not found: " + g.config.string());
    }
    ConfigFile c;
    c.dir = fs::absolute(g.config).parent_path();
    try {
        c.doc = json::parse(read_text_file(g.config));
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse " + g.config.string() + ": " + e.what());
    }
    if (!c.doc.is_object()) {
        throw ConfigError(g.config.string() + " must hold a JSON object");
    }
    for (const auto& [key, value] : c.doc.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("unknown key '" + key + "' in " + g.config.string());
        }
    }
    return c;
}

std::uint64_t resolve_seed(const GlobalOptions& g, const json& doc) {
    if (g.seed) {
        return *g.seed;
    }
    return doc.value("seed", std::uint64_t{0});
}

std::string frozen(const std::string& command, std::uint64_t seed, const ConfigFile& c) {
    const json j = {{"command", command}, {"seed", seed}, {"config_dir", c.dir.string()}, {"config", c.doc}};
    return j.dump(2) + "\n";
}

template <typename T>
T section(const json& doc, const std::string& key, T (*parse)(std::string_view)) {
    return parse(doc.contains(key) ? doc.at(key).dump() : std::string("{}"));
}

data::IdentitySplit make_split(const ConfigFile& c, const data::DatasetIndex& index, std::uint64_t seed) {
    if (c.doc.contains("split_file")) {
        return data::load_split(c.path(c.doc.at("split_file").get<std::string>()));
    }
    data::SplitFractions fractions{0.8, 0.2};
    if (c.doc.contains("split")) {
        const auto& s = c.doc.at("split");
        fractions.train = s.value("train", fractions.train);
        fractions.validation = s.value("validation", fractions.validation);
    }
    return data::split_identities(index, fractions, derive_seed(seed, "split"));
}

train::FinetuneConfig finetune_section(const json& doc, const std::string& key, std::uint64_t seed,
                                       const std::string& default_preset = {}) {
    json section = doc.contains(key) ? doc.at(key) : json::object();
    if (!default_preset.empty() && !section.contains("preset")) {
        section["preset"] = default_preset;
    }
    const bool explicit_seed = section.contains("seed");
    auto config = train::parse_finetune_config(section.dump());
    if (!explicit_seed) {
        config.seed = derive_seed(seed, "finetune:" + key);
    }
    return config;
}

struct Pools {
    data::DatasetIndex index;
    data::IdentitySplit split;
    std::set<std::string> train_ids;
    std::set<std::string> validation_ids;
    std::unique_ptr<pairs::PairPool> train;
    std::unique_ptr<pairs::PairPool> validation;
};

std::unique_ptr<Pools> make_pools(data::DatasetIndex index, data::IdentitySplit split) {
    auto p = std::make_unique<Pools>();
    p->index = std::move(index);
    p->split = std::move(split);
    p->train_ids = p->split.get(data::Role::train).identity_ids;
    p->validation_ids = p->split.get(data::Role::validation).identity_ids;
    p->train = std::make_unique<pairs::PairPool>(p->index, &p->train_ids);
    if (!p->validation_ids.empty()) {
        p->validation = std::make_unique<pairs::PairPool>(p->index, &p->validation_ids);
    }
    return p;
}

void write_validations(const train::TrainingRun& run, const fs::path& path) {
    std::string out = "step,precision,retained,checkpoint_id\n";
    for (const auto& v : run.validations) {
        out += std::to_string(v.step) + "," + format_double(v.precision) + "," + (v.retained ? "1" : "0") + "," +
               v.checkpoint_id + "\n";
    }
    write_text_file(path, out);
}

train::ValidationCallback progress(const std::string& stage) {
    return [stage](const train::ValidationRecord& v) {
        note(stage + " step " + std::to_string(v.step) + " validation precision " + format_double(v.precision) +
             (v.retained ? " (retained)" : ""));
    };
}

struct Holdout {
    std::string name;
    data::DatasetIndex index;
    pairs::BenchmarkPairList list;
};

std::vector<Holdout> prepare_holdouts(const ConfigFile& c, std::uint64_t seed, const fs::path& run_dir) {
    if (!c.doc.contains("holdouts") || !c.doc.at("holdouts").is_object() || c.doc.at("holdouts").empty()) {
        throw ConfigError("benchmark config needs a non-empty 'holdouts' object");
    }
    const std::size_t count = c.doc.value("pair_count", std::size_t{200});
    std::vector<Holdout> out;
    for (const auto& [name, spec] : c.doc.at("holdouts").items()) {
        Holdout h;
        h.name = name;
        h.index = load_indices(c.paths(spec.at("manifests")));
        if (spec.contains("pairs")) {
            h.list = pairs::import_pair_list(c.path(spec.at("pairs").get<std::string>()));
        } else {
            h.list = pairs::generate_benchmark_pairs(h.index, count, derive_seed(seed, "pairs:" + name));
        }
        pairs::validate_pair_list(h.list, h.index);
        pairs::export_pair_list(h.list, run_dir / "pairs" / (name + ".pairs.csv"));
        out.push_back(std::move(h));
    }
    return out;
}

eval::MetricReport evaluate_cell(const pairs::PairScorer& scorer, const Holdout& h, const std::string& model_id,
                                 const std::string& tap, const fs::path& reports, unsigned workers) {
    eval::ScoreSet scores = eval::score_pairs(scorer, h.list, h.index, workers);
    scores.provenance = {h.name, model_id, tap, h.name + ".pairs", h.list.seed};
    eval::MetricReport report = eval::compute_report(scores);
    eval::emit_report(report, reports);
    note(h.name + " / " + model_id + ": EER " + format_double(report.eer) + ", FRR100 " +
         format_double(report.frr100));
    return report;
}

void write_tables(const eval::ResultTable& eer, const eval::ResultTable& frr100, const fs::path& dir) {
    write_text_file(dir / "eer_table.csv", eval::render_table_csv(eer));
    write_text_file(dir / "eer_table.md", eval::render_table_markdown(eer));
    write_text_file(dir / "frr100_table.csv", eval::render_table_csv(frr100));
    write_text_file(dir / "frr100_table.md", eval::render_table_markdown(frr100));
}

}  // namespace

int cmd_synth(const GlobalOptions& g, const SynthOptions& o) {
    const fs::path& out = require_out(g);
    geometry::SyntheticCorpusOptions options;
    options.dataset_id = o.dataset;
    options.identities = o.identities;
    options.images_per_identity = o.images;
    options.seed = g.seed.value_or(1);
    options.canvas = {o.canvas, o.canvas};
    const auto index = geometry::write_synthetic_corpus(out / "images", options);
    data::save_manifest(index, out / "manifest.csv");
    note("wrote " + std::to_string(index.size()) + " images of " + std::to_string(o.identities) + " identities to " +
         out.string());
    return kSuccess;
}

int cmd_fit_detector(const GlobalOptions& g, const FitOptions& o) {
    geometry::HogTrainingOptions options;
    if (o.samples > 0) {
        options.face_samples = o.samples;
    }
    if (g.seed) {
        options.seed = *g.seed;
    }
    const auto detector = geometry::train_hog_detector(options);
    const fs::path& out = require_out(g);
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    detector->save(out);
    note("wrote face detector " + out.string());
    return kSuccess;
}

int cmd_fit_landmarks(const GlobalOptions& g, const FitOptions& o) {
    geometry::LbfTrainingOptions options;
    if (o.samples > 0) {
        options.samples = o.samples;
    }
    if (g.seed) {
        options.seed = *g.seed;
    }
    const fs::path& out = require_out(g);
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    geometry::train_lbf_predictor(options, out);
    note("wrote landmark model " + out.string());
    return kSuccess;
}

int cmd_scan(const GlobalOptions& g, const ScanOptions& o) {
    const auto variant = data::parse_variant(o.variant);
    if (!variant) {
        throw ConfigError("variant must be 'unmasked' or 'masked'");
    }
    const auto index = data::scan_image_tree(o.root, o.dataset, *variant);
    data::save_manifest(index, require_out(g));
    note("indexed " + std::to_string(index.size()) + " images");
    return kSuccess;
}

int cmd_mask(const GlobalOptions& g, const ManifestOptions& o) {
    const fs::path& out = require_out(g);
    if (g.config.empty()) {
        throw ConfigError("mask needs --config with the mask settings");
    }
    const auto settings = geometry::load_mask_settings(g.config);
    const auto index = load_indices(o.manifests);
    const json config = {{"command", "mask"},
                         {"manifests", absolute_strings(o.manifests)},
                         {"mask", json::parse(geometry::serialize_mask_settings(settings))}};
    RunDirectory run(out, config.dump(2) + "\n");
    const auto result = geometry::mask_dataset(index, settings, {out / "images", g.workers});
    data::save_manifest(result.masked, out / "manifest.csv");
    write_text_file(out / "report.csv", geometry::serialize_masking_report(result.report));
    note("masked " + std::to_string(result.report.masked_count) + " of " + std::to_string(result.report.input_count) +
         " images, discarded " + std::to_string(result.report.discarded_count));
    if (result.report.io_failures() > 0) {
        note(std::to_string(result.report.io_failures()) + " images could not be read or written; see report.csv");
        return kDataFailure;
    }
    return kSuccess;
}

int cmd_split(const GlobalOptions& g, const SplitOptions& o) {
    const auto index = load_index(o.manifest);
    const auto split = data::split_identities(index, {o.train, o.validation}, g.seed.value_or(0));
    data::save_split(split, require_out(g));
    note("train " + std::to_string(split.get(data::Role::train).identity_ids.size()) + ", validation " +
         std::to_string(split.get(data::Role::validation).identity_ids.size()) + ", holdout " +
         std::to_string(split.get(data::Role::holdout).identity_ids.size()) + " identities");
    return kSuccess;
}

int cmd_pairs(const GlobalOptions& g, const PairsOptions& o) {
    const fs::path& out = require_out(g);
    const auto index = load_indices(o.manifests);
    for (const auto& [dataset, part] : index.by_dataset()) {
        const auto list = pairs::generate_benchmark_pairs(part, o.count, g.seed.value_or(0));
        const fs::path path = out / (dataset + ".pairs.csv");
        pairs::export_pair_list(list, path);
        note("wrote " + std::to_string(list.pairs.size()) + " pairs to " + path.string());
    }
    return kSuccess;
}

int cmd_pretrain(const GlobalOptions& g) {
    const auto c = load_config(g, {"seed", "manifests", "model", "pretrain"});
    const std::uint64_t seed = resolve_seed(g, c.doc);
    const auto index = load_indices(c.paths(c.doc.value("manifests", json::array())));
    const auto model_config = section(c.doc, "model", &model::parse_config);
    auto config = section(c.doc, "pretrain", &train::parse_pretrain_config);
    if (!c.doc.contains("pretrain") || !c.doc.at("pretrain").contains("seed")) {
        config.seed = derive_seed(seed, "pretrain");
    }
    RunDirectory run(require_out(g), frozen("pretrain", seed, c));
    std::ofstream log(run.path() / "log.jsonl", std::ios::trunc);
    const auto result = train::pretrain_contrastive(config, index, model_config, [&](std::size_t step, double loss) {
        log << nlohmann::ordered_json{{"step", step}, {"loss", loss}, {"precision", nullptr}}.dump() << '\n';
        if (step % 10 == 0) {
            note("pretrain step " + std::to_string(step) + " loss " + format_double(loss));
        }
    });
    model::Lineage lineage;
    lineage.checkpoint_id = "representation";
    lineage.kind = "representation";
    lineage.step = static_cast<std::int64_t>(result.steps);
    model::save_checkpoint(*result.model, lineage, run.path() / "representation.pt");
    note("wrote " + (run.path() / "representation.pt").string());
    return kSuccess;
}

int cmd_finetune(const GlobalOptions& g) {
    const auto c = load_config(g, {"seed", "manifests", "split", "split_file", "model", "base", "finetune"});
    const std::uint64_t seed = resolve_seed(g, c.doc);
    auto index = load_indices(c.paths(c.doc.value("manifests", json::array())));
    auto split = make_split(c, index, seed);
    const auto pools = make_pools(std::move(index), std::move(split));
    auto config = finetune_section(c.doc, "finetune", seed);

    RunDirectory run(require_out(g), frozen("finetune", seed, c));
    data::save_split(pools->split, run.path() / "split.csv");
    train::FinetuneInputs inputs;
    if (c.doc.contains("base")) {
        auto loaded = model::load_checkpoint(c.path(c.doc.at("base").get<std::string>()));
        inputs.model = loaded.model;
        inputs.base_id = loaded.manifest.lineage.checkpoint_id;
    } else {
        torch::manual_seed(derive_seed(seed, "model_init"));
        inputs.model = model::make_verifier(section(c.doc, "model", &model::parse_config));
    }
    inputs.train = pools->train.get();
    inputs.validation = pools->validation.get();
    inputs.run_dir = run.path();
    const auto result = train::multi_dataset_finetune(config, inputs, progress("finetune"));

    model::Lineage lineage;
    lineage.checkpoint_id = (config.preset.empty() ? std::string("finetune") : config.preset) + "-final";
    lineage.base = inputs.base_id.empty() ? config.base_checkpoint : inputs.base_id;
    lineage.preset = config.preset;
    lineage.step = static_cast<std::int64_t>(config.iterations);
    if (!result.validations.empty() && result.validations.back().step == config.iterations) {
        lineage.precision = result.validations.back().precision;
    }
    model::save_checkpoint(*result.model, lineage, run.path() / "final.pt");
    write_validations(result, run.path() / "validations.csv");
    note("finished " + std::to_string(config.iterations) + " steps, " + std::to_string(result.retained().size()) +
         " checkpoints retained");
    return kSuccess;
}

int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o) {
    if (o.checkpoints.empty()) {
        throw ConfigError("evaluate needs at least one --checkpoint");
    }
    const auto index = load_indices(o.manifests);
    const auto list = pairs::import_pair_list(o.pairs);
    pairs::validate_pair_list(list, index);
    const model::Tap tap = g.ensemble ? model::Tap::bottleneck : model::parse_tap(g.tap);
    if (g.ensemble && model::parse_tap(g.tap) != model::Tap::bottleneck) {
        note("ensembles always use the bottleneck tap");
    }
    const json config = {{"command", "evaluate"},
                         {"checkpoints", absolute_strings(o.checkpoints)},
                         {"pairs", fs::absolute(o.pairs).lexically_normal().string()},
                         {"manifests", absolute_strings(o.manifests)},
                         {"tap", std::string(model::to_string(tap))},
                         {"ensemble", g.ensemble}};
    RunDirectory run(require_out(g), config.dump(2) + "\n");

    std::vector<std::shared_ptr<model::VerifierModel>> models;
    std::vector<std::string> ids;
    for (const auto& path : o.checkpoints) {
        auto loaded = model::load_checkpoint(path);
        models.push_back(loaded.model);
        const std::string id = loaded.manifest.lineage.checkpoint_id;
        ids.push_back(id.empty() ? path.stem().string() : id);
    }
    const auto score = [&](const pairs::PairScorer& scorer, const std::string& model_id) {
        eval::ScoreSet scores = eval::score_pairs(scorer, list, index, g.workers);
        scores.provenance = {list.dataset_id, model_id, std::string(model::to_string(tap)), o.pairs.stem().string(),
                             list.seed};
        const auto report = eval::compute_report(scores);
        const auto files = eval::emit_report(report, run.path());
        std::cout << model_id << " EER " << format_double(report.eer) << " FRR100 " << format_double(report.frr100)
                  << " AUC " << format_double(report.auc) << " -> " << files.metrics.string() << '\n';
    };
    if (g.ensemble) {
        score(model::make_ensemble(models, index), "ensemble");
    } else {
        for (std::size_t i = 0; i < models.size(); ++i) {
            score(model::ModelScorer(models[i], index, tap), ids[i]);
        }
    }
    return kSuccess;
}

int cmd_benchmark1(const GlobalOptions& g) {
    const auto c = load_config(g, {"seed", "train_manifests", "split", "split_file", "holdouts", "pair_count", "tap",
                                   "finetune", "backbones"});
    const std::uint64_t seed = resolve_seed(g, c.doc);
    auto index = load_indices(c.paths(c.doc.value("train_manifests", json::array())));
    if (index.dataset_ids().size() != 1) {
        throw ConfigError("benchmark1 trains on exactly one dataset");
    }
    if (!c.doc.contains("backbones") || !c.doc.at("backbones").is_array() || c.doc.at("backbones").empty()) {
        throw ConfigError("benchmark1 needs a non-empty 'backbones' list");
    }
    const model::Tap tap = model::parse_tap(c.doc.value("tap", std::string("bottleneck")));
    auto split = make_split(c, index, seed);
    const auto pools = make_pools(std::move(index), std::move(split));

    RunDirectory run(require_out(g), frozen("benchmark1", seed, c));
    const auto holdouts = prepare_holdouts(c, seed, run.path());
    eval::ResultTable eer, frr100;
    eer.metric = "eer";
    frr100.metric = "frr100";
    for (const auto& entry : c.doc.at("backbones")) {
        const std::string name = entry.at("name").get<std::string>();
        auto model_config = model::parse_config(entry.value("model", json::object()).dump());
        if (entry.contains("representation")) {
            model_config.backbone.initial_weights = c.path(entry.at("representation").get<std::string>()).string();
        }
        torch::manual_seed(derive_seed(seed, "model_init:" + name));
        train::FinetuneInputs inputs;
        inputs.model = model::make_verifier(model_config);
        inputs.train = pools->train.get();
        inputs.validation = pools->validation.get();
        inputs.run_dir = run.path() / name;
        auto config = finetune_section(c.doc, "finetune", seed);
        config.preset = name;
        const auto result = train::finetune_supervised(config, inputs, progress(name));
        model::Lineage lineage;
        lineage.checkpoint_id = name;
        lineage.preset = name;
        lineage.step = static_cast<std::int64_t>(config.iterations);
        model::save_checkpoint(*result.model, lineage, run.path() / name / "final.pt");
        write_validations(result, run.path() / name / "validations.csv");
        for (const auto& h : holdouts) {
            const model::ModelScorer scorer(result.model, h.index, tap);
            const auto report = evaluate_cell(scorer, h, name, std::string(model::to_string(tap)),
                                              run.path() / "reports", g.workers);
            eer.set(h.name, name, report.eer);
            frr100.set(h.name, name, report.frr100);
        }
    }
    write_tables(eer, frr100, run.path());
    std::cout << eval::render_table_markdown(eer);
    return kSuccess;
}

int cmd_benchmark2(const GlobalOptions& g) {
    const auto c = load_config(g, {"seed", "train_manifests", "split", "split_file", "holdouts", "pair_count", "tap",
                                   "model", "representation", "stages"});
    const std::uint64_t seed = resolve_seed(g, c.doc);
    auto index = load_indices(c.paths(c.doc.value("train_manifests", json::array())));
    if (index.dataset_ids().size() < 2) {
        throw ConfigError("benchmark2 needs at least two training datasets");
    }
    const model::Tap tap = model::parse_tap(c.doc.value("tap", std::string("bottleneck")));
    const json stages = c.doc.value("stages", json::object());
    for (const auto& [key, value] : stages.items()) {
        if (key != "CP" && key != "FT1" && key != "FT2" && key != "FT3") {
            throw ConfigError("unknown stage '" + key + "' (expected CP, FT1, FT2 or FT3)");
        }
    }
    auto split = make_split(c, index, seed);
    const auto pools = make_pools(std::move(index), std::move(split));
    RunDirectory run(require_out(g), frozen("benchmark2", seed, c));
    const auto holdouts = prepare_holdouts(c, seed, run.path());

    std::string candidates = "stage,checkpoint_id,step,precision,path\n";
    const auto list_candidates = [&](const std::string& stage, const train::TrainingRun& r) {
        auto kept = r.retained();
        std::stable_sort(kept.begin(), kept.end(),
                         [](const auto& a, const auto& b) { return a.precision > b.precision; });
        for (const auto& v : kept) {
            candidates += stage + "," + v.checkpoint_id + "," + std::to_string(v.step) + "," +
                          format_double(v.precision) + "," + v.checkpoint_path.string() + "\n";
        }
        return kept;
    };
    const auto promote = [&](const train::ValidationRecord& v, const std::string& label, const std::string& base) {
        auto loaded = model::load_checkpoint(v.checkpoint_path);
        model::Lineage lineage = loaded.manifest.lineage;
        lineage.checkpoint_id = label;
        lineage.preset = label;
        lineage.base = base;
        model::save_checkpoint(*loaded.model, lineage, run.path() / (label + ".pt"));
        note(label + " <- " + v.checkpoint_id + " (precision " + format_double(v.precision) + ")");
        return loaded.model;
    };

    // CP stage: one uniform-draw run over all training datasets.
    std::string representation_id;
    torch::manual_seed(derive_seed(seed, "model_init"));
    auto model_config = section(c.doc, "model", &model::parse_config);
    if (c.doc.contains("representation")) {
        const fs::path rep = c.path(c.doc.at("representation").get<std::string>());
        model_config.backbone.initial_weights = rep.string();
        representation_id = model::read_checkpoint_manifest(rep).lineage.checkpoint_id;
    }
    train::FinetuneInputs cp_inputs;
    cp_inputs.model = model::make_verifier(model_config);
    cp_inputs.train = pools->train.get();
    cp_inputs.validation = pools->validation.get();
    cp_inputs.base_id = representation_id;
    cp_inputs.run_dir = run.path() / "CP";
    auto cp_config = finetune_section(stages, "CP", seed, "CP2");
    cp_config.preset = "CP";
    const auto cp_run = train::multi_dataset_finetune(cp_config, cp_inputs, progress("CP"));
    write_validations(cp_run, run.path() / "CP" / "validations.csv");
    const auto cp_kept = list_candidates("CP", cp_run);
    if (cp_kept.empty()) {
        write_text_file(run.path() / "candidates.csv", candidates);
        throw ModelError("the CP stage retained no checkpoint at validation precision >= " +
                         format_double(cp_config.retention_threshold));
    }
    std::map<std::string, std::shared_ptr<model::VerifierModel>> columns;
    columns["CP1"] = promote(cp_kept[0], "CP1", representation_id);
    columns["CP2"] = promote(cp_kept.size() > 1 ? cp_kept[1] : cp_kept[0], "CP2", representation_id);

    for (const std::string stage : {"FT1", "FT2", "FT3"}) {
        auto config = finetune_section(stages, stage, seed, stage);
        const std::string base = config.base_checkpoint;
        if (base != "CP1" && base != "CP2") {
            throw ConfigError(stage + " must start from CP1 or CP2");
        }
        train::FinetuneInputs inputs;
        inputs.model = model::load_checkpoint(run.path() / (base + ".pt")).model;
        inputs.train = pools->train.get();
        inputs.validation = pools->validation.get();
        inputs.base_id = base;
        inputs.run_dir = run.path() / stage;
        const auto result = train::multi_dataset_finetune(config, inputs, progress(stage));
        write_validations(result, run.path() / stage / "validations.csv");
        const auto kept = list_candidates(stage, result);
        if (kept.empty()) {
            write_text_file(run.path() / "candidates.csv", candidates);
            throw ModelError(stage + " retained no checkpoint at validation precision >= " +
                             format_double(config.retention_threshold));
        }
        columns[stage] = promote(kept[0], stage, base);
    }
    write_text_file(run.path() / "candidates.csv", candidates);

    eval::ResultTable eer, frr100;
    eer.metric = "eer";
    frr100.metric = "frr100";
    const std::string tap_name(model::to_string(tap));
    for (const auto& h : holdouts) {
        for (const std::string column : {"CP1", "CP2", "FT1", "FT2", "FT3"}) {
            const model::ModelScorer scorer(columns[column], h.index, tap);
            const auto report = evaluate_cell(scorer, h, column, tap_name, run.path() / "reports", g.workers);
            eer.set(h.name, column, report.eer);
            frr100.set(h.name, column, report.frr100);
        }
        const auto ensemble = model::make_ensemble({columns["FT1"], columns["FT2"], columns["FT3"]}, h.index);
        const auto report = evaluate_cell(ensemble, h, "Ensemble", "bottleneck", run.path() / "reports", g.workers);
        eer.set(h.name, "Ensemble", report.eer);
        frr100.set(h.name, "Ensemble", report.frr100);
    }
    write_tables(eer, frr100, run.path());
    std::cout << eval::render_table_markdown(eer);
    return kSuccess;
}

}  // namespace maskmatch::cli
