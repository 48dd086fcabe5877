#include "maskmatch/pairs/pair_protocol.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"

namespace maskmatch::pairs {

using data::DatasetIndex;
using data::ImageRecord;
using data::Variant;

std::string_view to_string(DrawMode m) { return m == DrawMode::uniform ? "uniform" : "stratified"; }

DrawMode parse_draw_mode(std::string_view s) {
    if (s == "uniform") {
        return DrawMode::uniform;
    }
    if (s == "stratified") {
        return DrawMode::stratified;
    }
    throw ConfigError("unknown draw strategy '" + std::string(s) + "'");
}

DrawStrategy DrawStrategy::make(DrawMode mode, const std::map<std::string, std::size_t>& dataset_sizes) {
    DrawStrategy s;
    s.mode = mode;
    double total = 0.0;
    for (const auto& [id, size] : dataset_sizes) {
        s.dataset_ids.push_back(id);
        s.weights.push_back(mode == DrawMode::uniform ? static_cast<double>(size) : 1.0);
        total += s.weights.back();
    }
    if (s.dataset_ids.empty() || total <= 0.0) {
        throw DataError("draw strategy needs at least one non-empty dataset");
    }
    for (double& w : s.weights) {
        w /= total;
    }
    return s;
}

const std::string& choose_dataset(const DrawStrategy& strategy, Rng& rng) {
    if (strategy.dataset_ids.empty() || strategy.weights.size() != strategy.dataset_ids.size()) {
        throw DataError("draw strategy has no datasets");
    }
    if (strategy.dataset_ids.size() == 1) {
        return strategy.dataset_ids.front();
    }
    return strategy.dataset_ids[rng.categorical(strategy.weights)];
}

PairPool::PairPool(const DatasetIndex& index, const std::set<std::string>* allowed) : index_(&index) {
    for (const auto& [identity, entry] : index.identity_map()) {
        if (!entry.has_both() || (allowed != nullptr && !allowed->contains(identity))) {
            continue;
        }
        const std::string& dataset = index.records()[entry.unmasked.front()].dataset_id;
        by_dataset_[dataset].push_back(identity);
    }
}

std::vector<std::string> PairPool::dataset_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, ids] : by_dataset_) {
        out.push_back(id);
    }
    return out;
}

const std::vector<std::string>& PairPool::identities(const std::string& dataset_id) const {
    static const std::vector<std::string> empty;
    const auto it = by_dataset_.find(dataset_id);
    return it == by_dataset_.end() ? empty : it->second;
}

std::map<std::string, std::size_t> PairPool::dataset_sizes() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [dataset, ids] : by_dataset_) {
        std::size_t n = 0;
        for (const auto& id : ids) {
            const auto& e = index_->identity(id);
            n += e.unmasked.size() + e.masked.size();
        }
        out[dataset] = n;
    }
    return out;
}

std::size_t PairPool::identity_count() const {
    std::size_t n = 0;
    for (const auto& [d, ids] : by_dataset_) {
        n += ids.size();
    }
    return n;
}

const ImageRecord& PairPool::random_image(const std::string& identity_id, Variant v, Rng& rng) const {
    const auto& positions = index_->identity(identity_id).of(v);
    if (positions.empty()) {
        throw ExhaustedDataset("identity " + identity_id + " has no " + std::string(data::to_string(v)) + " image");
    }
    return index_->records()[rng.pick(positions)];
}

PairSpec draw_training_pair(const PairPool& pool, const DrawStrategy& strategy, double authentic_probability,
                            Rng& rng) {
    const std::string& dataset = choose_dataset(strategy, rng);
    const auto& ids = pool.identities(dataset);
    const bool authentic = rng.bernoulli(authentic_probability);
    if (authentic) {
        if (ids.empty()) {
            throw ExhaustedDataset("dataset " + dataset + " has no identity with both variants");
        }
        const std::string& id = rng.pick(ids);
        const auto& ref = pool.random_image(id, Variant::unmasked, rng);
        const auto& probe = pool.random_image(id, Variant::masked, rng);
        return {ref.image_id, probe.image_id, Label::authentic, dataset};
    }
    if (ids.size() < 2) {
        throw ExhaustedDataset("dataset " + dataset + " has fewer than two identities for an imposter pair");
    }
    const std::size_t a = rng.uniform_index(ids.size());
    std::size_t b = rng.uniform_index(ids.size() - 1);
    if (b >= a) {
        ++b;
    }
    const auto& ref = pool.random_image(ids[a], Variant::unmasked, rng);
    const auto& probe = pool.random_image(ids[b], Variant::masked, rng);
    return {ref.image_id, probe.image_id, Label::imposter, dataset};
}

TrainingPairSampler::TrainingPairSampler(const PairPool& pool, DrawStrategy strategy, double authentic_probability,
                                         std::uint64_t base_seed, std::uint64_t worker_id)
    : pool_(&pool),
      strategy_(std::move(strategy)),
      authentic_probability_(authentic_probability),
      rng_(derive_seed(derive_seed(base_seed, "pair_sampler"), worker_id)) {}

PairSpec TrainingPairSampler::next() {
    PairSpec p = draw_training_pair(*pool_, strategy_, authentic_probability_, rng_);
    ++counts_[p.dataset_id];
    return p;
}

MiningResult mine_hard_imposter(const std::string& reference_identity, std::size_t candidate_count,
                                const PairScorer& scorer, const PairPool& pool, Rng& rng) {
    if (candidate_count == 0) {
        throw DomainError("candidate_count must be at least 1");
    }
    const DatasetIndex& index = pool.index();
    const auto& entry = index.identity(reference_identity);
    if (entry.unmasked.empty()) {
        throw ExhaustedDataset("identity " + reference_identity + " has no unmasked image");
    }
    const std::string& dataset = index.records()[entry.unmasked.front()].dataset_id;
    std::vector<std::string> others;
    for (const auto& id : pool.identities(dataset)) {
        if (id != reference_identity) {
            others.push_back(id);
        }
    }
    if (others.empty()) {
        throw ExhaustedDataset("no other identity in dataset " + dataset);
    }
    const ImageRecord& ref = pool.random_image(reference_identity, Variant::unmasked, rng);

    // Distinct identities first (partial Fisher-Yates), then with replacement.
    std::vector<std::string> chosen;
    chosen.reserve(candidate_count);
    const std::size_t distinct = std::min(candidate_count, others.size());
    for (std::size_t i = 0; i < distinct; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(others.size() - i));
        std::swap(others[i], others[j]);
        chosen.push_back(others[i]);
    }
    while (chosen.size() < candidate_count) {
        chosen.push_back(rng.pick(others));
    }

    MiningResult result;
    for (const auto& id : chosen) {
        const ImageRecord& probe = pool.random_image(id, Variant::masked, rng);
        result.candidates.push_back({ref.image_id, probe.image_id, Label::imposter, dataset});
        result.scores.push_back(scorer.similarity(ref, probe));
    }
    for (std::size_t i = 1; i < result.scores.size(); ++i) {
        if (result.scores[i] > result.scores[result.chosen]) {
            result.chosen = i;
        }
    }
    result.pair = result.candidates[result.chosen];
    return result;
}

std::size_t BenchmarkPairList::count(Label label) const {
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [label](const PairSpec& p) { return p.label == label; }));
}

PairUniverse pair_universe(const DatasetIndex& index) {
    PairUniverse u;
    std::uint64_t total_unmasked = 0, total_masked = 0, same = 0, with_unmasked = 0, with_masked = 0, with_both = 0;
    for (const auto& [id, e] : index.identity_map()) {
        total_unmasked += e.unmasked.size();
        total_masked += e.masked.size();
        same += static_cast<std::uint64_t>(e.unmasked.size()) * e.masked.size();
        with_unmasked += !e.unmasked.empty();
        with_masked += !e.masked.empty();
        with_both += e.has_both();
    }
    u.authentic = same;
    u.imposter = total_unmasked * total_masked - same;
    // Ordered (reference, probe) identity pairs minus those counted in both directions.
    const std::uint64_t ordered = with_unmasked * with_masked - with_both;
    u.imposter_identity_pairs = ordered - with_both * (with_both - (with_both > 0 ? 1 : 0)) / 2;
    return u;
}

namespace {

struct TupleHash {
    std::size_t operator()(const std::pair<std::string, std::string>& p) const {
        return std::hash<std::string>{}(p.first) * 1000003u ^ std::hash<std::string>{}(p.second);
    }
};

using TupleSet = std::unordered_set<std::pair<std::string, std::string>, TupleHash>;

template <typename Draw, typename Enumerate>
std::vector<PairSpec> sample_distinct(std::size_t k, std::uint64_t universe, Draw draw, Enumerate enumerate,
                                      Rng& rng) {
    std::vector<PairSpec> out;
    if (k == 0) {
        return out;
    }
    TupleSet seen;
    auto take_from_enumeration = [&] {
        std::vector<PairSpec> all = enumerate();
        std::erase_if(all, [&](const PairSpec& p) { return seen.contains({p.reference, p.probe}); });
        rng.shuffle(all);
        for (std::size_t i = 0; out.size() < k && i < all.size(); ++i) {
            out.push_back(all[i]);
        }
    };
    if (static_cast<double>(k) > 0.5 * static_cast<double>(universe)) {
        take_from_enumeration();
        return out;
    }
    const std::size_t max_attempts = 50 * k + 1000;
    for (std::size_t attempt = 0; attempt < max_attempts && out.size() < k; ++attempt) {
        PairSpec p = draw();
        if (seen.insert({p.reference, p.probe}).second) {
            out.push_back(std::move(p));
        }
    }
    if (out.size() < k) {
        take_from_enumeration();
    }
    return out;
}

}  // namespace

BenchmarkPairList generate_benchmark_pairs(const DatasetIndex& index, std::size_t pair_count, std::uint64_t seed) {
    if (pair_count % 2 != 0) {
        throw DomainError("pair_count must be even");
    }
    const auto datasets = index.dataset_ids();
    if (datasets.size() > 1) {
        throw DataError("benchmark pair lists are generated per dataset; index holds " +
                        std::to_string(datasets.size()));
    }
    const std::string dataset = datasets.empty() ? std::string() : datasets.front();
    const std::size_t half = pair_count / 2;
    const PairUniverse universe = pair_universe(index);
    if (universe.authentic < half || universe.imposter < half) {
        throw InsufficientPairs("need " + std::to_string(half) + " pairs per label; universe has " +
                                std::to_string(universe.authentic) + " authentic and " +
                                std::to_string(universe.imposter) + " imposter tuples");
    }

    std::vector<std::string> both, with_unmasked, with_masked;
    for (const auto& [id, e] : index.identity_map()) {
        if (e.has_both()) {
            both.push_back(id);
        }
        if (!e.unmasked.empty()) {
            with_unmasked.push_back(id);
        }
        if (!e.masked.empty()) {
            with_masked.push_back(id);
        }
    }
    const auto records = index.records();
    auto image = [&](const std::string& id, Variant v, Rng& r) -> const ImageRecord& {
        return records[r.pick(index.identity(id).of(v))];
    };

    Rng rng(derive_seed(seed, "benchmark_pairs"));
    auto authentic = sample_distinct(
        half, universe.authentic,
        [&] {
            const std::string& id = rng.pick(both);
            const auto& ref = image(id, Variant::unmasked, rng);
            const auto& probe = image(id, Variant::masked, rng);
            return PairSpec{ref.image_id, probe.image_id, Label::authentic, dataset};
        },
        [&] {
            std::vector<PairSpec> all;
            for (const auto& id : both) {
                for (std::size_t u : index.identity(id).unmasked) {
                    for (std::size_t m : index.identity(id).masked) {
                        all.push_back({records[u].image_id, records[m].image_id, Label::authentic, dataset});
                    }
                }
            }
            return all;
        },
        rng);
    auto imposter = sample_distinct(
        half, universe.imposter,
        [&] {
            const std::string& a = rng.pick(with_unmasked);
            const std::string* b = &rng.pick(with_masked);
            while (*b == a) {
                b = &rng.pick(with_masked);
            }
            const auto& ref = image(a, Variant::unmasked, rng);
            const auto& probe = image(*b, Variant::masked, rng);
            return PairSpec{ref.image_id, probe.image_id, Label::imposter, dataset};
        },
        [&] {
            std::vector<PairSpec> all;
            for (const auto& a : with_unmasked) {
                for (const auto& b : with_masked) {
                    if (a == b) {
                        continue;
                    }
                    for (std::size_t u : index.identity(a).unmasked) {
                        for (std::size_t m : index.identity(b).masked) {
                            all.push_back({records[u].image_id, records[m].image_id, Label::imposter, dataset});
                        }
                    }
                }
            }
            return all;
        },
        rng);

    BenchmarkPairList list;
    list.seed = seed;
    list.dataset_id = dataset;
    list.generator = std::string(kPairGenerator);
    list.pairs = std::move(authentic);
    list.pairs.insert(list.pairs.end(), imposter.begin(), imposter.end());
    rng.shuffle(list.pairs);
    return list;
}

std::string serialize_pair_list(const BenchmarkPairList& list) {
    std::string out = "# seed=" + std::to_string(list.seed) + " generator=" +
                      (list.generator.empty() ? std::string(kPairGenerator) : list.generator);
    if (!list.dataset_id.empty()) {
        out += " dataset_id=" + list.dataset_id;
    }
    out += "\nreference_image_id,probe_image_id,label,dataset_id\n";
    for (const auto& p : list.pairs) {
        out += csv_join({p.reference, p.probe, p.label == Label::authentic ? "1" : "0", p.dataset_id});
        out += '\n';
    }
    return out;
}

BenchmarkPairList parse_pair_list(std::string_view text) {
    CsvDocument doc;
    try {
        doc = parse_csv(text);
    } catch (const LineError& e) {
        throw PairListFormatError(e.message(), e.line());
    }
    BenchmarkPairList list;
    list.generator = std::string(kPairGenerator);
    for (const auto& line : doc.preamble) {
        const auto kv = parse_key_values(line);
        if (const auto it = kv.find("seed"); it != kv.end()) {
            const auto v = parse_int(it->second);
            if (!v || *v < 0) {
                throw PairListFormatError("bad seed in preamble", 1);
            }
            list.seed = static_cast<std::uint64_t>(*v);
        }
        if (const auto it = kv.find("generator"); it != kv.end()) {
            list.generator = it->second;
        }
        if (const auto it = kv.find("dataset_id"); it != kv.end()) {
            list.dataset_id = it->second;
        }
    }
    const std::vector<std::string> header{"reference_image_id", "probe_image_id", "label", "dataset_id"};
    if (!doc.has_header) {
        if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
            return list;
        }
        throw PairListFormatError("missing header", doc.preamble.size() + 1);
    }
    if (doc.header.fields != header) {
        throw PairListFormatError("expected header reference_image_id,probe_image_id,label,dataset_id",
                                  doc.header.line);
    }
    for (const auto& row : doc.rows) {
        if (row.fields.size() != 4) {
            throw PairListFormatError("expected 4 fields, found " + std::to_string(row.fields.size()), row.line);
        }
        if (row.fields[0].empty() || row.fields[1].empty()) {
            throw PairListFormatError("empty image id", row.line);
        }
        Label label;
        if (row.fields[2] == "1") {
            label = Label::authentic;
        } else if (row.fields[2] == "0") {
            label = Label::imposter;
        } else {
            throw PairListFormatError("label must be 1 or 0, found '" + row.fields[2] + "'", row.line);
        }
        list.pairs.push_back({row.fields[0], row.fields[1], label, row.fields[3]});
        list.lines.push_back(row.line);
    }
    return list;
}

void export_pair_list(const BenchmarkPairList& list, const std::filesystem::path& path) {
    write_text_file(path, serialize_pair_list(list));
}

BenchmarkPairList import_pair_list(const std::filesystem::path& path) {
    return parse_pair_list(read_text_file(path));
}

void validate_pair_list(const BenchmarkPairList& list, const DatasetIndex& index) {
    const auto line_of = [&](std::size_t i) { return i < list.lines.size() ? list.lines[i] : i + 3; };
    for (std::size_t i = 0; i < list.pairs.size(); ++i) {
        const PairSpec& p = list.pairs[i];
        const ImageRecord* ref = index.find(p.reference);
        const ImageRecord* probe = index.find(p.probe);
        if (ref == nullptr || probe == nullptr) {
            throw PairListFormatError("unknown image id '" + (ref == nullptr ? p.reference : p.probe) + "'",
                                      line_of(i));
        }
        if (ref->variant != Variant::unmasked) {
            throw PairListFormatError("reference " + p.reference + " is not unmasked", line_of(i));
        }
        if (probe->variant != Variant::masked) {
            throw PairListFormatError("probe " + p.probe + " is not masked", line_of(i));
        }
        const bool same = ref->identity_id == probe->identity_id;
        if (p.label == Label::authentic && !same) {
            throw PairListFormatError("authentic pair spans two identities", line_of(i));
        }
        if (p.label == Label::imposter && same) {
            throw PairListFormatError("imposter pair shares identity " + ref->identity_id, line_of(i));
        }
        if (ref->dataset_id != probe->dataset_id || ref->dataset_id != p.dataset_id) {
            throw PairListFormatError("pair crosses datasets", line_of(i));
        }
    }
    if (list.count(Label::authentic) != list.count(Label::imposter)) {
        throw PairListFormatError("unbalanced labels: " + std::to_string(list.count(Label::authentic)) +
                                      " authentic vs " + std::to_string(list.count(Label::imposter)) + " imposter",
                                  list.pairs.empty() ? 2 : line_of(list.pairs.size() - 1));
    }
}

}  // namespace maskmatch::pairs
