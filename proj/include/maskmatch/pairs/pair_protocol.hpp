#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "maskmatch/common/rng.hpp"
#include "maskmatch/data/dataset_index.hpp"

namespace maskmatch::pairs {

enum class Label { imposter = 0, authentic = 1 };

// One verification trial: unmasked reference, masked probe.
struct PairSpec {
    std::string reference;
    std::string probe;
    Label label = Label::authentic;
    std::string dataset_id;

    bool operator==(const PairSpec&) const = default;
};

// Anything that can score a (reference, probe) pair; verifier models and test
// stubs implement it. Implementations must tolerate concurrent calls.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual double similarity(const data::ImageRecord& reference, const data::ImageRecord& probe) const = 0;
};

enum class DrawMode { uniform, stratified };
std::string_view to_string(DrawMode m);
DrawMode parse_draw_mode(std::string_view s);

// Categorical distribution over datasets. Uniform weights follow dataset
// sizes, stratified weights are equal.
struct DrawStrategy {
    DrawMode mode = DrawMode::uniform;
    std::vector<std::string> dataset_ids;
    std::vector<double> weights;

    static DrawStrategy make(DrawMode mode, const std::map<std::string, std::size_t>& dataset_sizes);
};

// Throws DataError for a strategy without datasets.
const std::string& choose_dataset(const DrawStrategy& strategy, Rng& rng);

// Pair-eligible identities of an index, grouped by dataset. Only identities
// with both variants take part; an optional allow-list restricts them further
// (e.g. to one split role). The index must outlive the pool.
class PairPool {
public:
    explicit PairPool(const data::DatasetIndex& index, const std::set<std::string>* allowed_identities = nullptr);

    const data::DatasetIndex& index() const { return *index_; }
    std::vector<std::string> dataset_ids() const;
    const std::vector<std::string>& identities(const std::string& dataset_id) const;
    // Image count (both variants) of the eligible identities per dataset.
    std::map<std::string, std::size_t> dataset_sizes() const;
    std::size_t identity_count() const;

    const data::ImageRecord& random_image(const std::string& identity_id, data::Variant v, Rng& rng) const;

private:
    const data::DatasetIndex* index_;
    std::map<std::string, std::vector<std::string>> by_dataset_;
};

// Label ~ Bernoulli(authentic_probability); dataset by strategy; identities
// and images uniform within the dataset. Throws ExhaustedDataset when the
// chosen dataset cannot provide the drawn label.
PairSpec draw_training_pair(const PairPool& pool, const DrawStrategy& strategy, double authentic_probability,
                            Rng& rng);

// Per-worker sampler seeded from (base_seed, worker_id); logs draws per dataset.
class TrainingPairSampler {
public:
    TrainingPairSampler(const PairPool& pool, DrawStrategy strategy, double authentic_probability,
                        std::uint64_t base_seed, std::uint64_t worker_id = 0);

    PairSpec next();
    Rng& rng() { return rng_; }
    const DrawStrategy& strategy() const { return strategy_; }
    const std::map<std::string, std::size_t>& dataset_counts() const { return counts_; }

private:
    const PairPool* pool_;
    DrawStrategy strategy_;
    double authentic_probability_;
    Rng rng_;
    std::map<std::string, std::size_t> counts_;
};

struct MiningResult {
    PairSpec pair;
    std::vector<PairSpec> candidates;  // draw order
    std::vector<double> scores;
    std::size_t chosen = 0;
};

// Draws one unmasked reference of `reference_identity` and candidate_count
// masked probes from distinct other identities of the same dataset (reusing
// identities only when fewer exist), and keeps the highest-scoring pair; the
// earliest candidate wins ties. Throws ExhaustedDataset and DomainError.
MiningResult mine_hard_imposter(const std::string& reference_identity, std::size_t candidate_count,
                                const PairScorer& scorer, const PairPool& pool, Rng& rng);

struct BenchmarkPairList {
    std::vector<PairSpec> pairs;
    std::uint64_t seed = 0;
    std::string dataset_id;
    std::string generator;
    std::vector<std::size_t> lines;  // source line per pair when imported

    std::size_t count(Label label) const;
    bool operator==(const BenchmarkPairList& other) const {
        return pairs == other.pairs && seed == other.seed && dataset_id == other.dataset_id &&
               generator == other.generator;
    }
};

inline constexpr std::string_view kPairGenerator = "maskmatch-pairs/1";

// Distinct (reference, probe) tuples available per label, and the number of
// unordered identity pairs that can form an imposter pair in some direction.
struct PairUniverse {
    std::uint64_t authentic = 0;
    std::uint64_t imposter = 0;
    std::uint64_t imposter_identity_pairs = 0;
};
PairUniverse pair_universe(const data::DatasetIndex& index);

// pair_count/2 pairs of each label without repeated (reference, probe)
// tuples, shuffled. The index must hold a single dataset. Throws DomainError
// for odd counts and InsufficientPairs when the universe is too small.
BenchmarkPairList generate_benchmark_pairs(const data::DatasetIndex& index, std::size_t pair_count,
                                           std::uint64_t seed);

// "# seed=<n> generator=<g> dataset_id=<d>" preamble, header
// reference_image_id,probe_image_id,label,dataset_id, label 1 authentic / 0 imposter.
std::string serialize_pair_list(const BenchmarkPairList& list);
BenchmarkPairList parse_pair_list(std::string_view text);
void export_pair_list(const BenchmarkPairList& list, const std::filesystem::path& path);
BenchmarkPairList import_pair_list(const std::filesystem::path& path);

// Checks every pair against the index: known images, unmasked reference,
// masked probe, identity relation matching the label, consistent dataset ids,
// and label balance. Throws PairListFormatError naming the offending line.
void validate_pair_list(const BenchmarkPairList& list, const data::DatasetIndex& index);

}  // namespace maskmatch::pairs
