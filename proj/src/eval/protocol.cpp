#include "maskmatch/eval/protocol.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "maskmatch/common/error.hpp"

namespace maskmatch::eval {

using data::ImageRecord;
using data::Variant;

PrecisionResult validation_precision(const pairs::PairScorer& scorer, const pairs::PairPool& validation,
                                     const PrecisionOptions& options, Rng& rng) {
    std::vector<std::string> ids;
    for (const auto& dataset : validation.dataset_ids()) {
        const auto& in_dataset = validation.identities(dataset);
        ids.insert(ids.end(), in_dataset.begin(), in_dataset.end());
    }
    if (ids.size() < 2) {
        throw InsufficientIdentities("validation precision needs two identities with both variants");
    }
    PrecisionResult result;
    result.steps = options.steps;
    result.imposters_per_step = options.imposters_per_step;
    for (std::size_t step = 0; step < options.steps; ++step) {
        const std::size_t ref_pos = rng.uniform_index(ids.size());
        const std::string& ref_id = ids[ref_pos];
        const ImageRecord& reference = validation.random_image(ref_id, Variant::unmasked, rng);
        const ImageRecord& authentic = validation.random_image(ref_id, Variant::masked, rng);
        const double s_auth = scorer.similarity(reference, authentic);
        bool success = true;
        for (std::size_t k = 0; k < options.imposters_per_step; ++k) {
            std::size_t j = rng.uniform_index(ids.size() - 1);
            if (j >= ref_pos) {
                ++j;
            }
            const ImageRecord& probe = validation.random_image(ids[j], Variant::masked, rng);
            // Every imposter is scored so the draw sequence never depends on scores.
            if (scorer.similarity(reference, probe) >= s_auth) {
                success = false;
            }
        }
        result.successes += success ? 1 : 0;
    }
    result.precision =
        result.steps == 0 ? 0.0 : static_cast<double>(result.successes) / static_cast<double>(result.steps);
    return result;
}

ScoreSet score_pairs(const pairs::PairScorer& scorer, const pairs::BenchmarkPairList& list,
                     const data::DatasetIndex& index, unsigned workers) {
    const std::size_t n = list.pairs.size();
    std::vector<double> scores(n, 0.0);
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::optional<std::size_t> failed_at;
    std::string failure;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            const auto& p = list.pairs[i];
            try {
                const ImageRecord* ref = index.find(p.reference);
                const ImageRecord* probe = index.find(p.probe);
                if (ref == nullptr || probe == nullptr) {
                    throw DataError("image id '" + (ref == nullptr ? p.reference : p.probe) + "' not in manifest");
                }
                scores[i] = scorer.similarity(*ref, *probe);
            } catch (const DataError& e) {
                const std::lock_guard lock(error_mutex);
                if (!failed_at || i < *failed_at) {
                    failed_at = i;
                    failure = e.what();
                }
            }
        }
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(work);
        }
    }
    if (failed_at) {
        throw MissingImage(failure, *failed_at);
    }
    ScoreSet out;
    out.provenance.dataset_id = list.dataset_id;
    out.provenance.seed = list.seed;
    for (std::size_t i = 0; i < n; ++i) {
        (list.pairs[i].label == pairs::Label::authentic ? out.authentic : out.imposter).push_back(scores[i]);
    }
    return out;
}

}  // namespace maskmatch::eval
