#pragma once

#include <cstddef>
#include <set>
#include <string>

#include "maskmatch/common/rng.hpp"
#include "maskmatch/data/dataset_index.hpp"
#include "maskmatch/eval/metrics.hpp"
#include "maskmatch/pairs/pair_protocol.hpp"

namespace maskmatch::eval {

struct PrecisionResult {
    double precision = 0.0;
    std::size_t successes = 0;
    std::size_t steps = 0;
    std::size_t imposters_per_step = 0;
};

struct PrecisionOptions {
    std::size_t steps = 400;
    std::size_t imposters_per_step = 19;

    bool operator==(const PrecisionOptions&) const = default;
};

// One-authentic-versus-N-imposters ranking protocol over identities that
// have both variants. Each step draws a reference identity, one unmasked
// reference and one masked authentic probe of it, and imposters_per_step
// identities with replacement from the other validation identities, one
// masked image each. A step succeeds when the authentic similarity is the
// strict maximum. Throws InsufficientIdentities with fewer than two eligible
// identities.
PrecisionResult validation_precision(const pairs::PairScorer& scorer, const pairs::PairPool& validation,
                                     const PrecisionOptions& options, Rng& rng);

// Scores every pair of the list, splitting by label with order preserved.
// Unknown ids and unreadable images raise MissingImage with the pair index.
ScoreSet score_pairs(const pairs::PairScorer& scorer, const pairs::BenchmarkPairList& list,
                     const data::DatasetIndex& index, unsigned workers = 1);

}  // namespace maskmatch::eval
