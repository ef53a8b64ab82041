#pragma once

#include "lexmine/corpus.hpp"
#include "lexmine/dense.hpp"
#include "lexmine/random.hpp"
#include "lexmine/ranking.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace lexmine {

struct MiningConfig {
    std::size_t S = 2;  ///< relevance threshold: rank <= S
    std::size_t L = 20; ///< irrelevance threshold: rank > L
    std::size_t n_random_negatives = 2;
    std::size_t max_hard_negatives = 8;

    /// Throws ConfigError unless 1 <= S <= L.
    void validate() const;
};

struct MinedPassage {
    std::string id;
    std::size_t best_rank = 0;  ///< 1-based, best over the lists that contain it

    bool operator==(const MinedPassage&) const = default;
};

/// Positive and negative passages of one query, each ordered by (best rank, id).
struct MinedSets {
    std::vector<MinedPassage> positives;
    std::vector<MinedPassage> negatives;

    std::vector<std::string> positive_ids() const;
    std::vector<std::string> negative_ids() const;
};

/// Sparse/dense agreement mining.
///
/// With S_x the first S entries and L_x the first L entries of each list:
/// positives are S_s ∩ S_d, negatives are (S_s \ L_d) ∪ (S_d \ L_s).
MinedSets mine_pairs(const RankedList& sparse_top, const RankedList& dense_top, const MiningConfig& cfg);

/// Positives are the top S of a single fused list; negatives are entries ranked below L.
MinedSets mine_fused(const RankedList& fused, const MiningConfig& cfg);

/// Up to n passage ids drawn uniformly from `pool` without replacement,
/// skipping everything in `exclude`.
std::vector<std::string> draw_random_negatives(const Corpus& pool, const std::vector<std::string>& exclude,
                                               std::size_t n, Rng& rng);

/// One sample per mined positive. Hard negatives are the first
/// `max_hard_negatives` mined negatives; random negatives come from `pool`
/// excluding every mined passage.
std::vector<TrainingSample> assemble_mined_sample(const Query& query, const MinedSets& sets, const Corpus& pool,
                                                  Rng& rng, const MiningConfig& cfg);

enum class FusionMode { sum, product };

/// Min-max normalises each list over its own entries (all-equal lists map to
/// 1.0, ids missing from a list count as 0), combines per mode, keeps top k.
RankedList hybrid_fuse(const RankedList& sparse, const RankedList& dense, FusionMode mode, std::size_t k);

struct DatasetRecord {
    TrainingSample sample;
    std::string source;  ///< "mined" or "generated"
};

std::string format_samples_jsonl(const std::vector<TrainingSample>& samples, const std::string& source);
std::vector<DatasetRecord> parse_samples_jsonl(std::string_view text, const std::string& origin = "<string>");

}  // namespace lexmine
